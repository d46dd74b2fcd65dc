"""Conditional-state equations for a two-level atom driven by one photon.

The joint state of (photon field, atom) conditioned on continuous
measurement is carried by a hierarchy of three 2x2 blocks
(rho11, rho10, rho00); rho01 is always (rho10)^dag and never stored.
P_e, the conditional excitation probability, is the (e,e) entry of rho11.

Measurement layouts supported, all behind one beam splitter with column
weights s11, s21 (|s11|^2 + |s21|^2 = 1):

  QP                   Q homodyne on output 1, P homodyne on output 2
  QQ                   Q homodyne on both outputs
  HomodynePlusCounting Q homodyne on output 1, photon counter on output 2
  TwoCounting          photon counters on both outputs
  SingleHomodyneQ      Q homodyne on output 1, output 2 discarded
  MasterEquationOnly   no measurement (unconditional reference)

The homodyne channels of QP, QQ and SingleHomodyneQ share one bracket,
parameterized by an effective channel weight: c = s11 for output 1, and
c = -i*s21 (QP) or c = s21 (QQ) for output 2.  Counting channels share one
jump bracket whose gain is independent of the splitter; only the firing
rates |s_i1|^2 K_p depend on it.

All steppers are explicit Euler-Maruyama with compensated counting
increments dN = 1{jump} - |s_i1|^2 K_p dt, followed by symmetrization of
rho11 and rho00.  Kernels are batched over a leading axis; the public
single-step functions run a batch of one through the same code.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qcore import (
    BeamSplitter, SystemModel, adjoint, identity, ket_g, lindbladian, slh,
    sigma_minus, sigma_plus, tensor_embed,
)
from .pulse import EPS_W

__all__ = [
    "SCHEME_QP", "SCHEME_QQ", "SCHEME_HP", "SCHEME_PP", "SCHEME_SH", "SCHEME_ME",
    "ALL_SCHEMES", "COUNTING_SCHEMES", "DIFFUSIVE_SCHEMES",
    "FilterState", "MeasurementConfig", "Gains", "ExtendedState",
    "me_rhs", "gains", "counting_rate",
    "step_qp", "step_qq", "step_hp", "step_pp", "step_single_homodyne",
    "pe", "min_eig", "heisenberg_increment",
    "vacuum_filter_step", "reduced_expectation", "extended_parts",
    "EPS_K",
]

EPS_K = 1e-12

SCHEME_QP = "QP"
SCHEME_QQ = "QQ"
SCHEME_HP = "HomodynePlusCounting"
SCHEME_PP = "TwoCounting"
SCHEME_SH = "SingleHomodyneQ"
SCHEME_ME = "MasterEquationOnly"

ALL_SCHEMES = (SCHEME_QP, SCHEME_QQ, SCHEME_HP, SCHEME_PP, SCHEME_SH, SCHEME_ME)
COUNTING_SCHEMES = (SCHEME_HP, SCHEME_PP)
DIFFUSIVE_SCHEMES = (SCHEME_QP, SCHEME_QQ, SCHEME_SH)

_FG_TABLE = {
    SCHEME_QP: (np.diag([1.0, -1.0j]), np.zeros((2, 2))),
    SCHEME_QQ: (np.eye(2), np.zeros((2, 2))),
    SCHEME_HP: (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])),
    SCHEME_PP: (np.zeros((2, 2)), np.eye(2)),
    SCHEME_SH: (np.diag([1.0, 0.0]), np.zeros((2, 2))),
    SCHEME_ME: (np.zeros((2, 2)), np.zeros((2, 2))),
}


def _dag(a: np.ndarray) -> np.ndarray:
    return a.conj().swapaxes(-1, -2)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + _dag(a))


def _btr(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Tr[A rho_b] for a fixed 2x2 A over a (B,2,2) batch."""
    return np.einsum("ij,...ji->...", A, rho)


def _tr(rho: np.ndarray) -> np.ndarray:
    return np.einsum("...ii->...", rho)


@dataclass(frozen=True)
class FilterState:
    """The (rho11, rho10, rho00) block hierarchy; rho01 = rho10^dag on demand."""
    rho11: np.ndarray
    rho10: np.ndarray
    rho00: np.ndarray

    @property
    def rho01(self) -> np.ndarray:
        return _dag(self.rho10)

    @staticmethod
    def initial() -> "FilterState":
        g = np.outer(ket_g(), ket_g().conj())
        return FilterState(g.astype(complex), np.zeros((2, 2), dtype=complex),
                           g.astype(complex))


@dataclass(frozen=True)
class MeasurementConfig:
    """Scheme + splitter, with the documentation (F, G) selection matrices."""
    scheme: str
    splitter: BeamSplitter
    F: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.scheme not in ALL_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose one of {ALL_SCHEMES}")
        F, G = _FG_TABLE[self.scheme]
        object.__setattr__(self, "F", F.astype(complex))
        object.__setattr__(self, "G", G.astype(complex))

    @property
    def s11(self) -> complex:
        return self.splitter.s11

    @property
    def s21(self) -> complex:
        return self.splitter.s21

    @property
    def has_counting(self) -> bool:
        return self.scheme in COUNTING_SCHEMES

    def validate_against(self, model: SystemModel) -> None:
        if self.has_counting and not model.s_is_identity:
            raise ValueError(f"scheme {self.scheme} requires S = I in the system model")


@dataclass(frozen=True)
class Gains:
    """Per-step detector gains.

    k1/k2 are the homodyne gains of the active channels (K1/K2 for QQ, K_h
    for the mixed scheme); kp is the photon-flux gain K_p of the counting
    bracket.  Homodyne gains are real up to rounding of a z + conj(z) sum
    and are returned as reals; kp is clamped at 0.  Unused entries are 0.
    """
    k1: float = 0.0
    k2: float = 0.0
    kp: float = 0.0


class _Ops:
    """Precomputed operators and channel weights for one (model, splitter, scheme)."""

    def __init__(self, model: SystemModel, sb: BeamSplitter, scheme: str):
        self.scheme = scheme
        self.L = model.L
        self.Ld = adjoint(self.L)
        self.LdL = self.Ld @ self.L
        self.S = model.S
        self.Sd = adjoint(self.S)
        self.H = model.H
        self.s_is_identity = model.s_is_identity
        self.h_is_zero = not np.any(model.H)
        s11, s21 = sb.s11, sb.s21
        if scheme == SCHEME_QP:
            self.c1, self.c2 = s11, -1j * s21
        elif scheme == SCHEME_QQ:
            self.c1, self.c2 = s11, s21
        elif scheme in (SCHEME_SH, SCHEME_HP):
            self.c1, self.c2 = s11, 0.0
        else:
            self.c1, self.c2 = 0.0, 0.0
        self.a1 = abs(s11) ** 2
        self.a2 = abs(s21) ** 2


def _liouville(ops: _Ops, rho: np.ndarray) -> np.ndarray:
    """-i[H, rho] + D*_L rho for a (…,2,2) batch."""
    L, Ld, LdL = ops.L, ops.Ld, ops.LdL
    out = L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    if not ops.h_is_zero:
        out = out - 1j * (ops.H @ rho - rho @ ops.H)
    return out


def _drift(ops: _Ops, r11, r10, r00, r01, xi: complex):
    """Unconditional (measurement-averaged) time derivatives of the blocks.

    The S = I case is the published three-block master-equation hierarchy;
    for general S the xi terms acquire S factors and rho11 gains a
    (S rho00 S^dag - rho00)|xi|^2 scattering term.
    """
    L, Ld = ops.L, ops.Ld
    d11 = _liouville(ops, r11)
    d10 = _liouville(ops, r10)
    d00 = _liouville(ops, r00)
    if xi != 0:
        xc = np.conj(xi)
        if ops.s_is_identity:
            d11 = d11 + xi * (r01 @ Ld - Ld @ r01) + xc * (L @ r10 - r10 @ L)
            d10 = d10 + xi * (r00 @ Ld - Ld @ r00)
        else:
            S, Sd = ops.S, ops.Sd
            Sr01 = S @ r01
            r10Sd = r10 @ Sd
            d11 = (d11 + xi * (Sr01 @ Ld - Ld @ Sr01)
                   + xc * (L @ r10Sd - r10Sd @ L)
                   + (xi * xc) * (S @ r00 @ Sd - r00))
            Sr00 = S @ r00
            d10 = d10 + xi * (Sr00 @ Ld - Ld @ Sr00)
    return d11, d10, d00


def _homodyne_gain(ops: _Ops, c: complex, r11, r10, r01, xi: complex) -> np.ndarray:
    """Re{ c Tr[L r11] + c* Tr[L† r11] + c Tr[S r01] xi + c* Tr[S† r10] xi* }."""
    k = c * _btr(ops.L, r11) + np.conj(c) * _btr(ops.Ld, r11)
    if xi != 0:
        k = k + c * _btr(ops.S, r01) * xi + np.conj(c) * _btr(ops.Sd, r10) * np.conj(xi)
    return np.real(k)


def _homodyne_brackets(ops: _Ops, c: complex, r11, r10, r01, r00, xi: complex):
    """Diffusion brackets of all three blocks for channel weight c, plus the gain."""
    L, Ld, S = ops.L, ops.Ld, ops.S
    cc = np.conj(c)
    k = _homodyne_gain(ops, c, r11, r10, r01, xi)
    kb = k[..., None, None]
    b11 = cc * (r11 @ Ld) + c * (L @ r11) - kb * r11
    b10 = cc * (r10 @ Ld) + c * (L @ r10) - kb * r10
    b00 = cc * (r00 @ Ld) + c * (L @ r00) - kb * r00
    if xi != 0:
        xc = np.conj(xi)
        Sr = r10 @ ops.Sd if not ops.s_is_identity else r10
        Sc = S @ r01 if not ops.s_is_identity else r01
        b11 = b11 + cc * xc * Sr + c * xi * Sc
        b10 = b10 + c * xi * (S @ r00 if not ops.s_is_identity else r00)
    return b11, b10, b00, k


def counting_rate(ops_or_model, st_or_blocks=None, xi: complex = 0.0):
    """K_p = Tr[L†L rho11] + Tr[L† rho01] xi + Tr[L rho10] xi* + Tr[rho00] |xi|^2.

    Real and clamped at 0 (trace of a positive operator in exact
    arithmetic).  Accepts (_Ops, (r11, r10, r01, r00)) batches internally
    or (SystemModel, FilterState) from callers.
    """
    if isinstance(ops_or_model, SystemModel):
        model, st = ops_or_model, st_or_blocks
        ops = _Ops(model, BeamSplitter(1, 0, 0, 1), SCHEME_PP)
        blocks = (st.rho11[None], st.rho10[None], st.rho01[None], st.rho00[None])
        return float(_counting_rate(ops, *blocks, xi)[0])
    return _counting_rate(ops_or_model, *st_or_blocks, xi)


def _counting_rate(ops: _Ops, r11, r10, r01, r00, xi: complex) -> np.ndarray:
    kp = _btr(ops.LdL, r11)
    if xi != 0:
        kp = kp + _btr(ops.Ld, r01) * xi + _btr(ops.L, r10) * np.conj(xi) \
            + _tr(r00) * (xi * np.conj(xi))
    return np.maximum(np.real(kp), 0.0)


def _jump_numerators(ops: _Ops, r11, r10, r00, r01, xi: complex):
    """Unnormalized post-click blocks; Tr of the rho11 numerator is exactly K_p."""
    L, Ld = ops.L, ops.Ld
    n11 = L @ r11 @ Ld
    n10 = L @ r10 @ Ld
    n00 = L @ r00 @ Ld
    if xi != 0:
        xc = np.conj(xi)
        n11 = n11 + xi * (r01 @ Ld) + xc * (L @ r10) + (xi * xc) * r00
        n10 = n10 + xi * (r00 @ Ld)
    return n11, n10, n00


def _diffusive_kernel(ops: _Ops, r11, r10, r00, xi, dW1, dW2, dt):
    """Euler-Maruyama step shared by QP / QQ / SingleHomodyneQ batches.

    dW2 may be None (channel 2 unobserved) and the channel is skipped
    outright when its weight is 0, so boundary cases match bitwise.
    """
    r01 = _dag(r10)
    d11, d10, d00 = _drift(ops, r11, r10, r00, r01, xi)
    n11 = r11 + dt * d11
    n10 = r10 + dt * d10
    n00 = r00 + dt * d00
    b11, b10, b00, k1 = _homodyne_brackets(ops, ops.c1, r11, r10, r01, r00, xi)
    w1 = dW1[..., None, None]
    n11 = n11 + b11 * w1
    n10 = n10 + b10 * w1
    n00 = n00 + b00 * w1
    if dW2 is not None and ops.c2 != 0:
        b11, b10, b00, k2 = _homodyne_brackets(ops, ops.c2, r11, r10, r01, r00, xi)
        w2 = dW2[..., None, None]
        n11 = n11 + b11 * w2
        n10 = n10 + b10 * w2
        n00 = n00 + b00 * w2
    else:
        k2 = np.zeros_like(k1)
    return _sym(n11), n10, _sym(n00), k1, k2


def _counting_kernel(ops: _Ops, r11, r10, r00, xi, dW1, jump1, jump2, dt):
    """Euler-Maruyama step for HomodynePlusCounting / TwoCounting batches.

    HomodynePlusCounting: dW1 drives the homodyne channel (weight c1) and
    jump2 the counter behind |s21|^2.  TwoCounting: dW1 is None and both
    jump flags drive the shared bracket behind |s11|^2, |s21|^2.  Counting
    increments are compensated: dN_i = 1{jump_i} - |s_i1|^2 K_p dt.
    """
    r01 = _dag(r10)
    d11, d10, d00 = _drift(ops, r11, r10, r00, r01, xi)
    n11 = r11 + dt * d11
    n10 = r10 + dt * d10
    n00 = r00 + dt * d00
    if dW1 is not None:
        b11, b10, b00, k1 = _homodyne_brackets(ops, ops.c1, r11, r10, r01, r00, xi)
        w1 = dW1[..., None, None]
        n11 = n11 + b11 * w1
        n10 = n10 + b10 * w1
        n00 = n00 + b00 * w1
    else:
        k1 = np.zeros(r11.shape[:-2])
    kp = _counting_rate(ops, r11, r10, r01, r00, xi)
    live = kp > EPS_K
    if jump1 is not None and np.any(jump1 & ~live):
        raise ValueError("jump requested on channel 1 while K_p <= EPS_K")
    if jump2 is not None and np.any(jump2 & ~live):
        raise ValueError("jump requested on channel 2 while K_p <= EPS_K")
    arate = 0.0
    events = np.zeros(r11.shape[:-2])
    if jump1 is not None:  # TwoCounting only
        arate += ops.a1
        events = events + np.where(jump1, 1.0, 0.0)
    if jump2 is not None and ops.a2 != 0:
        arate += ops.a2
        events = events + np.where(jump2, 1.0, 0.0)
    if arate == 0.0:
        return _sym(n11), n10, _sym(n00), k1, kp
    # shared bracket (N/K_p - rho) scaled by dN = events - arate*K_p*dt,
    # skipped wholesale where K_p has underflowed
    j11, j10, j00 = _jump_numerators(ops, r11, r10, r00, r01, xi)
    safe = np.where(live, kp, 1.0)[..., None, None]
    dn = np.where(live, events - arate * kp * dt, 0.0)[..., None, None]
    n11 = n11 + (j11 / safe - r11) * dn
    n10 = n10 + (j10 / safe - r10) * dn
    n00 = n00 + (j00 / safe - r00) * dn
    return _sym(n11), n10, _sym(n00), k1, kp


def me_rhs(model: SystemModel, st: FilterState, xi: complex):
    """Right-hand side of the unconditional three-block master equation.

    Returns (rho11_dot, rho10_dot, rho00_dot).  Restricted to S = I, where
    the hierarchy takes its published form; the steppers carry the general
    S drift internally.
    """
    if not model.s_is_identity:
        raise ValueError(
            "me_rhs is defined for S = I; the general-S unconditional drift is only "
            "reachable through the steppers (their average over records)")
    ops = _Ops(model, BeamSplitter(1, 0, 0, 1), SCHEME_ME)
    d11, d10, d00 = _drift(ops, st.rho11[None], st.rho10[None], st.rho00[None],
                           st.rho01[None], xi)
    return d11[0], d10[0], d00[0]


def gains(config: MeasurementConfig, model: SystemModel, st: FilterState,
          xi: complex) -> Gains:
    """Detector gains of the configured scheme at the current state."""
    config.validate_against(model)
    ops = _Ops(model, config.splitter, config.scheme)
    r11, r10, r00 = st.rho11[None], st.rho10[None], st.rho00[None]
    r01 = _dag(r10)
    k1 = k2 = kp = 0.0
    if config.scheme in (SCHEME_QP, SCHEME_QQ):
        k1 = float(_homodyne_gain(ops, ops.c1, r11, r10, r01, xi)[0])
        k2 = float(_homodyne_gain(ops, ops.c2, r11, r10, r01, xi)[0])
    elif config.scheme in (SCHEME_SH, SCHEME_HP):
        k1 = float(_homodyne_gain(ops, ops.c1, r11, r10, r01, xi)[0])
    if config.has_counting:
        kp = float(_counting_rate(ops, r11, r10, r01, r00, xi)[0])
    return Gains(k1=k1, k2=k2, kp=kp)


def _unbatch(model, sb, scheme, st):
    ops = _Ops(model, sb, scheme)
    return ops, st.rho11[None], st.rho10[None], st.rho00[None]


def step_qp(model: SystemModel, st: FilterState, xi: complex, dW1: float,
            dW2: float, dt: float, sb: BeamSplitter) -> FilterState:
    """One Q-P two-homodyne step conditioned on innovations (dW1, dW2)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    ops, r11, r10, r00 = _unbatch(model, sb, SCHEME_QP, st)
    n11, n10, n00, _, _ = _diffusive_kernel(
        ops, r11, r10, r00, xi, np.array([dW1]), np.array([dW2]), dt)
    return FilterState(n11[0], n10[0], n00[0])


def step_qq(model: SystemModel, st: FilterState, xi: complex, dW1: float,
            dW2: float, dt: float, sb: BeamSplitter) -> FilterState:
    """One Q-Q two-homodyne step; channel-2 weight s21 instead of -i s21."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    ops, r11, r10, r00 = _unbatch(model, sb, SCHEME_QQ, st)
    n11, n10, n00, _, _ = _diffusive_kernel(
        ops, r11, r10, r00, xi, np.array([dW1]), np.array([dW2]), dt)
    return FilterState(n11[0], n10[0], n00[0])


def step_single_homodyne(model: SystemModel, st: FilterState, xi: complex,
                         dW1: float, dt: float, sb: BeamSplitter) -> FilterState:
    """One step observing only the Q quadrature of output 1."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    ops, r11, r10, r00 = _unbatch(model, sb, SCHEME_SH, st)
    n11, n10, n00, _, _ = _diffusive_kernel(
        ops, r11, r10, r00, xi, np.array([dW1]), None, dt)
    return FilterState(n11[0], n10[0], n00[0])


def step_hp(model: SystemModel, st: FilterState, xi: complex, dW: float,
            jump: bool, dt: float, sb: BeamSplitter) -> FilterState:
    """One homodyne-plus-counting step; jump marks a detection on output 2."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not model.s_is_identity:
        raise ValueError("counting schemes require S = I")
    ops, r11, r10, r00 = _unbatch(model, sb, SCHEME_HP, st)
    n11, n10, n00, _, _ = _counting_kernel(
        ops, r11, r10, r00, xi, np.array([dW]), None, np.array([bool(jump)]), dt)
    return FilterState(n11[0], n10[0], n00[0])


def step_pp(model: SystemModel, st: FilterState, xi: complex, jump1: bool,
            jump2: bool, dt: float, sb: BeamSplitter) -> FilterState:
    """One two-counter step; at most one of the jump flags may be set."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not model.s_is_identity:
        raise ValueError("counting schemes require S = I")
    if jump1 and jump2:
        raise ValueError("simultaneous jumps on both channels are O(dt^2) events; "
                         "the thinning sampler never produces them")
    ops, r11, r10, r00 = _unbatch(model, sb, SCHEME_PP, st)
    n11, n10, n00, _, _ = _counting_kernel(
        ops, r11, r10, r00, xi, None, np.array([bool(jump1)]),
        np.array([bool(jump2)]), dt)
    return FilterState(n11[0], n10[0], n00[0])


def pe(st: FilterState, clamp: bool = True) -> float:
    """Conditional excitation probability <e|rho11|e>, clamped for reporting."""
    v = float(np.real(st.rho11[1, 1]))
    return min(max(v, 0.0), 1.0) if clamp else v


def min_eig(rho: np.ndarray) -> np.ndarray:
    """Smaller eigenvalue of a (…,2,2) Hermitian batch, in closed form."""
    tr = np.real(np.einsum("...ii->...", rho))
    det = np.real(rho[..., 0, 0] * rho[..., 1, 1] - rho[..., 0, 1] * rho[..., 1, 0])
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    return 0.5 * (tr - disc)


# ---------------------------------------------------------------------------
# Heisenberg-picture increments (the duality face of the steppers)

def _pi_maps(st: FilterState):
    """pi^{jk}(A) = Tr[(rho^{jk})^dag A] as closures over the current blocks."""
    r11d, r10d, r00d = _dag(st.rho11), _dag(st.rho10), _dag(st.rho00)
    r01d = st.rho10  # (rho01)^dag
    return (
        lambda A: np.trace(r11d @ A),
        lambda A: np.trace(r10d @ A),
        lambda A: np.trace(r01d @ A),
        lambda A: np.trace(r00d @ A),
    )


def heisenberg_increment(config: MeasurementConfig, model: SystemModel,
                         st: FilterState, X: np.ndarray, xi: complex,
                         increments: dict, sb: BeamSplitter | None = None,
                         mn: str = "11") -> complex:
    """One-step increment of pi^{mn}(X) in the Heisenberg picture.

    increments carries dt plus whatever the scheme consumes: dW1, dW2 for
    the homodyne channels, jump1/jump2 flags for counters.  The value
    equals Tr[(delta rho^{mn})^dag X] of the matching state stepper driven
    by the same numbers (the two pictures are trace duals).
    """
    if mn not in ("11", "10", "00"):
        raise ValueError("mn must be one of '11', '10', '00'")
    sb = sb if sb is not None else config.splitter
    scheme = config.scheme
    ops = _Ops(model, sb, scheme)
    p11, p10, p01, p00 = _pi_maps(st)
    L, Ld, S, Sd = ops.L, ops.Ld, ops.S, ops.Sd
    dt = float(increments["dt"])
    xc = np.conj(xi)
    G = slh(model.S, model.L, model.H)

    lx = lindbladian(G, X)
    if mn == "11":
        d = p11(lx)
        if xi != 0:
            d += p01(Sd @ (X @ L - L @ X)) * xc + p10((Ld @ X - X @ Ld) @ S) * xi
            if not ops.s_is_identity:
                d += p00(Sd @ X @ S - X) * (xi * xc)
    elif mn == "10":
        d = p10(lx)
        if xi != 0:
            d += p00(Sd @ (X @ L - L @ X)) * xc
    else:
        d = p00(lx)
    out = d * dt

    def hom_bracket(c):
        cc = np.conj(c)
        k = c * p11(L) + cc * p11(Ld) + c * p10(S) * xi + cc * p01(Sd) * xc
        k = np.real(k)
        if mn == "11":
            return (c * p11(X @ L) + cc * p11(Ld @ X) + c * p10(X @ S) * xi
                    + cc * p01(Sd @ X) * xc - p11(X) * k)
        if mn == "10":
            return (c * p10(X @ L) + cc * p10(Ld @ X)
                    + cc * p00(Sd @ X) * xc - p10(X) * k)
        return c * p00(X @ L) + cc * p00(Ld @ X) - p00(X) * k

    if scheme in (SCHEME_QP, SCHEME_QQ, SCHEME_SH):
        out += hom_bracket(ops.c1) * float(increments.get("dW1", 0.0))
        if scheme != SCHEME_SH:
            out += hom_bracket(ops.c2) * float(increments.get("dW2", 0.0))
        return complex(out)

    if scheme == SCHEME_HP:
        out += hom_bracket(ops.c1) * float(increments.get("dW1", 0.0))

    if scheme in (SCHEME_HP, SCHEME_PP):
        kp = np.real(p11(ops.LdL) + p01(L) * xc + p10(Ld) * xi + p00(identity()) * xi * xc)
        kp = max(kp, 0.0)
        if kp > EPS_K:
            if mn == "11":
                num = p11(Ld @ X @ L) + p01(X @ L) * xc + p10(Ld @ X) * xi \
                    + p00(X) * (xi * xc)
                base = p11(X)
            elif mn == "10":
                num = p10(Ld @ X @ L) + p00(X @ L) * xc
                base = p10(X)
            else:
                num = p00(Ld @ X @ L)
                base = p00(X)
            bracket = num / kp - base
            if scheme == SCHEME_HP:
                dn = (1.0 if increments.get("jump2", False) else 0.0) - ops.a2 * kp * dt
                out += bracket * dn
            else:
                dn1 = (1.0 if increments.get("jump1", False) else 0.0) - ops.a1 * kp * dt
                dn2 = (1.0 if increments.get("jump2", False) else 0.0) - ops.a2 * kp * dt
                out += bracket * (dn1 + dn2)
        elif increments.get("jump1", False) or increments.get("jump2", False):
            raise ValueError("jump requested while K_p <= EPS_K")
        return complex(out)

    return complex(out)  # MasterEquationOnly: drift alone


# ---------------------------------------------------------------------------
# Extended-system (ancilla x system) vacuum filter, the independent oracle

@dataclass(frozen=True)
class ExtendedState:
    """Conditional state of the 4-dim ancilla (x) system vacuum filter."""
    rho: np.ndarray

    @staticmethod
    def initial() -> "ExtendedState":
        r = np.zeros((4, 4), dtype=complex)
        r[2, 2] = 1.0  # |up, g>: ancilla excited, atom ground
        return ExtendedState(r)


_A_MN = {
    "00": sigma_plus() @ sigma_minus(),
    "01": sigma_plus(),
    "10": sigma_minus(),
    "11": identity(),
}


def extended_parts(model: SystemModel, sb: BeamSplitter):
    """Constant pieces of the extended coupling and Hamiltonian.

    L_tot(lambda) = I(x)L + lambda sigma_-(x)S; the measured operators are
    c1 = s11 L_tot and c2 = -i s21 L_tot; H_tot(lambda) = I(x)H + the
    operator imaginary part of lambda sigma_-(x)(L^dag S).
    """
    I2 = identity()
    A = tensor_embed(I2, model.L)
    B = tensor_embed(sigma_minus(), model.S)
    C = tensor_embed(sigma_minus(), adjoint(model.L) @ model.S)
    H0 = tensor_embed(I2, model.H)
    return A, B, C, H0, sb.s11, sb.s21


def vacuum_filter_step(ext: ExtendedState, c_ops, H_tot: np.ndarray,
                       dW, dt: float) -> ExtendedState:
    """Diffusive vacuum filter step on the extended space.

    d rho = L* rho dt + sum_i (c_i rho + rho c_i^dag - Tr[(c_i+c_i^dag) rho] rho) dW_i
    with L* built from H_tot and the dissipators of every c_i.  The
    quadrature covariance is the identity; a non-square or rank-deficient
    set of increments is rejected.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if len(dW) != len(c_ops):
        raise ValueError("one increment per measured operator is required "
                         "(unit-variance quadratures; singular covariance unsupported)")
    rho = ext.rho
    new = rho - 1j * dt * (H_tot @ rho - rho @ H_tot)
    for c, w in zip(c_ops, dW):
        cd = adjoint(c)
        cdc = cd @ c
        new = new + dt * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
        g = np.real(np.trace(c @ rho) + np.trace(rho @ cd))
        new = new + (c @ rho + rho @ cd - g * rho) * w
    return ExtendedState(_sym(new))


def reduced_expectation(ext: ExtendedState, mn: str, X: np.ndarray, w: float) -> complex:
    """pi^{mn}(X) extracted from the extended state.

    Divides Tr[rho^dag (A_mn (x) X)] by d_mn with d = [[w, sqrt(w)],
    [sqrt(w), 1]]; extraction of the mn != 11 blocks is singular once the
    remaining pulse weight w has been exhausted.
    """
    if mn not in _A_MN:
        raise ValueError("mn must be one of '00', '01', '10', '11'")
    if mn != "11" and w <= EPS_W:
        raise ValueError(f"pi^{mn} extraction requires remaining weight w > {EPS_W}")
    d = {"00": w, "01": np.sqrt(w), "10": np.sqrt(w), "11": 1.0}[mn]
    return complex(np.trace(_dag(ext.rho) @ np.kron(_A_MN[mn], X)) / d)
