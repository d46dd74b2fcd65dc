"""Trajectory integration, master-equation reference, and ensemble statistics.

Trajectories integrate in fixed chunks of 256 on a shared time grid; each
trajectory draws its noise from its own (master_seed, index) stream, so
results never depend on chunking, worker count, or scheduling.  The
reduction over chunks is ordered by index, which makes ensemble means
bit-reproducible.

The extended-system comparison (oracle_compare) replays the measurement
record of a reduced two-homodyne filter through the 4-dim vacuum filter of
the ancilla synthesizer model and reports the pathwise deviation of the
excitation probability; agreement is pure discretization error.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .qcore import BeamSplitter, SystemModel, adjoint, beam_splitter, identity, \
    sigma_minus, sigma_plus
from .pulse import PulseShape
from .stochastic import IncrementRecord, derive_stream, draw_increments
from .filters import (
    EPS_K, SCHEME_HP, SCHEME_ME, SCHEME_PP, SCHEME_QP, SCHEME_QQ, SCHEME_SH,
    ExtendedState, FilterState, MeasurementConfig, _counting_rate, _dag,
    counting_rate,
    _diffusive_kernel, _counting_kernel, _drift, _Ops, extended_parts,
    heisenberg_increment, min_eig, reduced_expectation, step_hp, step_pp,
    step_qp, step_qq, step_single_homodyne, vacuum_filter_step,
)

__all__ = [
    "SimulationConfig", "MasterSolution", "TrajectoryRecord", "EnsembleResult",
    "ExceedanceStats", "solve_master", "run_trajectory", "run_ensemble",
    "exceedance_fraction", "wilson_interval", "oracle_compare", "duality_scan",
    "CHUNK_SIZE",
]

CHUNK_SIZE = 256
TRACE_FLAG_TOL = 1e-2
NEG_FLAG_TOL = -1e-6
JUMP_BOUND = 0.1  # same first-order thinning bound as stochastic.jump_decision


@dataclass(frozen=True)
class SimulationConfig:
    """Everything one run needs; validated on construction."""
    model: SystemModel
    pulse: PulseShape
    measurement: MeasurementConfig
    dt: float = 1e-3
    T: float = 10.0
    master_seed: int = 7
    n_traj: int = 64
    thresholds: tuple = (0.9,)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.T <= 0:
            raise ValueError("T must be > 0")
        if self.n_traj < 1:
            raise ValueError("trajectories must be >= 1")
        if self.master_seed < 0:
            raise ValueError("seed must be >= 0")
        for th in self.thresholds:
            if not 0.0 < th < 1.0:
                raise ValueError("thresholds must lie in (0, 1)")
        self.measurement.validate_against(self.model)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class MasterSolution:
    """Unconditional reference path from classical RK4 on the same grid."""
    t: np.ndarray
    pe: np.ndarray
    blocks: np.ndarray  # (n+1, 3, 2, 2): rho11, rho10, rho00

    @property
    def max_pe(self) -> float:
        return float(np.max(self.pe))


@dataclass(frozen=True)
class TrajectoryRecord:
    t: np.ndarray
    pe: np.ndarray
    trace_rho11: np.ndarray
    min_eig: np.ndarray
    jump1: np.ndarray  # per-grid-point click flags (step ending at that time)
    jump2: np.ndarray
    increments: IncrementRecord
    diagnostics: dict

    @property
    def jump1_times(self) -> np.ndarray:
        return self.t[self.jump1 > 0]

    @property
    def jump2_times(self) -> np.ndarray:
        return self.t[self.jump2 > 0]


@dataclass(frozen=True)
class EnsembleResult:
    t: np.ndarray
    mean_pe: np.ndarray
    me_pe: np.ndarray
    member_max_pe: np.ndarray
    n_traj: int
    members_pe: np.ndarray | None  # first K member paths when requested
    jump1_flags: list  # per member: indices into t where channel 1 clicked
    jump2_flags: list
    diagnostics: list


@dataclass(frozen=True)
class ExceedanceStats:
    threshold: float
    fraction: float
    n_exceed: int
    n: int
    ci_low: float
    ci_high: float


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    """Wilson 95% score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be >= 1")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _xi_grid(pulse: PulseShape, t: np.ndarray):
    return np.asarray(pulse.xi(t), dtype=complex)


def solve_master(config: SimulationConfig) -> MasterSolution:
    """Classical RK4 integration of the unconditional block hierarchy."""
    if not config.model.s_is_identity:
        raise ValueError("the unconditional reference is defined for S = I")
    n = config.n_steps
    dt = config.dt
    t = config.grid()
    xi_full = _xi_grid(config.pulse, t)
    xi_half = _xi_grid(config.pulse, t[:-1] + dt / 2)
    ops = _Ops(config.model, BeamSplitter(1, 0, 0, 1), SCHEME_ME)

    def rhs(r11, r10, r00, xi):
        return _drift(ops, r11, r10, r00, _dag(r10), xi)

    st = FilterState.initial()
    r11, r10, r00 = st.rho11, st.rho10, st.rho00
    blocks = np.empty((n + 1, 3, 2, 2), dtype=complex)
    pe = np.empty(n + 1)
    for k in range(n + 1):
        blocks[k, 0], blocks[k, 1], blocks[k, 2] = r11, r10, r00
        pe[k] = np.real(r11[1, 1])
        if k == n:
            break
        a = rhs(r11, r10, r00, xi_full[k])
        b = rhs(r11 + 0.5 * dt * a[0], r10 + 0.5 * dt * a[1], r00 + 0.5 * dt * a[2],
                xi_half[k])
        c = rhs(r11 + 0.5 * dt * b[0], r10 + 0.5 * dt * b[1], r00 + 0.5 * dt * b[2],
                xi_half[k])
        d = rhs(r11 + dt * c[0], r10 + dt * c[1], r00 + dt * c[2], xi_full[k + 1])
        r11 = r11 + dt / 6 * (a[0] + 2 * b[0] + 2 * c[0] + d[0])
        r10 = r10 + dt / 6 * (a[1] + 2 * b[1] + 2 * c[1] + d[1])
        r00 = r00 + dt / 6 * (a[2] + 2 * b[2] + 2 * c[2] + d[2])
    return MasterSolution(t=t, pe=pe, blocks=blocks)


def _initial_batch(B: int):
    r11 = np.zeros((B, 2, 2), dtype=complex)
    r11[:, 0, 0] = 1.0
    return r11, np.zeros((B, 2, 2), dtype=complex), r11.copy()


def _integrate_batch(config: SimulationConfig, indices, store_series: bool,
                     store_increments: bool):
    """Integrate one batch of trajectories in lockstep.

    Returns a dict of batch arrays.  Every kernel call is per-member
    independent, so the outputs for index i do not depend on which batch i
    rode in.
    """
    scheme = config.measurement.scheme
    B = len(indices)
    n = config.n_steps
    dt = config.dt
    t = config.grid()
    ops = _Ops(config.model, config.measurement.splitter, scheme)
    xi = _xi_grid(config.pulse, t)

    if scheme == SCHEME_ME:
        ref = solve_master(config)
        tr_ref = np.real(np.trace(ref.blocks[:, 0], axis1=1, axis2=2))
        ev_ref = min_eig(ref.blocks[:, 0])
        empty = IncrementRecord(dt=dt, dW=np.zeros((0, 2)), uniforms=np.zeros(0))
        return {
            "pe": np.tile(np.clip(ref.pe, 0.0, 1.0), (B, 1)),
            "trace": np.tile(tr_ref, (B, 1)),
            "mineig": np.tile(ev_ref, (B, 1)),
            "jump1": np.zeros((B, n + 1), dtype=bool),
            "jump2": np.zeros((B, n + 1), dtype=bool),
            "increments": [empty] * B,
            "diagnostics": [_diagnose(int(i), tr_ref, ev_ref, None) for i in indices],
        }

    recs = [draw_increments(derive_stream(config.master_seed, int(i)), n, dt)
            for i in indices]
    dW = np.stack([r.dW for r in recs])        # (B, n, 2)
    UU = np.stack([r.uniforms for r in recs])  # (B, n)

    r11, r10, r00 = _initial_batch(B)
    pe = np.empty((B, n + 1))
    trace = np.empty((B, n + 1))
    mineig = np.empty((B, n + 1))
    jump1 = np.zeros((B, n + 1), dtype=bool)
    jump2 = np.zeros((B, n + 1), dtype=bool)

    def record(k):
        pe[:, k] = np.clip(np.real(r11[:, 1, 1]), 0.0, 1.0)
        trace[:, k] = np.real(np.einsum("bii->b", r11))
        mineig[:, k] = min_eig(r11)

    record(0)
    nonfinite_at = np.full(B, -1, dtype=int)
    for k in range(n):
        x = complex(xi[k])
        if scheme in (SCHEME_QP, SCHEME_QQ):
            r11, r10, r00, _, _ = _diffusive_kernel(
                ops, r11, r10, r00, x, dW[:, k, 0], dW[:, k, 1], dt)
        elif scheme == SCHEME_SH:
            r11, r10, r00, _, _ = _diffusive_kernel(
                ops, r11, r10, r00, x, dW[:, k, 0], None, dt)
        elif scheme == SCHEME_HP:
            j2 = _thin_one(ops, r11, r10, r00, x, UU[:, k], dt)
            jump2[:, k + 1] = j2
            r11, r10, r00, _, _ = _counting_kernel(
                ops, r11, r10, r00, x, dW[:, k, 0], None, j2, dt)
        else:  # TwoCounting
            j1, j2 = _thin_two(ops, r11, r10, r00, x, UU[:, k], dt)
            jump1[:, k + 1] = j1
            jump2[:, k + 1] = j2
            r11, r10, r00, _, _ = _counting_kernel(
                ops, r11, r10, r00, x, None, j1, j2, dt)
        record(k + 1)
        bad = (nonfinite_at < 0) & ~np.isfinite(trace[:, k + 1])
        if np.any(bad):
            nonfinite_at[bad] = k + 1

    out = {
        "pe": pe, "trace": trace, "mineig": mineig,
        "jump1": jump1, "jump2": jump2,
        "increments": recs if store_increments else None,
        "diagnostics": [
            _diagnose(int(indices[b]), trace[b], mineig[b],
                      None if nonfinite_at[b] < 0 else t[nonfinite_at[b]])
            for b in range(B)
        ],
    }
    if not store_series:
        out["trace"] = None
        out["mineig"] = None
    return out


def _thin_one(ops, r11, r10, r00, x, u, dt):
    kp = _counting_rate(ops, r11, r10, _dag(r10), r00, x)
    p2 = np.where(kp > EPS_K, ops.a2 * kp * dt, 0.0)
    if np.any(p2 >= JUMP_BOUND):
        raise ValueError("jump probability per step exceeds the thinning bound; reduce dt")
    return u < p2


def _thin_two(ops, r11, r10, r00, x, u, dt):
    kp = _counting_rate(ops, r11, r10, _dag(r10), r00, x)
    live = kp > EPS_K
    p1 = np.where(live, ops.a1 * kp * dt, 0.0)
    p2 = np.where(live, ops.a2 * kp * dt, 0.0)
    if np.any(p1 + p2 >= JUMP_BOUND):
        raise ValueError("jump probability per step exceeds the thinning bound; reduce dt")
    j1 = u < p1
    j2 = ~j1 & (u < p1 + p2)
    return j1, j2


def _diagnose(index, trace, mineig, nonfinite_time):
    finite = np.isfinite(trace)
    drift = float(np.max(np.abs(trace[finite] - 1.0))) if np.any(finite) else np.inf
    mfin = np.isfinite(mineig)
    mmin = float(np.min(mineig[mfin])) if np.any(mfin) else np.nan
    flags = []
    if nonfinite_time is not None:
        flags.append(f"nonfinite state from t={nonfinite_time:.6g}")
    if drift > TRACE_FLAG_TOL:
        flags.append(f"trace drift {drift:.3g} exceeds {TRACE_FLAG_TOL}")
    if mmin < NEG_FLAG_TOL:
        flags.append(f"min eigenvalue {mmin:.3g} below {NEG_FLAG_TOL}")
    return {
        "index": index,
        "max_trace_drift": drift,
        "min_eigenvalue": mmin,
        "nonfinite_at": nonfinite_time,
        "flags": flags,
    }


def run_trajectory(config: SimulationConfig, index: int) -> TrajectoryRecord:
    """One trajectory, fully recorded and replayable."""
    if index < 0:
        raise ValueError("index must be >= 0")
    out = _integrate_batch(config, np.array([index]), store_series=True,
                           store_increments=True)
    for f in out["diagnostics"][0]["flags"]:
        warnings.warn(f"trajectory {index}: {f}", stacklevel=2)
    return TrajectoryRecord(
        t=config.grid(), pe=out["pe"][0], trace_rho11=out["trace"][0],
        min_eig=out["mineig"][0],
        jump1=out["jump1"][0].astype(int), jump2=out["jump2"][0].astype(int),
        increments=out["increments"][0], diagnostics=out["diagnostics"][0])


def run_ensemble(config: SimulationConfig, workers: int = 1,
                 keep_members: int = 0) -> EnsembleResult:
    """N independent trajectories; statistics reduced in index order.

    keep_members retains the first K excitation paths for plotting or
    member-level tests.  Worker threads only spread chunks; results are
    identical for any worker count.
    """
    N = config.n_traj
    n = config.n_steps
    chunks = [np.arange(lo, min(lo + CHUNK_SIZE, N))
              for lo in range(0, N, CHUNK_SIZE)]

    def work(idx):
        return _integrate_batch(config, idx, store_series=False,
                                store_increments=False)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    pe_sum = np.zeros(n + 1)
    member_max = np.empty(N)
    members = [] if keep_members > 0 else None
    jump1_flags, jump2_flags, diagnostics = [], [], []
    pos = 0
    for out in results:  # chunk order = index order, regardless of scheduling
        pe = out["pe"]
        pe_sum += pe.sum(axis=0)
        B = pe.shape[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-nan member rows
            member_max[pos:pos + B] = np.nanmax(pe, axis=1)
        if members is not None and pos < keep_members:
            members.append(pe[:max(0, keep_members - pos)])
        for b in range(B):
            jump1_flags.append(np.flatnonzero(out["jump1"][b]))
            jump2_flags.append(np.flatnonzero(out["jump2"][b]))
        diagnostics.extend(out["diagnostics"])
        pos += B
    flagged = [d for d in diagnostics if d["flags"]]
    if flagged:  # one aggregate line; per-member detail stays in diagnostics
        warnings.warn(
            f"{len(flagged)} of {N} trajectories raised diagnostic flags "
            "(see EnsembleResult.diagnostics)", stacklevel=2)
    me = solve_master(config)
    return EnsembleResult(
        t=config.grid(), mean_pe=pe_sum / N, me_pe=me.pe,
        member_max_pe=member_max, n_traj=N,
        members_pe=np.concatenate(members, axis=0) if members else None,
        jump1_flags=jump1_flags, jump2_flags=jump2_flags,
        diagnostics=diagnostics)


def exceedance_fraction(result: EnsembleResult, threshold: float) -> ExceedanceStats:
    """Fraction of trajectories whose peak excitation reaches the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    k = int(np.sum(result.member_max_pe >= threshold))
    n = result.n_traj
    lo, hi = wilson_interval(k, n)
    return ExceedanceStats(threshold=threshold, fraction=k / n, n_exceed=k,
                           n=n, ci_low=lo, ci_high=hi)


def oracle_compare(config: SimulationConfig) -> dict:
    """Reduced filter vs extended-system vacuum filter on one shared record.

    The reduced two-homodyne filter is run once, its measurement record
    dY_i = dW_i + k_i dt reconstructed, and the 4-dim vacuum filter driven
    by that record using its own innovations.  Reports the sup-norm
    difference of the two excitation-probability paths.
    """
    scheme = config.measurement.scheme
    if scheme not in (SCHEME_QP, SCHEME_QQ):
        raise ValueError("oracle comparison is defined for the two-homodyne schemes")
    n = config.n_steps
    dt = config.dt
    t = config.grid()
    xi = _xi_grid(config.pulse, t)
    lam = np.asarray(config.pulse.lam(t), dtype=complex)
    ops = _Ops(config.model, config.measurement.splitter, scheme)

    rec = draw_increments(derive_stream(config.master_seed, 0), n, dt)

    # reduced filter (batch of one), recording gains to rebuild dY
    r11, r10, r00 = _initial_batch(1)
    pe_red = np.empty(n + 1)
    pe_red[0] = np.real(r11[0, 1, 1])
    dY = np.empty((n, 2))
    for k in range(n):
        x = complex(xi[k])
        r11n, r10n, r00n, k1, k2 = _diffusive_kernel(
            ops, r11, r10, r00, x, rec.dW[k, 0:1], rec.dW[k, 1:2], dt)
        dY[k, 0] = rec.dW[k, 0] + k1[0] * dt
        dY[k, 1] = rec.dW[k, 1] + k2[0] * dt
        r11, r10, r00 = r11n, r10n, r00n
        pe_red[k + 1] = np.real(r11[0, 1, 1])

    # extended filter on the same record, with its own innovations
    A, Bc, C, H0, s11, s21 = extended_parts(config.model, config.measurement.splitter)
    w1, w2 = (s11, -1j * s21) if scheme == SCHEME_QP else (s11, s21)
    proj_e = sigma_plus() @ sigma_minus()
    ext = ExtendedState.initial()
    pe_ext = np.empty(n + 1)
    pe_ext[0] = np.real(reduced_expectation(ext, "11", proj_e, 1.0))
    for k in range(n):
        lv = complex(lam[k])
        L_tot = A + lv * Bc
        H_tot = H0 + (lv * C - np.conj(lv) * adjoint(C)) / 2j
        c1 = w1 * L_tot
        c2 = w2 * L_tot
        g1 = np.real(np.trace((c1 + adjoint(c1)) @ ext.rho))
        g2 = np.real(np.trace((c2 + adjoint(c2)) @ ext.rho))
        dWe = (dY[k, 0] - g1 * dt, dY[k, 1] - g2 * dt)
        ext = vacuum_filter_step(ext, [c1, c2], H_tot, dWe, dt)
        pe_ext[k + 1] = np.real(reduced_expectation(ext, "11", proj_e, 1.0))

    dev = np.abs(pe_red - pe_ext)
    return {
        "t": t, "pe_reduced": pe_red, "pe_extended": pe_ext,
        "sup_deviation": float(np.max(dev)), "dt": dt,
        "final_weight": float(config.pulse.w(config.T)),
    }


def _random_consistent_state(rng: np.random.Generator) -> FilterState:
    """Random Hermitian PSD corner blocks with unit trace, generic coherence."""
    def psd(scale: float) -> np.ndarray:
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        m = a @ adjoint(a)
        return scale * m / np.real(np.trace(m))

    r10 = 0.4 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    return FilterState(rho11=psd(1.0), rho10=r10, rho00=psd(1.0))


def _random_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar-ish 2x2 unitary from the exponential-of-Pauli closed form."""
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    a = rng.uniform(0.0, np.pi)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    u = np.cos(a) * identity() + 1j * np.sin(a) * (n[0] * sx + n[1] * sy + n[2] * sz)
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi)) * u


def duality_scan(n_draws: int = 100, seed: int = 7, dt: float = 1e-3) -> dict:
    """Cross-check expectation increments against the matching state stepper.

    For random states, observables, pulses, splitters and noise draws, the
    increment of Tr[(rho^{mn})^dag X] produced by the state recursion must
    equal heisenberg_increment for every block and scheme.  Returns the
    max residual per scheme plus the overall max.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    per_scheme: dict = {}
    for scheme in (SCHEME_QP, SCHEME_QQ, SCHEME_SH, SCHEME_HP, SCHEME_PP):
        diffusive = scheme in (SCHEME_QP, SCHEME_QQ, SCHEME_SH)
        worst = 0.0
        for _ in range(n_draws):
            kappa = rng.uniform(0.5, 1.5)
            hmat = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            hmat = 0.5 * (hmat + adjoint(hmat))
            # general scattering is exercised only where the recursion admits it
            smat = _random_unitary(rng) if diffusive else identity()
            model = SystemModel(kappa=kappa, S=smat, H=hmat)
            sb = beam_splitter(angles=tuple(rng.uniform(0.0, 2 * np.pi, size=4)))
            st = _random_consistent_state(rng)
            xi = complex(rng.normal(), rng.normal())
            x_op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            config = MeasurementConfig(scheme=scheme, splitter=sb)

            if scheme == SCHEME_SH:
                dw1 = rng.normal(scale=np.sqrt(dt))
                inc = {"dt": dt, "dW1": dw1}
                nxt = step_single_homodyne(model, st, xi, dw1, dt, sb)
            elif diffusive:
                dw1, dw2 = rng.normal(scale=np.sqrt(dt), size=2)
                inc = {"dt": dt, "dW1": dw1, "dW2": dw2}
                step = step_qp if scheme == SCHEME_QP else step_qq
                nxt = step(model, st, xi, dw1, dw2, dt, sb)
            elif scheme == SCHEME_HP:
                # clicks are only drawable from a live record; an unphysical
                # random hierarchy can clamp K_p to 0
                live = counting_rate(model, st, xi) > EPS_K
                dw1 = rng.normal(scale=np.sqrt(dt))
                jump = bool(live and rng.uniform() < 0.5)  # counter on output 2
                inc = {"dt": dt, "dW1": dw1, "jump2": jump}
                nxt = step_hp(model, st, xi, dw1, jump, dt, sb)
            else:
                live = counting_rate(model, st, xi) > EPS_K
                u = rng.uniform()
                jump1 = bool(live and u < 1 / 3)
                jump2 = bool(live and 1 / 3 <= u < 2 / 3)
                inc = {"dt": dt, "jump1": jump1, "jump2": jump2}
                nxt = step_pp(model, st, xi, jump1, jump2, dt, sb)

            deltas = {
                "11": nxt.rho11 - st.rho11,
                "10": nxt.rho10 - st.rho10,
                "00": nxt.rho00 - st.rho00,
            }
            for mn, dr in deltas.items():
                want = np.trace(adjoint(dr) @ x_op)
                got = heisenberg_increment(config, model, st, x_op, xi, inc, sb, mn=mn)
                worst = max(worst, float(abs(got - want)))
        per_scheme[scheme] = worst
    overall = max(per_scheme.values())
    return {"per_scheme": per_scheme, "max_residual": overall, "draws": n_draws}
