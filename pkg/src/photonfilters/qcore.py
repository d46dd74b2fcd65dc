"""Dense complex operator arithmetic, SLH triples, superoperators and beam splitters.

Everything here is small and fixed-size: 2x2 matrices for the reduced
two-level dynamics, 4x4 for the ancilla (x) system space used by the
extended-system cross check.  Operators are plain complex128 ndarrays.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "sigma_minus", "sigma_plus", "identity", "ket_g", "ket_e",
    "adjoint", "is_hermitian", "comm",
    "SLHTriple", "slh", "SystemModel", "BeamSplitter", "beam_splitter",
    "dissipator_adjoint", "dissipator", "liouvillian", "lindbladian",
    "series_product", "concatenation_product",
    "tensor_embed", "build_extended_system",
]

UNITARITY_INPUT_TOL = 1e-9   # user-input validation
UNITARITY_PROP_TOL = 1e-12   # arithmetic-drift property checks


def sigma_minus() -> np.ndarray:
    """Lowering operator in the {|g>, |e>} basis (index 0 = ground)."""
    return np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def sigma_plus() -> np.ndarray:
    return np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


def identity(dim: int = 2) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def ket_g() -> np.ndarray:
    return np.array([1.0, 0.0], dtype=complex)


def ket_e() -> np.ndarray:
    return np.array([0.0, 1.0], dtype=complex)


def adjoint(a: np.ndarray) -> np.ndarray:
    return a.conj().swapaxes(-1, -2)


def comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - adjoint(a))) <= tol)


def _op_im(a: np.ndarray) -> np.ndarray:
    """Operator imaginary part (A - A^dag)/2i; Hermitian for any A."""
    return (a - adjoint(a)) / 2j


@dataclass(frozen=True)
class SLHTriple:
    """(S, L, H) description of an open system or composed network.

    S has shape (nch, nch, d, d): a channel matrix whose entries are
    operators (scalar entries are stored as scalar * identity).  L has
    shape (nch, d, d) and H shape (d, d).
    """
    S: np.ndarray
    L: np.ndarray
    H: np.ndarray

    @property
    def nch(self) -> int:
        return self.S.shape[0]

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def s_unitarity_residual(self) -> float:
        """max |(S^dag S)_ij - delta_ij I| over channel-matrix blocks."""
        nch, d = self.nch, self.dim
        res = 0.0
        for i in range(nch):
            for j in range(nch):
                acc = np.zeros((d, d), dtype=complex)
                for k in range(nch):
                    acc += adjoint(self.S[k, i]) @ self.S[k, j]
                target = identity(d) if i == j else np.zeros((d, d))
                res = max(res, float(np.max(np.abs(acc - target))))
        return res


def slh(S, L, H) -> SLHTriple:
    """Build an SLHTriple, promoting scalar S entries to scalar * identity.

    S may be a scalar, a (nch, nch) matrix of scalars, or already a
    (nch, nch, d, d) block array.  L may be one operator or a list of
    channel operators.
    """
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    L = np.asarray(L, dtype=complex)
    if L.ndim == 2:
        L = L[None, :, :]
    nch = L.shape[0]
    S = np.asarray(S, dtype=complex)
    if S.ndim == 0:
        S = S * np.eye(nch)
    if S.ndim == 2 and nch == 1 and S.shape == (d, d):
        S = S[None, None, :, :]  # single channel, operator-valued entry
    elif S.ndim == 2 and S.shape == (nch, nch):
        S = S[:, :, None, None] * identity(d)
    if S.shape != (nch, nch, d, d):
        raise ValueError(f"S shape {S.shape} incompatible with {nch} channels of dim {d}")
    if not is_hermitian(H, 1e-12):
        raise ValueError("H must be Hermitian")
    return SLHTriple(S=S, L=L, H=H)


@dataclass(frozen=True)
class SystemModel:
    """Two-level system with coupling L = kappa * sigma_-.

    kappa enters as an amplitude, so the spontaneous decay rate is kappa^2;
    kappa = 1 (the default) makes the two conventions coincide.
    Basis ordering is |g> = index 0, |e> = index 1.
    """
    kappa: float = 1.0
    S: np.ndarray = field(default_factory=identity)
    H: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=complex))

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        S = np.asarray(self.S, dtype=complex)
        H = np.asarray(self.H, dtype=complex)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "H", H)
        if np.max(np.abs(adjoint(S) @ S - identity(2))) > UNITARITY_INPUT_TOL:
            raise ValueError("model S must be unitary")
        if not is_hermitian(H, 1e-12):
            raise ValueError("model H must be Hermitian")

    @property
    def L(self) -> np.ndarray:
        return self.kappa * sigma_minus()

    @property
    def s_is_identity(self) -> bool:
        return bool(np.array_equal(self.S, identity(2)))


@dataclass(frozen=True)
class BeamSplitter:
    """2x2 unitary splitter; s11/s21 weight the measured output channels."""
    s11: complex
    s12: complex
    s21: complex
    s22: complex
    params: dict = field(default_factory=dict)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s21, self.s22]], dtype=complex)

    def unitarity_residual(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(2))))


def beam_splitter(spec=None, *, entries=None, angles=None, r=None, theta=None) -> BeamSplitter:
    """Construct a beam splitter from one of the supported forms.

    - entries: raw 2x2 complex matrix (validated for unitarity);
    - angles: (Theta, Psi, Phi, Lambda) real parameters,
        e^{i Lam/2} [[cos(Th/2) e^{i(Psi+Phi)/2},   sin(Th/2) e^{i(Psi-Phi)/2}],
                     [-sin(Th/2) e^{-i(Psi-Phi)/2}, cos(Th/2) e^{-i(Psi+Phi)/2}]];
    - (r, theta): reduction form with s11 = sqrt(1-r^2) e^{i theta},
      s21 = -r e^{i theta};
    - r alone: the simulation splitter [[sqrt(1-r^2), ir], [ir, sqrt(1-r^2)]].

    A dict spec {"entries": ...} / {"angles": ...} / {"r": ..., "theta": ...}
    is accepted as the single positional argument.
    """
    if isinstance(spec, dict):
        entries = spec.get("entries", entries)
        angles = spec.get("angles", angles)
        r = spec.get("r", r)
        theta = spec.get("theta", theta)
    elif spec is not None:
        if np.isscalar(spec):
            r = spec
        else:
            arr = np.asarray(spec)
            if arr.shape == (2,):  # (r, theta) reduction pair
                r, theta = arr
            else:
                entries = spec

    if entries is not None:
        m = np.asarray(entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("entries must be a 2x2 matrix")
        bs = BeamSplitter(m[0, 0], m[0, 1], m[1, 0], m[1, 1], {"form": "raw"})
        if bs.unitarity_residual() > UNITARITY_INPUT_TOL:
            raise ValueError("beam splitter entries are not unitary")
        return bs
    if angles is not None:
        th, psi, phi, lam = (float(x) for x in angles)
        pre = np.exp(1j * lam / 2)
        c, s = np.cos(th / 2), np.sin(th / 2)
        # standard Euler parametrization: the lower-left entry carries the
        # conjugate phase, which is what makes the matrix unitary for all
        # angle values
        return BeamSplitter(
            pre * c * np.exp(1j * (psi + phi) / 2),
            pre * s * np.exp(1j * (psi - phi) / 2),
            -pre * s * np.exp(-1j * (psi - phi) / 2),
            pre * c * np.exp(-1j * (psi + phi) / 2),
            {"form": "angles", "Theta": th, "Psi": psi, "Phi": phi, "Lambda": lam},
        )
    if r is None:
        raise ValueError("beam splitter spec must supply entries, angles, or r")
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    t = np.sqrt(1.0 - r * r)
    if theta is not None:
        ph = np.exp(1j * float(theta))
        # reduction form: second column completed so the matrix is unitary
        return BeamSplitter(t * ph, r * ph, -r * ph, t * ph,
                            {"form": "reduction", "r": r, "theta": float(theta)})
    return BeamSplitter(t + 0j, 1j * r, 1j * r, t + 0j, {"form": "simulation", "r": r})


def dissipator_adjoint(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D*_A rho = A rho A^dag - (A^dag A rho + rho A^dag A)/2 (trace-free)."""
    if A.shape != rho.shape:
        raise ValueError("dimension mismatch")
    AdA = adjoint(A) @ A
    return A @ rho @ adjoint(A) - 0.5 * (AdA @ rho + rho @ AdA)


def dissipator(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Heisenberg-picture D_A X = A^dag X A - (A^dag A X + X A^dag A)/2."""
    if A.shape != X.shape:
        raise ValueError("dimension mismatch")
    AdA = adjoint(A) @ A
    return adjoint(A) @ X @ A - 0.5 * (AdA @ X + X @ AdA)


def liouvillian(G: SLHTriple, rho: np.ndarray, check: bool = False) -> np.ndarray:
    """L*_G rho = -i[H, rho] + sum_ch D*_L rho.

    Hermiticity of rho is advisory: duality checks feed the non-Hermitian
    rho10 block through here deliberately, so check=False by default.
    """
    if rho.shape != G.H.shape:
        raise ValueError("dimension mismatch")
    if check and not is_hermitian(rho, 1e-9):
        warnings.warn("liouvillian applied to a non-Hermitian rho", stacklevel=2)
    out = -1j * comm(G.H, rho)
    for ch in range(G.nch):
        out = out + dissipator_adjoint(G.L[ch], rho)
    return out


def lindbladian(G: SLHTriple, X: np.ndarray) -> np.ndarray:
    """L_G X = -i[X, H] + sum_ch D_L X; trace-dual to liouvillian."""
    if X.shape != G.H.shape:
        raise ValueError("dimension mismatch")
    out = -1j * comm(X, G.H)
    for ch in range(G.nch):
        out = out + dissipator(G.L[ch], X)
    return out


def _block_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Channel-matrix product of two (n, n, d, d) block arrays."""
    return np.einsum("ikab,kjbc->ijac", A, B)


def series_product(G2: SLHTriple, G1: SLHTriple) -> SLHTriple:
    """G2 <| G1 = (S2 S1, L2 + S2 L1, H1 + H2 + Im{L2^dag S2 L1})."""
    if G2.nch != G1.nch or G2.dim != G1.dim:
        raise ValueError("channel-count or dimension mismatch")
    S = _block_matmul(G2.S, G1.S)
    L = G2.L + np.einsum("ijab,jbc->iac", G2.S, G1.L)
    cross = np.zeros((G1.dim, G1.dim), dtype=complex)
    for i in range(G2.nch):
        for j in range(G2.nch):
            cross += adjoint(G2.L[i]) @ G2.S[i, j] @ G1.L[j]
    H = G1.H + G2.H + _op_im(cross)
    return SLHTriple(S=S, L=L, H=H)


def concatenation_product(G1: SLHTriple, G2: SLHTriple) -> SLHTriple:
    """G1 [+] G2: block-diagonal S, stacked L, H1 + H2."""
    if G1.dim != G2.dim:
        raise ValueError("dimension mismatch")
    n1, n2, d = G1.nch, G2.nch, G1.dim
    S = np.zeros((n1 + n2, n1 + n2, d, d), dtype=complex)
    S[:n1, :n1] = G1.S
    S[n1:, n1:] = G2.S
    L = np.concatenate([G1.L, G2.L], axis=0)
    return SLHTriple(S=S, L=L, H=G1.H + G2.H)


def tensor_embed(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Kronecker product with the ancilla as the first factor."""
    if A.shape != (2, 2) or X.shape != (2, 2):
        raise ValueError("tensor_embed expects two 2x2 operators")
    return np.kron(A, X)


def build_extended_system(model: SystemModel, lambda_t: complex, sb: BeamSplitter) -> SLHTriple:
    """Whole network G3 <| [(G1 <| M) [+] G2] on the 4-dim ancilla (x) system space.

    M = (I, lambda * sigma_- on the ancilla, 0) synthesizes the photon from
    vacuum; G2 = (1, 0, 0) carries the vacuum noise; G3 = (S_b, 0, 0).
    The closed form of the result is
      S_total = [[s11 S, s12 I], [s21 S, s22 I]],
      L_total = [s11 (L + S L_M); s21 (L + S L_M)],
      H_total = H + Im{lambda * (sigma_-(ancilla) (x) L^dag S)}.
    """
    I2 = identity(2)
    G1 = slh(tensor_embed(I2, model.S), tensor_embed(I2, model.L), tensor_embed(I2, model.H))
    M = slh(identity(4), lambda_t * tensor_embed(sigma_minus(), I2), np.zeros((4, 4)))
    G2 = slh(identity(4), np.zeros((4, 4)), np.zeros((4, 4)))
    G3 = slh(np.array(sb.matrix), np.zeros((2, 4, 4)), np.zeros((4, 4)))
    return series_product(G3, concatenation_product(series_product(G1, M), G2))
