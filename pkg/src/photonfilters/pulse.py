"""Single-photon wave-packet shapes xi(t), tail weight w(t), coupling lambda(t).

The wave packet is normalized, int_0^inf |xi|^2 dt = 1.  The synthesizer
coupling lambda(t) = xi(t)/sqrt(w(t)) with w(t) = int_t^inf |xi(s)|^2 ds is
clamped to zero once w falls below EPS_W: the photon has fully left the
cavity and the ancilla decouples.

Note the decaying exponential has constant lambda = sqrt(gamma) (w cancels
the envelope exactly); the rising one has lambda growing without bound as
t -> t1, which is what drives complete excitation of the atom.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

__all__ = [
    "EPS_W", "PulseShape",
    "xi_gaussian", "xi_exponential", "w_of", "lambda_of",
]

EPS_W = 1e-12


def xi_gaussian(Omega: float, t0: float, t):
    """(Omega^2/2pi)^{1/4} exp[-Omega^2 (t-t0)^2 / 4]; peaks at t = t0."""
    if Omega <= 0:
        raise ValueError("Omega must be > 0")
    t = np.asarray(t, dtype=float)
    amp = (Omega * Omega / (2.0 * np.pi)) ** 0.25
    out = amp * np.exp(-Omega * Omega * (t - t0) ** 2 / 4.0)
    return out if out.ndim else float(out)


def xi_exponential(gamma: float, t1: float, rising: bool, t):
    """Exponential envelope, unit norm by construction.

    rising:   sqrt(gamma) e^{+gamma (t-t1)/2} for t <= t1, else 0;
    decaying: sqrt(gamma) e^{-gamma (t-t1)/2} for t >= t1, else 0.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    t = np.asarray(t, dtype=float)
    if rising:
        # exponent clipped at 0 so the dead branch of where() cannot overflow
        out = np.where(t <= t1,
                       np.sqrt(gamma) * np.exp(gamma * np.minimum(t - t1, 0.0) / 2.0), 0.0)
    else:
        out = np.where(t >= t1,
                       np.sqrt(gamma) * np.exp(-gamma * np.maximum(t - t1, 0.0) / 2.0), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PulseShape:
    """A normalized wave packet with closed-form (or tabulated) xi, w, lambda."""
    kind: str
    omega: float = 0.0
    t0: float = 0.0
    gamma: float = 0.0
    t1: float = 0.0
    rising: bool = False
    grid_t: np.ndarray | None = field(default=None, repr=False)
    grid_xi: np.ndarray | None = field(default=None, repr=False)
    grid_w: np.ndarray | None = field(default=None, repr=False)

    @staticmethod
    def gaussian(omega: float, t0: float) -> "PulseShape":
        if omega <= 0:
            raise ValueError("Omega must be > 0")
        return PulseShape(kind="gaussian", omega=float(omega), t0=float(t0))

    @staticmethod
    def exponential(gamma: float, t1: float, rising: bool = False) -> "PulseShape":
        if gamma <= 0:
            raise ValueError("gamma must be > 0")
        return PulseShape(kind="exponential", gamma=float(gamma), t1=float(t1),
                          rising=bool(rising))

    @staticmethod
    def tabulated(t, xi) -> "PulseShape":
        """Sampled envelope; renormalized to unit L2 norm on construction.

        Linear interpolation between samples, zero outside the grid.
        """
        t = np.asarray(t, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if t.ndim != 1 or t.shape != xi.shape or t.size < 2:
            raise ValueError("tabulated pulse needs matching 1-d t and xi with >= 2 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tabulated t must be strictly increasing")
        norm2 = np.trapezoid(xi * xi, t)
        if norm2 <= 0:
            raise ValueError("tabulated pulse has zero norm")
        xi = xi / np.sqrt(norm2)
        # tail integral on the grid, accumulated from the right
        seg = 0.5 * (xi[:-1] ** 2 + xi[1:] ** 2) * np.diff(t)
        w = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        return PulseShape(kind="tabulated", grid_t=t, grid_xi=xi, grid_w=w)

    @staticmethod
    def from_csv(path) -> "PulseShape":
        """Two numeric columns per row: time, envelope value.  Header allowed."""
        ts, xs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or len(row) < 2:
                    continue
                try:
                    tv, xv = float(row[0]), float(row[1])
                except ValueError:
                    continue  # header or comment row
                ts.append(tv)
                xs.append(xv)
        if len(ts) < 2:
            raise ValueError(f"pulse table {path!r} has fewer than 2 numeric rows")
        return PulseShape.tabulated(np.array(ts), np.array(xs))

    def xi(self, t):
        if self.kind == "gaussian":
            return xi_gaussian(self.omega, self.t0, t)
        if self.kind == "exponential":
            return xi_exponential(self.gamma, self.t1, self.rising, t)
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.grid_t, self.grid_xi, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    def w(self, t):
        """Remaining wave-packet weight w(t) = int_t^inf |xi|^2 ds."""
        t = np.asarray(t, dtype=float)
        if self.kind == "gaussian":
            out = 0.5 * erfc(self.omega * (t - self.t0) / np.sqrt(2.0))
        elif self.kind == "exponential":
            g, t1 = self.gamma, self.t1
            if self.rising:
                out = np.where(t <= t1, -np.expm1(g * np.minimum(t - t1, 0.0)), 0.0)
            else:
                out = np.where(t >= t1, np.exp(-g * np.maximum(t - t1, 0.0)), 1.0)
        else:
            out = np.interp(t, self.grid_t, self.grid_w,
                            left=self.grid_w[0], right=0.0)
        out = np.clip(out, 0.0, None)
        return out if out.ndim else float(out)

    def lam(self, t):
        """Synthesizer coupling xi/sqrt(w), zero once w <= EPS_W."""
        t = np.asarray(t, dtype=float)
        wv = np.asarray(self.w(t), dtype=float)
        xv = np.asarray(self.xi(t))
        live = wv > EPS_W
        out = np.where(live, xv / np.sqrt(np.where(live, wv, 1.0)), 0.0)
        return out if out.ndim else float(out)


def w_of(pulse: PulseShape, t):
    return pulse.w(t)


def lambda_of(pulse: PulseShape, t):
    return pulse.lam(t)
