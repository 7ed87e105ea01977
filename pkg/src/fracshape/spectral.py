"""Spectral split of 2x2 symmetric strains into tensile and compressive parts.

Everything is vectorized: strain components may be scalars or arrays of
any (matching) shape, and matrices gain two trailing axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_TOL = 1e-10
# below this (e11-e22)^2 + 4 e12^2 the angle-derivative fraction is dropped
FRACTION_FLOOR = 1e-20


@dataclass(frozen=True)
class SymTensor2:
    e11: np.ndarray | float
    e12: np.ndarray | float
    e22: np.ndarray | float

    @classmethod
    def from_matrix(cls, m) -> SymTensor2:
        m = np.asarray(m, dtype=float)
        return cls(m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1])

    def matrix(self) -> np.ndarray:
        e11, e12, e22 = np.broadcast_arrays(*map(np.asarray, (self.e11, self.e12, self.e22)))
        return np.stack([np.stack([e11, e12], -1), np.stack([e12, e22], -1)], -2).astype(float)

    @property
    def trace(self):
        return np.asarray(self.e11) + np.asarray(self.e22)


def _as_tensor(eps) -> SymTensor2:
    return eps if isinstance(eps, SymTensor2) else SymTensor2.from_matrix(eps)


def is_degenerate(eps) -> np.ndarray | bool:
    """True where the strain is (numerically) a multiple of the identity."""
    t = _as_tensor(eps)
    d = np.abs(np.asarray(t.e11, dtype=float) - t.e22)
    out = (d <= DEGENERATE_TOL) & (np.abs(t.e12) <= DEGENERATE_TOL)
    return bool(out) if np.ndim(out) == 0 else out


def rotation_angle(eps) -> np.ndarray | float:
    """Angle of the rotation diagonalizing ``eps`` (0 for degenerate strains)."""
    t = _as_tensor(eps)
    e11, e12, e22 = (np.asarray(v, dtype=float) for v in (t.e11, t.e12, t.e22))
    d = e11 - e22
    with np.errstate(divide="ignore", invalid="ignore"):
        atan = np.where(d != 0.0, np.arctan(2.0 * e12 / d), -np.sign(e12) * (np.pi / 2))
    alpha = 0.5 * atan + np.where(d > 0.0, np.pi / 2, 0.0)
    alpha = np.where(is_degenerate(t), 0.0, alpha)
    return float(alpha) if alpha.ndim == 0 else alpha


@dataclass(frozen=True)
class SpectralSplit:
    """Rotation data and principal strains; arrays carry the batch shape."""

    alpha: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    sigma: np.ndarray
    sigma_max: np.ndarray
    degenerate: np.ndarray
    eps_plus: np.ndarray
    offdiag: np.ndarray

    def energy_trace(self) -> np.ndarray:
        """``tr(Sigma_max^2)``."""
        return np.sum(self.sigma_max**2, axis=-1)


def split(eps) -> SpectralSplit:
    t = _as_tensor(eps)
    e11, e12, e22 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t.e11, t.e12, t.e22)))
    degenerate = np.asarray(is_degenerate(t))
    alpha = np.asarray(rotation_angle(t), dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    Q = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    R = np.stack([np.stack([-s, -c], -1), np.stack([c, -s], -1)], -2)
    cs = c * s
    s1 = c * c * e11 + 2.0 * cs * e12 + s * s * e22
    s2 = s * s * e11 - 2.0 * cs * e12 + c * c * e22
    off = cs * (e22 - e11) + (c * c - s * s) * e12
    # degenerate strains keep Q = I, so Sigma is the diagonal of eps itself
    s1 = np.where(degenerate, e11, s1)
    s2 = np.where(degenerate, e22, s2)
    off = np.where(degenerate, e12, off)
    sigma = np.stack([s1, s2], -1)
    sigma_max = np.maximum(sigma, 0.0)
    eps_plus = np.einsum("...ik,...k,...jk->...ij", Q, sigma_max, Q)
    return SpectralSplit(alpha, Q, R, sigma, sigma_max, degenerate, eps_plus, off)


def bulk_energy_density(eps, lam: float, mu: float) -> np.ndarray:
    """``lam/2 max(0, tr eps)^2 + mu tr(Sigma_max^2)``."""
    t = _as_tensor(eps)
    sp_ = split(t)
    return 0.5 * lam * np.maximum(t.trace, 0.0) ** 2 + mu * sp_.energy_trace()


def tensile_stress_tensor(eps, sp_: SpectralSplit) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficient tensors of the split-energy variation.

    Returns ``(S_mu, P, T)`` where, for any strain variation ``d``,
    ``S_mu : d`` equals ``frac(d) * T + tr(Sigma_max Q^T d Q)`` in the
    non-degenerate case and ``tr(Sigma_max d)`` otherwise.  ``frac`` is the
    angle-derivative fraction, written as ``P : d``, and ``T`` is
    ``tr(Sigma_max (R^T eps Q + Q^T eps R))``.
    """
    t = _as_tensor(eps)
    e11, e12, e22 = (np.asarray(v, dtype=float) for v in (t.e11, t.e12, t.e22))
    E = t.matrix()
    Q, R = sp_.Q, sp_.R
    M = np.einsum("...ki,...kl,...lj->...ij", R, E, Q)
    M = M + np.swapaxes(M, -1, -2)
    T = sp_.sigma_max[..., 0] * M[..., 0, 0] + sp_.sigma_max[..., 1] * M[..., 1, 1]
    d = e11 - e22
    den = d * d + 4.0 * e12 * e12
    active = (~sp_.degenerate) & (den >= FRACTION_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(active, 1.0 / den, 0.0)
    P = np.zeros(E.shape)
    P[..., 0, 0] = -e12 * inv
    P[..., 1, 1] = e12 * inv
    P[..., 0, 1] = P[..., 1, 0] = 0.5 * d * inv
    S_mu = T[..., None, None] * P + sp_.eps_plus
    return S_mu, P, T
