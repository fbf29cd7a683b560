"""Power variogram on the warped space, the Brown-Resnick matrix, and CEPs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import ndtr

from .geometry import LocationSet, pairwise_distances

KAPPA_MIN = 0.05
KAPPA_MAX = 1.95

# diagonal jitter escalation ladder for the Cholesky of Sigma
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


class CholeskyError(RuntimeError):
    """Sigma not factorizable even after maximal jitter."""


@dataclass(frozen=True)
class VariogramParams:
    """psi = (phi, kappa): range > 0 and smoothness in (0, 2)."""

    phi: float
    kappa: float

    def __post_init__(self):
        if not (self.phi > 0 and np.isfinite(self.phi)):
            raise ValueError(f"range phi must be positive and finite, got {self.phi}")
        if not (0.0 < self.kappa < 2.0):
            raise ValueError(f"smoothness kappa must lie in (0, 2), got {self.kappa}")


def semivariogram(s1, s2, psi: VariogramParams) -> float:
    """(||s1 - s2|| / phi)^kappa for already-warped coordinates."""
    d = float(np.linalg.norm(np.asarray(s1, dtype=float) - np.asarray(s2, dtype=float)))
    return (d / psi.phi) ** psi.kappa


def variogram_matrix(coords, psi: VariogramParams) -> np.ndarray:
    """All pairwise semivariogram values of a warped location set."""
    d = pairwise_distances(coords)
    return (d / psi.phi) ** psi.kappa


@dataclass(frozen=True, eq=False)
class BrMatrix:
    """(D-1) x (D-1) Brown-Resnick matrix anchored at site 1, Cholesky cached.

    sigma[i-2, j-2] = gamma_{i,1} + gamma_{j,1} - gamma_{i,j} for sites i,j >= 2.
    """

    sigma: np.ndarray
    gamma_anchor: np.ndarray  # gamma_{i,1} for i = 2..D
    jitter: float
    _chol: tuple = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0] + 1

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve(self._chol, b)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol[0]))))

    def inv_diag(self) -> np.ndarray:
        return np.diag(self.solve(np.eye(self.sigma.shape[0])))

    def inv_total(self) -> float:
        ones = np.ones(self.sigma.shape[0])
        return float(ones @ self.solve(ones))


def cholesky_with_jitter(mat: np.ndarray) -> tuple[tuple, float]:
    """Cholesky factor, escalating diagonal jitter 0 -> 1e-10 -> 1e-8 -> 1e-6."""
    for jitter in _JITTERS:
        try:
            c = cho_factor(mat + jitter * np.eye(mat.shape[0]), lower=True)
            return c, jitter
        except np.linalg.LinAlgError:
            continue
    raise CholeskyError(
        "Cholesky failed after maximal jitter 1e-6; geometry is degenerate "
        "or kappa is too close to 2"
    )


def br_matrix(warped: LocationSet | np.ndarray, psi: VariogramParams) -> BrMatrix:
    """Build Sigma from warped sites; site 1 (index 0) is the anchor."""
    coords = warped.coords if isinstance(warped, LocationSet) else np.asarray(warped, dtype=float)
    if coords.shape[0] < 2:
        raise ValueError("need at least two sites")
    d = pairwise_distances(coords)
    off = d[~np.eye(d.shape[0], dtype=bool)]
    if np.any(off == 0.0):
        raise ValueError("duplicated sites: zero pairwise distance is degenerate")
    g = (d / psi.phi) ** psi.kappa
    a = g[1:, 0]
    sigma = a[:, None] + a[None, :] - g[1:, 1:]
    chol, jitter = cholesky_with_jitter(sigma)
    return BrMatrix(sigma=sigma, gamma_anchor=a.copy(), jitter=jitter, _chol=chol)


def theoretical_cep(gamma) -> np.ndarray | float:
    """Limiting conditional exceedance probability 2[1 - Phi(sqrt(gamma/2))]."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("semivariogram values must be nonnegative")
    out = 2.0 * (1.0 - ndtr(np.sqrt(g / 2.0)))
    return float(out) if out.ndim == 0 else out
