"""Spherical-harmonic multiplicities, uniform sphere sampling, and
statistical checks of the zonal product identity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError
from .orthopoly import legendre_eval

__all__ = [
    "SpherePointSet",
    "multiplicity",
    "log_multiplicity",
    "multiplicity_floats",
    "cumulative_dim",
    "cumulative_dims",
    "sphere_sample",
    "zonal_product_check",
]

# exact integer combinatorics below this degree, log-gamma floats beyond
_EXACT_DEGREE_CUTOFF = 512


def _check_dk(d: int, k: int) -> None:
    if d < 3:
        raise ValidationError(f"dimension must be >= 3, got {d}")
    if k < 0:
        raise ValidationError(f"degree must be >= 0, got {k}")


def multiplicity(d: int, k: int) -> int:
    """Dimension N(d, k) of the degree-k spherical harmonics in d variables.

    N(d, 0) = 1 and N(d, k) = ((2k + d - 2) / k) * binom(k + d - 3, d - 2)
    for k >= 1, evaluated in exact integer arithmetic.
    """
    _check_dk(d, k)
    if k == 0:
        return 1
    num = (2 * k + d - 2) * math.comb(k + d - 3, d - 2)
    if num % k != 0:  # pragma: no cover - the ratio is always integral
        raise ValidationError(f"non-integral multiplicity for d={d}, k={k}")
    return num // k


def log_multiplicity(d: int, k: int) -> float:
    """Natural log of N(d, k), for degrees where the integer overflows floats."""
    _check_dk(d, k)
    if k == 0:
        return 0.0
    return float(
        math.log(2 * k + d - 2)
        - math.log(k)
        + gammaln(k + d - 2)
        - gammaln(d - 1)
        - gammaln(k)
    )


def multiplicity_floats(d: int, k_max: int) -> np.ndarray:
    """N(d, 0..k_max) as floats; exact for small degrees, log-gamma beyond."""
    _check_dk(d, k_max)
    n_exact = min(k_max, _EXACT_DEGREE_CUTOFF)
    vals = [float(multiplicity(d, k)) for k in range(n_exact + 1)]
    if k_max > n_exact:
        ks = np.arange(n_exact + 1, k_max + 1, dtype=float)
        logs = (np.log(2 * ks + d - 2) - np.log(ks)
                + gammaln(ks + d - 2) - gammaln(d - 1) - gammaln(ks))
        vals = np.concatenate([vals, np.exp(logs)])
    return np.asarray(vals, dtype=float)


def cumulative_dim(d: int, k: int) -> int:
    """m_k = sum_{i<=k} N(d, i): dimension of spherical polynomials up to degree k."""
    _check_dk(d, k)
    return sum(multiplicity(d, i) for i in range(k + 1))


def cumulative_dims(d: int, k_max: int) -> np.ndarray:
    """m_0 .. m_{k_max} as floats (exact where N fits exactly)."""
    return np.cumsum(multiplicity_floats(d, k_max))


@dataclass(frozen=True)
class SpherePointSet:
    """n unit vectors in R^d, regenerable bit-for-bit from the stored seed."""

    d: int
    points: np.ndarray
    seed: int

    def __post_init__(self):
        norms = np.linalg.norm(self.points, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ValidationError("points must lie on the unit sphere")
        self.points.setflags(write=False)

    def __len__(self) -> int:
        return self.points.shape[0]


def sphere_sample(d: int, n: int, seed: int) -> SpherePointSet:
    """n i.i.d. uniform points on S^{d-1} via normalized standard Gaussians.

    The generator fills row-major, so for a fixed seed the first n1 points of
    an n2 > n1 sample coincide with the n1-point sample (nested grids).
    """
    if d < 2:
        raise ValidationError(f"dimension must be >= 2, got {d}")
    if n < 1:
        raise ValidationError(f"need at least one point, got {n}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero draw has probability zero; guard against it anyway
    norms[norms == 0.0] = 1.0
    return SpherePointSet(d=d, points=g / norms, seed=int(seed))


class ZonalProductResult(NamedTuple):
    estimate: float
    reference: float
    stderr: float


def zonal_product_check(d: int, k: int, x, x_prime, mc_samples: int,
                        seed: int) -> ZonalProductResult:
    """Monte-Carlo check of the integrated zonal product identity.

    Estimates int P_{k,d}(x.v) P_{k,d}(x'.v) dtau(v) and compares with the
    closed form P_{k,d}(x.x') / N(d, k).
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    for v in (x, xp):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValidationError("probe vectors must be unit vectors")
    pts = sphere_sample(d, mc_samples, seed).points
    vals = legendre_eval(k, d, pts @ x) * legendre_eval(k, d, pts @ xp)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(mc_samples))
    ref = float(legendre_eval(k, d, float(np.dot(x, xp))) / multiplicity(d, k))
    return ZonalProductResult(estimate=est, reference=ref, stderr=se)
