"""Norm-constrained kernel ridge regression on the sphere.

The estimator minimizes empirical squared loss over the RKHS ball of a given
budget.  By the KKT conditions this is the ridge path alpha(lr) =
(K + n lr I)^-1 y with the multiplier lr bisected until the norm constraint
binds (or lr = 0 when the unconstrained solution is already inside the ball).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import FitError, ValidationError
from .harmonics import SpherePointSet, sphere_sample
from .spectra import KernelSpec, kernel_profile

__all__ = [
    "Dataset",
    "KrrModel",
    "NoiseModel",
    "SupEstimate",
    "Target",
    "fit_constrained",
    "gram",
    "kernel_expansion",
    "predict",
    "sample_target",
    "sup_norm_estimate",
]

_CHUNK_ELEMS = 4_000_000  # cap on points x centers per evaluation block


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian observation noise with standard deviation sigma."""

    sigma: float
    distribution: str = "gaussian"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError(f"noise level must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class Dataset:
    """Training sample y_i = f(x_i) + xi_i, regenerable from the stored seed."""

    X: SpherePointSet
    y: np.ndarray
    noise_sigma: float
    target_desc: str
    seed: int


def kernel_expansion(profile: Callable, centers: np.ndarray,
                     coefficients: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate sum_j c_j kappa(z_j . x) at each row of ``points``, chunked."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n_centers = centers.shape[0]
    out = np.empty(points.shape[0])
    block = max(1, _CHUNK_ELEMS // max(n_centers, 1))
    for lo in range(0, points.shape[0], block):
        hi = min(lo + block, points.shape[0])
        t = points[lo:hi] @ centers.T
        out[lo:hi] = profile(t) @ coefficients
    return out


def gram(spec: KernelSpec, X: SpherePointSet,
         profile: Optional[Callable] = None) -> np.ndarray:
    """Kernel matrix K_ij = kappa(x_i . x_j)."""
    if len(X) == 0:
        raise ValidationError("point set is empty")
    if profile is None:
        profile = kernel_profile(spec)
    t = X.points @ X.points.T
    # self-products are exactly 1; roundoff here is amplified by profiles
    # with endpoint kinks (arc-cosine kernels have a sqrt singularity at 1)
    np.fill_diagonal(t, 1.0)
    K = profile(t)
    if not np.all(np.isfinite(K)):
        raise ValidationError("kernel matrix has non-finite entries")
    return 0.5 * (K + K.T)


@dataclass
class KrrModel:
    """Fitted kernel expansion with its RKHS norm and ridge diagnostics."""

    spec: Optional[KernelSpec]
    centers: Optional[np.ndarray]
    coefficients: np.ndarray
    rkhs_norm: float
    lambda_ridge: float
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "kernel": {"name": self.spec.name, "d": self.spec.d,
                       "params": {k: v for k, v in self.spec.params.items()
                                  if not callable(v)}} if self.spec else None,
            "centers": None if self.centers is None
            else [float(v) for v in np.asarray(self.centers).ravel()],
            "num_centers": None if self.centers is None else int(self.centers.shape[0]),
            "coefficients": [float(v) for v in self.coefficients],
            "rkhs_norm": float(self.rkhs_norm),
            "lambda_ridge": float(self.lambda_ridge),
        }


def fit_constrained(K: np.ndarray, y: np.ndarray, budget: float = 1.0,
                    jitter: Optional[float] = None, tol: float = 1e-8,
                    spec: Optional[KernelSpec] = None,
                    centers: Optional[np.ndarray] = None,
                    max_iter: int = 200) -> KrrModel:
    """Solve argmin_{||f|| <= budget} (1/n) sum (f(x_i) - y_i)^2 on the ridge path.

    An eigendecomposition of K makes every bisection iterate O(n).  The
    returned diagnostics carry the KKT residual ||(K + n lr I) a - y||, the
    bisection iteration count, and the smallest eigenvalue seen.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or y.shape != (n,):
        raise ValidationError("K must be square and aligned with y")
    if not np.all(np.isfinite(y)):
        raise ValidationError("responses must be finite")
    if budget <= 0:
        raise ValidationError(f"budget must be positive, got {budget}")
    kappa1 = float(np.median(np.diag(K)))
    if jitter is None:
        jitter = 1e-10 * max(kappa1, 1e-30) * n

    w, V = scipy.linalg.eigh(K)
    min_eig = float(w[0])
    w = np.clip(w, 0.0, None)
    yhat = V.T @ y

    def solve_at(lr: float):
        denom = w + jitter + n * lr
        a_hat = yhat / denom
        norm = float(np.sqrt(np.sum(w * a_hat * a_hat)))
        return a_hat, norm

    a_hat, norm0 = solve_at(0.0)
    iterations = 0
    status = "interior"
    lr = 0.0
    if norm0 > budget * (1.0 + tol):
        lo, hi = 1e-12, 1e6
        _, norm_hi = solve_at(hi)
        if norm_hi > budget:
            raise FitError(
                f"norm constraint cannot bind: ||f|| = {norm_hi:.3e} > {budget} "
                f"even at ridge 1e6 (unconstrained norm {norm0:.3e})")
        norm = norm0
        while iterations < max_iter and abs(norm - budget) > tol * budget:
            lr = np.sqrt(lo * hi)
            a_hat, norm = solve_at(lr)
            if norm > budget:
                lo = lr
            else:
                hi = lr
            iterations += 1
        if abs(norm - budget) > tol * budget:
            raise FitError(
                f"bisection did not converge: |norm - budget| = {abs(norm - budget):.3e} "
                f"after {iterations} iterations")
        status = "binding"
    alpha = V @ a_hat
    rkhs_norm = float(np.sqrt(max(alpha @ (K @ alpha), 0.0)))
    kkt_residual = float(np.linalg.norm(K @ alpha + n * lr * alpha - y))
    train_mse = float(np.mean((K @ alpha - y) ** 2))
    return KrrModel(
        spec=spec, centers=centers, coefficients=alpha, rkhs_norm=rkhs_norm,
        lambda_ridge=float(lr),
        diagnostics={"status": status, "iterations": iterations,
                     "kkt_residual": kkt_residual, "min_eigenvalue": min_eig,
                     "train_mse": train_mse, "jitter": float(jitter)})


def predict(model: KrrModel, points: np.ndarray,
            profile: Optional[Callable] = None) -> np.ndarray:
    """Evaluate the fitted expansion sum_i alpha_i kappa(x_i . x) at new points."""
    if model.centers is None:
        raise ValidationError("model has no centers; fit with spec and centers")
    if profile is None:
        profile = kernel_profile(model.spec)
    return kernel_expansion(profile, model.centers, model.coefficients, points)


@dataclass(frozen=True)
class Target:
    """Kernel expansion with exact unit RKHS norm, used as a regression target."""

    centers: np.ndarray
    coefficients: np.ndarray
    profile: Callable

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return kernel_expansion(self.profile, self.centers, self.coefficients, points)


def sample_target(spec: KernelSpec, d: int, num_centers: int, seed,
                  profile: Optional[Callable] = None,
                  max_resample: int = 8) -> Target:
    """Random element of the unit RKHS ball: f = sum_j b_j kappa(z_j . x).

    Coefficients are Gaussian, rescaled by 1 / sqrt(b' K_zz b) so the norm is
    exactly one by construction.  A degenerate Gram draw is resampled.
    """
    if num_centers < 1:
        raise ValidationError(f"need at least one center, got {num_centers}")
    if profile is None:
        profile = kernel_profile(spec)
    seeds = np.random.SeedSequence(seed).generate_state(2 * max_resample)
    for attempt in range(max_resample):
        Z = sphere_sample(d, num_centers, int(seeds[2 * attempt]))
        b = np.random.default_rng(int(seeds[2 * attempt + 1])).standard_normal(num_centers)
        Kzz = gram(spec, Z, profile=profile)
        q = float(b @ (Kzz @ b))
        if q > 1e-14:
            return Target(centers=Z.points, coefficients=b / np.sqrt(q),
                          profile=profile)
    raise FitError("degenerate target Gram after resampling")


class SupEstimate(NamedTuple):
    value: float
    argmax: np.ndarray


def sup_norm_estimate(g: Callable, d: int, grid_size: int, seed) -> SupEstimate:
    """Lower estimate of sup |g| over the sphere.

    Takes the max over a uniform sample and polishes it by coordinate ascent
    with step halving.  This is a lower estimate of the true supremum; it
    never overstates it (up to evaluation roundoff).
    """
    pts = sphere_sample(d, grid_size, seed).points
    vals = np.abs(np.asarray(g(pts), dtype=float))
    best_idx = int(np.argmax(vals))
    best_x = pts[best_idx].copy()
    best = float(vals[best_idx])
    step = 0.25
    eye = np.eye(d)
    for _ in range(100):
        cands = np.concatenate([best_x + step * eye, best_x - step * eye])
        cands /= np.linalg.norm(cands, axis=1, keepdims=True)
        cvals = np.abs(np.asarray(g(cands), dtype=float))
        j = int(np.argmax(cvals))
        if cvals[j] > best:
            best = float(cvals[j])
            best_x = cands[j]
        else:
            step *= 0.5
            if step < 1e-7:
                break
    return SupEstimate(value=best, argmax=best_x)
