"""Computable witnesses for the sup-norm / L2 gap of an RKHS ball.

``delta_estimate`` maximizes a point evaluation over unit-ball functions that
are small on a sample, restricted to the span of kernel sections at the
sample plus the probe.  The restriction makes every returned certificate a
verified lower bound: both constraint values are recomputed from the Gram
matrix before reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import FitError, NumericalError, ValidationError
from .harmonics import SpherePointSet, cumulative_dim, multiplicity
from .orthopoly import legendre_eval, legendre_table, quadrature_rule
from .spectra import (KernelSpec, Spectrum, activation_coefficients,
                      kernel_profile, split_rule)
from .krr import gram, kernel_expansion

__all__ = [
    "GapCertificate",
    "HardFunction",
    "NeuronProjection",
    "RfBallResult",
    "delta_estimate",
    "hard_function",
    "project_neuron",
    "rf_ball_objective",
]

_EIG_CUTOFF = 1e-12


# ---------------------------------------------------------------------------
# gap estimator


@dataclass(frozen=True)
class GapCertificate:
    """Feasible witness for the sup-norm / L2 gap at a probe point.

    ``value`` = f(x0) for an explicit f with ||f||_H <= 1 and empirical norm
    <= epsilon, hence a certified lower bound on the gap.
    """

    probe: np.ndarray
    value: float
    rkhs_norm: float
    nu_norm: float
    epsilon: float
    multiplier: float
    centers: np.ndarray
    coefficients: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _two_ellipsoid_max(w_tilde: np.ndarray, q_vals: np.ndarray, U: np.ndarray,
                       epsilon: float, tol: float, max_iter: int):
    """Maximize w'b subject to ||b|| <= 1 and b'Qb <= eps^2 (Q = U diag(q) U').

    Returns (beta, multiplier, binding_tag).  Stationary directions are
    beta(eta) ~ (I + eta Q)^-1 w; the empirical norm of the H-normalized
    direction decreases in eta, so a single bisection finds the binding point.
    """
    w_hat = U.T @ w_tilde
    norm_w = float(np.linalg.norm(w_hat))
    if norm_w == 0.0:
        return np.zeros_like(w_hat), 0.0, "degenerate"

    def direction(eta: float):
        b = w_hat / (1.0 + eta * q_vals)
        nrm = np.linalg.norm(b)
        return b / nrm

    def nu_of(eta: float) -> float:
        b = direction(eta)
        return float(np.sqrt(np.sum(q_vals * b * b)))

    if nu_of(0.0) <= epsilon * (1.0 + 1e-12):
        return U @ direction(0.0), 0.0, "ball_only"

    if epsilon == 0.0:
        null = q_vals <= _EIG_CUTOFF * max(q_vals.max(), 1.0)
        b = np.where(null, w_hat, 0.0)
        nrm = np.linalg.norm(b)
        if nrm == 0.0:
            return np.zeros_like(w_hat), math.inf, "null_empty"
        return U @ (b / nrm), math.inf, "null_space"

    # candidate with only the empirical constraint binding
    pos = q_vals > _EIG_CUTOFF * q_vals.max()
    if np.all(pos):
        b_q = w_hat / q_vals
        nu_q = float(np.sqrt(np.sum(q_vals * b_q * b_q)))
        b_q = b_q * (epsilon / nu_q)
        if np.linalg.norm(b_q) <= 1.0 + 1e-12:
            return U @ b_q, math.inf, "empirical_only"

    lo, hi = 0.0, 1.0
    it = 0
    while nu_of(hi) > epsilon and it < 200:
        hi *= 4.0
        it += 1
    if nu_of(hi) > epsilon:
        raise NumericalError("could not bracket the constraint multiplier")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if nu_of(mid) > epsilon:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1.0) and abs(nu_of(hi) - epsilon) <= tol * max(epsilon, 1e-30):
            break
    eta = hi
    return U @ direction(eta), eta, "both_binding"


def delta_estimate(spec: KernelSpec, X: Optional[SpherePointSet], epsilon: float,
                   probes: np.ndarray, tol: float = 1e-8,
                   profile: Optional[Callable] = None,
                   max_iter: int = 200) -> GapCertificate:
    """Best feasible gap witness over the probe points.

    For each probe x0, maximizes f(x0) over the span of kernel sections at
    the sample points plus x0, subject to the unit RKHS ball and the
    empirical second-moment constraint at level epsilon.  The final
    coefficients are rescaled so both constraints hold after recomputation,
    keeping the certificate a valid lower bound.
    """
    if epsilon < 0:
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValidationError("need at least one probe point")
    if profile is None:
        profile = kernel_profile(spec)
    n = 0 if X is None else len(X)
    best: Optional[GapCertificate] = None
    for x0 in probes:
        Z = np.vstack([X.points, x0[None, :]]) if n else x0[None, :]
        t = Z @ Z.T
        np.fill_diagonal(t, 1.0)
        Kz = profile(t)
        Kz = 0.5 * (Kz + Kz.T)
        u = Kz[-1]
        s_vals, V = scipy.linalg.eigh(Kz)
        keep = s_vals > _EIG_CUTOFF * max(s_vals[-1], 1e-300)
        s_vals, V = s_vals[keep], V[:, keep]
        s_half = np.sqrt(s_vals)
        w_tilde = (V.T @ u) / s_half
        if n:
            Kxz = Kz[:n]
            Qt = (V.T @ (Kxz.T @ (Kxz @ V))) / n
            Qt = (Qt / s_half[:, None]) / s_half[None, :]
            Qt = 0.5 * (Qt + Qt.T)
            q_vals, U = scipy.linalg.eigh(Qt)
            q_vals = np.clip(q_vals, 0.0, None)
        else:
            q_vals = np.zeros(len(s_vals))
            U = np.eye(len(s_vals))
        beta, eta, tag = _two_ellipsoid_max(w_tilde, q_vals, U, epsilon, tol, max_iter)
        alpha = V @ (beta / s_half)
        # recompute constraints in the original coordinates and rescale to
        # exact feasibility; scaling down keeps the value a valid lower bound
        h_norm = math.sqrt(max(float(alpha @ (Kz @ alpha)), 0.0))
        if n:
            nu_norm = float(np.linalg.norm(Kxz @ alpha) / math.sqrt(n))
        else:
            nu_norm = 0.0
        scale = max(1.0, h_norm, nu_norm / epsilon if epsilon > 0 else
                    (math.inf if nu_norm > 1e-12 else 1.0))
        if not math.isfinite(scale):
            alpha = np.zeros_like(alpha)
            h_norm = nu_norm = 0.0
        elif scale > 1.0:
            alpha = alpha / scale
            h_norm /= scale
            nu_norm /= scale
        value = float(u @ alpha)
        cert = GapCertificate(
            probe=x0, value=value, rkhs_norm=h_norm, nu_norm=nu_norm,
            epsilon=float(epsilon), multiplier=float(eta), centers=Z,
            coefficients=alpha,
            diagnostics={"binding": tag, "span_dim": int(len(s_vals)), "n": n})
        if best is None or cert.value > best.value:
            best = cert
    return best


# ---------------------------------------------------------------------------
# spectral hard functions


@dataclass(frozen=True)
class HardFunction:
    """Zonal single-degree function normalized to the unit RKHS ball.

    f(x) = sqrt(N(d,k) lambda_k) P_{k,d}(x0 . x); its RKHS norm is one, its
    L2 norm is sqrt(lambda_k), and its sup is sqrt(N(d,k) lambda_k) at x0.
    """

    d: int
    k: int
    x0: np.ndarray
    scale: float
    lambda_k: float
    multiplicity: int

    @property
    def value_at_pole(self) -> float:
        return self.scale

    @property
    def l2_norm(self) -> float:
        return math.sqrt(self.lambda_k)

    @property
    def rkhs_norm(self) -> float:
        return 1.0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(points, dtype=float)) @ self.x0
        return self.scale * legendre_eval(self.k, self.d, t)


def hard_function(spectrum: Spectrum, k: int, x0: np.ndarray) -> HardFunction:
    """Construct the degree-k hard function for a spectrum with lambda_k > 0."""
    if k < 0 or k > spectrum.k_max:
        raise ValidationError(f"degree {k} outside the tabulated spectrum")
    lam = float(spectrum.lambdas[k])
    if lam <= 0:
        raise ValidationError(f"lambda_{k} = 0; the hard function is undefined")
    x0 = np.asarray(x0, dtype=float)
    if abs(np.linalg.norm(x0) - 1.0) > 1e-9:
        raise ValidationError("pole must be a unit vector")
    n_dk = multiplicity(spectrum.d, k)
    return HardFunction(d=spectrum.d, k=k, x0=x0,
                        scale=math.sqrt(n_dk * lam), lambda_k=lam,
                        multiplicity=n_dk)


# ---------------------------------------------------------------------------
# neuron projection identities


@dataclass(frozen=True)
class NeuronProjection:
    """Degree-truncated projection of a neuron v -> sigma(x0 . v).

    The squared L2 projection error equals the spectral block tail, and the
    squared RKHS norm equals the summed multiplicity of the retained degrees
    with positive eigenvalue (degrees with lambda_i = 0 contribute nothing;
    ``count_differs_from_lemma`` flags when that makes the norm fall short of
    the full cumulative dimension).
    """

    d: int
    k_trunc: int
    x0: np.ndarray
    coefficients: np.ndarray
    l2_error_sq: float
    l2_error_sq_quadrature: float
    rkhs_norm_sq: float
    lemma_count: int
    count_differs_from_lemma: bool
    skipped_degrees: tuple

    def profile(self, t):
        weights = self.coefficients * legendre_table(self.k_trunc, self.d, np.asarray(t))
        return np.tensordot(np.ones(self.k_trunc + 1), weights, axes=(0, 0))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(points, dtype=float)) @ self.x0
        table = legendre_table(self.k_trunc, self.d, t)
        return np.tensordot(self.coefficients, table, axes=(0, 0))


def project_neuron(sigma: Callable, spectrum: Spectrum, d: int, k_trunc: int,
                   x0: np.ndarray, num_nodes: int = 800) -> NeuronProjection:
    """Project the neuron sigma(x0 . v) onto spherical harmonics of degree <= k_trunc.

    ``spectrum`` must be the random-feature spectrum of sigma; its signed
    coefficients are reused when available.  Both the spectral and the direct
    quadrature value of the projection error are computed.
    """
    if d != spectrum.d:
        raise ValidationError("dimension mismatch with the spectrum")
    if k_trunc < 0 or k_trunc > spectrum.k_max:
        raise ValidationError(f"k_trunc {k_trunc} outside the tabulated spectrum")
    if spectrum.coefficients is not None:
        b = np.asarray(spectrum.coefficients[:k_trunc + 1], dtype=float)
    else:
        b = activation_coefficients(sigma, d, k_trunc,
                                    rule=quadrature_rule(d, num_nodes))
    mults = spectrum.multiplicities[:k_trunc + 1]
    coeffs = b * mults  # h(t) = sum b_i N_i P_i(t)

    tail_sq = spectrum.trace_target - float(np.sum(mults * b * b))
    # split at the origin so activations with a kink or jump there still
    # integrate to machine precision
    nodes, weights = split_rule(d, max(num_nodes // 2, 2 * k_trunc + 16))
    sig_vals = np.asarray(sigma(nodes), dtype=float)
    h_vals = coeffs @ legendre_table(k_trunc, d, nodes)
    quad_sq = float(np.sum(weights * (sig_vals - h_vals) ** 2))

    pos = spectrum.lambdas[:k_trunc + 1] > 0
    norm_sq = float(np.sum(mults[pos]))
    skipped = tuple(int(i) for i in np.nonzero(~pos)[0])
    lemma_count = cumulative_dim(d, k_trunc)
    return NeuronProjection(
        d=d, k_trunc=k_trunc, x0=np.asarray(x0, dtype=float),
        coefficients=coeffs, l2_error_sq=max(tail_sq, 0.0),
        l2_error_sq_quadrature=quad_sq, rkhs_norm_sq=norm_sq,
        lemma_count=lemma_count,
        count_differs_from_lemma=bool(abs(norm_sq - lemma_count) > 1e-9),
        skipped_degrees=skipped)


# ---------------------------------------------------------------------------
# random-feature ball approximation


class RfBallResult(NamedTuple):
    objective: float
    l2_error: float
    penalty: float
    c: np.ndarray
    c_norm: float
    t_star: float


def _spectral_profile(spectrum: Spectrum, weights: np.ndarray) -> Callable:
    """Compile t -> sum_k weights_k P_{k,d}(t) to a Chebyshev series."""
    deg = spectrum.k_max + 4
    xs = np.cos(np.pi * np.arange(deg + 1) / deg)
    vals = weights @ legendre_table(spectrum.k_max, spectrum.d, xs)
    coef = np.polynomial.chebyshev.chebfit(xs, vals, deg)

    def profile(t, _coef=coef):
        return np.polynomial.chebyshev.chebval(
            np.clip(np.asarray(t, dtype=float), -1.0, 1.0), _coef)

    return profile


def rf_ball_objective(spec: KernelSpec, spectrum: Spectrum,
                      h_centers: np.ndarray, h_coeffs: np.ndarray,
                      X: SpherePointSet, epsilon: float,
                      reg_grid: Optional[np.ndarray] = None,
                      representation: str = "neuron") -> RfBallResult:
    """Penalized approximation of h by an average of neurons at the sample.

    Minimizes ||h - (1/n) sum c_i sigma_{x_i}||_{L2(tau)} + (eps/sqrt(n)) ||c||
    over a log-spaced grid of quadratic surrogates min Q(c) + t ||c||^2,
    returning the smallest true objective among the candidates.

    ``representation`` says how h is given: "neuron" means h = sum b_j
    sigma_{z_j} (inner products are kernel evaluations); "kernel_section"
    means h = sum b_j kappa(z_j . -) (an RKHS element; inner products pick up
    one extra spectral power and require activation provenance).
    """
    if epsilon < 0:
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    n = len(X)
    h_centers = np.atleast_2d(np.asarray(h_centers, dtype=float))
    h_coeffs = np.asarray(h_coeffs, dtype=float)
    profile = kernel_profile(spec, spectrum=spectrum)
    t_xx = X.points @ X.points.T
    np.fill_diagonal(t_xx, 1.0)
    Kxx = profile(t_xx)
    Kxx = 0.5 * (Kxx + Kxx.T)
    if h_coeffs.size == 0 or not np.any(h_coeffs):
        return RfBallResult(0.0, 0.0, 0.0, np.zeros(n), 0.0, math.inf)
    if representation == "neuron":
        hh = float(h_coeffs @ (profile(h_centers @ h_centers.T) @ h_coeffs))
        r = profile(X.points @ h_centers.T) @ h_coeffs
    elif representation == "kernel_section":
        lam = spectrum.lambdas
        b = spectrum.coefficients
        if b is None:
            b = np.sqrt(lam)
        sq_profile = _spectral_profile(spectrum, lam * lam * spectrum.multiplicities)
        cross_profile = _spectral_profile(spectrum, lam * b * spectrum.multiplicities)
        hh = float(h_coeffs @ (sq_profile(h_centers @ h_centers.T) @ h_coeffs))
        r = cross_profile(X.points @ h_centers.T) @ h_coeffs
    else:
        raise ValidationError(f"unknown representation {representation!r}")

    if reg_grid is None:
        kappa1 = spectrum.trace_target
        reg_grid = kappa1 * np.logspace(-10, 2, 25)
    sm, Vm = scipy.linalg.eigh(Kxx / (n * n))
    sm = np.clip(sm, 0.0, None)
    r_hat = Vm.T @ (r / n)

    def objective_of(c: np.ndarray):
        quad = hh - 2.0 / n * float(r @ c) + float(c @ (Kxx @ c)) / (n * n)
        l2 = math.sqrt(max(quad, 0.0))
        pen = epsilon / math.sqrt(n) * float(np.linalg.norm(c)) if n else 0.0
        return l2 + pen, l2, pen

    best: Optional[RfBallResult] = None
    candidates = [(math.inf, np.zeros(n))]
    for t_reg in np.asarray(reg_grid, dtype=float):
        c = Vm @ (r_hat / (sm + t_reg))
        candidates.append((float(t_reg), c))
    for t_reg, c in candidates:
        obj, l2, pen = objective_of(c)
        if best is None or obj < best.objective:
            best = RfBallResult(objective=obj, l2_error=l2, penalty=pen, c=c,
                                c_norm=float(np.linalg.norm(c)), t_star=t_reg)
    return best


def certificate_to_json_dict(cert: GapCertificate) -> dict:
    """JSON-friendly view of a gap certificate."""
    return {
        "probe": [float(v) for v in cert.probe],
        "value": float(cert.value),
        "rkhs_norm": float(cert.rkhs_norm),
        "nu_norm": float(cert.nu_norm),
        "epsilon": float(cert.epsilon),
        "multiplier": (None if math.isinf(cert.multiplier) else float(cert.multiplier)),
        "num_centers": int(cert.centers.shape[0]),
        "coefficients": [float(v) for v in cert.coefficients],
        "diagnostics": {k: (int(v) if isinstance(v, (int, np.integer)) else v)
                        for k, v in cert.diagnostics.items()},
    }
