"""Dot-product kernels on the sphere and their degree-indexed spectra.

A dot-product kernel k(x, x') = kappa(x.x') diagonalizes in spherical
harmonics; the degree-k eigenvalue is the projection of kappa onto P_{k,d}
under the sphere marginal, repeated with multiplicity N(d, k).  Kernels can
be given as a closed-form profile kappa, as an activation sigma generating
a random-feature kernel (eigenvalues are squared projection coefficients),
or as an already-tabulated spectrum.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import expit, gammaln, roots_jacobi

from .errors import FitError, NonPsdKernelError, ValidationError
from .harmonics import cumulative_dims, multiplicity_floats
from .orthopoly import (QuadratureRule, default_num_nodes, legendre_table,
                        quadrature_rule)

__all__ = [
    "KernelSpec",
    "Spectrum",
    "RateModel",
    "TailValue",
    "activation_coefficient",
    "activation_coefficients",
    "builtin_kernel",
    "compute_spectrum",
    "fit_beta",
    "fit_tail_exponent",
    "gaussian_dim_scan",
    "kernel_profile",
    "kernel_to_json",
    "mercer_reconstruct",
    "predicted_rate",
    "q_factor",
    "spectrum_to_csv",
    "synth_activation",
    "tail",
]

# negative eigenvalues beyond this are a modeling error, not quadrature noise
NEGATIVITY_TOL = 1e-10

BUILTIN_NAMES = ("arccos0", "arccos1", "relu_alpha", "gaussian",
                 "sigmoid", "softplus", "silu", "heaviside", "custom")


# ---------------------------------------------------------------------------
# kernel specifications


@dataclass
class KernelSpec:
    """A dot-product kernel in one of three representations.

    ``closed_form`` carries a profile kappa(t); ``activation`` carries sigma(t)
    whose random-feature kernel is induced (kappa is then only available via
    Mercer reconstruction of the computed spectrum); ``tabulated`` wraps an
    existing Spectrum.  ``exact_coeff_fn``, when present, returns the signed
    projection coefficients of the generating activation in closed form and is
    preferred over quadrature.
    """

    name: str
    d: int
    variant: str
    params: dict = field(default_factory=dict)
    kappa_fn: Optional[Callable] = None
    activation_fn: Optional[Callable] = None
    table: Optional["Spectrum"] = None
    exact_coeff_fn: Optional[Callable] = None
    exact_trace: Optional[float] = None
    _profile_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 3:
            raise ValidationError(f"dimension must be >= 3, got {self.d}")
        if self.variant not in ("closed_form", "activation", "tabulated"):
            raise ValidationError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "closed_form" and self.kappa_fn is None:
            raise ValidationError("closed_form kernel needs kappa_fn")
        if self.variant == "activation":
            if self.activation_fn is None:
                raise ValidationError("activation kernel needs activation_fn")
            if self.kappa_fn is not None:
                raise ValidationError("activation kernels induce kappa; do not supply it")
        if self.variant == "tabulated" and self.table is None:
            raise ValidationError("tabulated kernel needs a Spectrum")

    def trace(self) -> float:
        """kappa(1), the kernel trace under the uniform sphere measure."""
        if self.exact_trace is not None:
            return float(self.exact_trace)
        if self.variant == "closed_form":
            return float(self.kappa_fn(np.asarray(1.0)))
        if self.variant == "tabulated":
            return self.table.trace_target
        rule = quadrature_rule(self.d, 400)
        sig = np.asarray(self.activation_fn(rule.nodes), dtype=float)
        return float(np.sum(rule.weights * sig * sig))

    def kappa_evaluator(self, k_max: Optional[int] = None) -> Callable:
        """Vectorized t -> kappa(t); Mercer-reconstructed for activation kernels."""
        return kernel_profile(self, k_max=k_max)


# ---------------------------------------------------------------------------
# spectra


class TailValue(NamedTuple):
    T: float
    Lambda: float
    beyond_truncation: bool


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues lambda_0..lambda_K of a dot-product kernel, by degree.

    ``trace_target`` is kappa(1); ``truncation_residual`` is the spectral mass
    beyond degree K.  ``coefficients`` stores the signed activation projection
    coefficients when the spectrum has activation provenance (lambda_k = b_k^2).
    """

    d: int
    lambdas: np.ndarray
    multiplicities: np.ndarray
    trace_target: float
    truncation_residual: float
    coefficients: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.shape != np.shape(self.multiplicities):
            raise ValidationError("lambdas and multiplicities must be 1-d and aligned")
        if np.any(lam < -1e-12):
            raise NonPsdKernelError(
                f"negative eigenvalue {lam.min()} below tolerance in {self.name!r}")
        if self.truncation_residual < -1e-8:
            raise ValidationError(
                f"truncation residual {self.truncation_residual} < -1e-8; "
                "trace identity violated")
        for arr in (self.lambdas, self.multiplicities):
            np.asarray(arr).setflags(write=False)
        if self.coefficients is not None:
            np.asarray(self.coefficients).setflags(write=False)

    @property
    def k_max(self) -> int:
        return len(self.lambdas) - 1

    @property
    def block_masses(self) -> np.ndarray:
        """N(d, k) * lambda_k per degree."""
        return self.multiplicities * self.lambdas

    @property
    def boundaries(self) -> np.ndarray:
        """Cumulative dimensions m_k = sum_{i<=k} N(d, i)."""
        return np.cumsum(self.multiplicities)

    def tail(self, m) -> TailValue:
        return tail(self, m)

    def expanded(self, j_max: int) -> np.ndarray:
        """First j_max entries of the multiplicity-expanded sequence mu_1, mu_2, ..."""
        bounds = self.boundaries
        if j_max > bounds[-1]:
            raise ValidationError(
                f"j_max={j_max} exceeds tabulated multiplicity {bounds[-1]:.0f}")
        counts = np.minimum(self.multiplicities,
                            np.maximum(j_max - np.concatenate(([0.0], bounds[:-1])), 0.0))
        return np.repeat(self.lambdas, counts.astype(int))[:j_max]


def tail(spectrum: Spectrum, m) -> TailValue:
    """Tail mass T(m) = sum_{i>m} mu_i and Lambda(m) = sqrt(T(m)).

    Computed blockwise: suffix sums of N(d,k) lambda_k plus the truncation
    residual, minus the partial block below index m; exact within a block.
    Indices beyond the truncation return the residual-based value, flagged.
    """
    if m < 0:
        raise ValidationError(f"tail index must be >= 0, got {m}")
    masses = spectrum.block_masses
    bounds = spectrum.boundaries
    residual = max(spectrum.truncation_residual, 0.0)
    if m >= bounds[-1]:
        return TailValue(T=residual, Lambda=math.sqrt(residual), beyond_truncation=True)
    # first degree whose boundary exceeds m owns the partial block
    k_part = int(np.searchsorted(bounds, m, side="right"))
    suffix = float(np.sum(masses[k_part:])) + residual
    below = bounds[k_part - 1] if k_part > 0 else 0.0
    partial = float((m - below) * spectrum.lambdas[k_part])
    t_val = max(suffix - partial, 0.0)
    return TailValue(T=t_val, Lambda=math.sqrt(t_val), beyond_truncation=False)


# ---------------------------------------------------------------------------
# activation projection coefficients


def activation_coefficients(sigma: Callable, d: int, k_max: int,
                            rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """Projections b_k = int sigma(t) P_{k,d}(t) dtau~(t) for k = 0..k_max."""
    if rule is None:
        rule = quadrature_rule(d, default_num_nodes(k_max))
    if k_max > rule.exactness_degree // 2:
        warnings.warn(
            f"degree {k_max} exceeds half the rule exactness "
            f"({rule.exactness_degree}); coefficients may be inaccurate",
            stacklevel=2)
    sig = np.asarray(sigma(rule.nodes), dtype=float)
    table = legendre_table(k_max, d, rule.nodes)
    return table @ (rule.weights * sig)


def activation_coefficient(sigma: Callable, d: int, k: int,
                           rule: Optional[QuadratureRule] = None) -> float:
    """Single Funk-Hecke coefficient b_k; the induced RF kernel has lambda_k = b_k^2."""
    return float(activation_coefficients(sigma, d, k, rule=rule)[k])


@lru_cache(maxsize=64)
def _half_interval_rule(d: int, num_nodes: int):
    """Gauss-Jacobi rule for int_0^1 f(t) (1-t)^((d-3)/2) dt."""
    a = 0.5 * (d - 3)
    x, w = roots_jacobi(num_nodes, a, 0.0)
    t = 0.5 * (x + 1.0)
    wt = w * 0.5 ** (a + 1.0)
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


def _log_beta_const(nu: float) -> float:
    # log B(1/2, nu + 1/2): normalization of the marginal density
    return 0.5 * math.log(math.pi) + gammaln(nu + 0.5) - gammaln(nu + 1.0)


@lru_cache(maxsize=64)
def split_rule(d: int, num_nodes: int):
    """Composite rule for the marginal measure, split at t = 0.

    Integrates functions that are analytic on [-1, 0] and [0, 1] separately
    (activations with a kink or jump at the origin) to near machine
    precision, where the global Gauss rule converges only algebraically.
    Returns (nodes, weights) with weights summing to 1.
    """
    t, wt = _half_interval_rule(d, num_nodes)
    a = 0.5 * (d - 3)
    w_half = wt * (1.0 + t) ** a * math.exp(-_log_beta_const(0.5 * (d - 2)))
    nodes = np.concatenate([-t[::-1], t])
    weights = np.concatenate([w_half[::-1], w_half])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _relu_alpha_coefficients(d: int, alpha: int, k_max: int) -> np.ndarray:
    """Exact signed coefficients of max(0, t)^alpha, alpha in {0, 1}.

    Closed forms follow from the Gegenbauer derivative identity; evaluated in
    log space so degrees up to ~10^6 stay accurate (quadrature would lose all
    relative accuracy once multiplicities amplify the roundoff).
    """
    if alpha not in (0, 1):
        raise ValidationError("closed-form coefficients exist only for alpha in {0, 1}")
    nu = 0.5 * (d - 2)
    log_b_const = _log_beta_const(nu)
    ks = np.arange(k_max + 1, dtype=float)
    # log C_k^nu(1)
    log_cnu1 = gammaln(ks + 2 * nu) - gammaln(2 * nu) - gammaln(ks + 1)
    b = np.zeros(k_max + 1)
    if alpha == 0:
        b[0] = 0.5
        kk = np.arange(1, k_max + 1, 2, dtype=float)
        m = (kk - 1) / 2
        logs = (math.log(2 * nu) + gammaln(m + nu + 1) - gammaln(nu + 1)
                - gammaln(m + 1) - np.log(kk) - np.log(kk + 2 * nu)
                - log_b_const - log_cnu1[1::2])
        b[1::2] = np.where(m % 2 == 0, 1.0, -1.0) * np.exp(logs)
    else:
        b[0] = math.exp(-math.log(d - 1.0) - log_b_const)
        if k_max >= 1:
            b[1] = 1.0 / (2.0 * d)
        if k_max >= 2:
            kk = np.arange(2, k_max + 1, 2, dtype=float)
            m = kk / 2
            logs = (math.log(nu) + gammaln(m + nu) - gammaln(nu + 1)
                    - gammaln(m) - np.log(m) - np.log(2 * m - 1)
                    - np.log(2 * m + 2 * nu + 1) - log_b_const - log_cnu1[2::2])
            b[2::2] = np.where(m % 2 == 1, 1.0, -1.0) * np.exp(logs)
    return b


def _even_moment(d: int, j: int) -> float:
    """E[t^(2j)] under the sphere marginal: prod_{i<j} (2i+1)/(d+2i)."""
    out = 1.0
    for i in range(j):
        out *= (2 * i + 1) / (d + 2 * i)
    return out


# ---------------------------------------------------------------------------
# spectrum computation


def compute_spectrum(spec: KernelSpec, k_max: Optional[int] = None,
                     rule: Optional[QuadratureRule] = None) -> Spectrum:
    """Degree-indexed eigenvalues of the kernel up to k_max.

    Closed-form kernels project kappa onto each P_{k,d}; activation kernels
    square the projection coefficients of sigma.  Closed-form coefficient
    formulas are used when the spec carries them.  Negative projections below
    -NEGATIVITY_TOL raise; small negatives are clamped to zero.
    """
    if spec.variant == "tabulated":
        if k_max is not None and k_max != spec.table.k_max:
            raise ValidationError(
                f"tabulated spectrum has k_max={spec.table.k_max}, requested {k_max}")
        return spec.table
    if k_max is None:
        raise ValidationError("k_max is required for non-tabulated kernels")
    if k_max < 0:
        raise ValidationError(f"k_max must be >= 0, got {k_max}")

    coeffs = None
    if spec.exact_coeff_fn is not None:
        coeffs = np.asarray(spec.exact_coeff_fn(k_max), dtype=float)
        lambdas = coeffs ** 2
    elif spec.variant == "activation":
        if rule is None:
            rule = quadrature_rule(spec.d, default_num_nodes(k_max))
        coeffs = activation_coefficients(spec.activation_fn, spec.d, k_max, rule=rule)
        lambdas = coeffs ** 2
    else:
        if rule is None:
            rule = quadrature_rule(spec.d, default_num_nodes(k_max))
        if rule.exactness_degree < 2 * k_max:
            raise ValidationError(
                f"rule exactness {rule.exactness_degree} insufficient for k_max={k_max}")
        kap = np.asarray(spec.kappa_fn(rule.nodes), dtype=float)
        table = legendre_table(k_max, spec.d, rule.nodes)
        lambdas = table @ (rule.weights * kap)
        if np.any(lambdas < -NEGATIVITY_TOL):
            k_bad = int(np.argmin(lambdas))
            raise NonPsdKernelError(
                f"kernel {spec.name!r} is not positive semi-definite: "
                f"lambda_{k_bad} = {lambdas[k_bad]:.3e}")
        lambdas = np.where(lambdas < 0.0, 0.0, lambdas)

    mults = multiplicity_floats(spec.d, k_max)
    trace_target = spec.trace()
    residual = trace_target - float(np.sum(mults * lambdas))
    return Spectrum(d=spec.d, lambdas=lambdas, multiplicities=mults,
                    trace_target=trace_target, truncation_residual=residual,
                    coefficients=coeffs, name=spec.name)


def mercer_reconstruct(spectrum: Spectrum, t):
    """Partial Mercer sum kappa_hat(t) = sum_{k<=K} lambda_k N(d,k) P_{k,d}(t).

    Since |P| <= 1, the reconstruction is uniformly within the truncation
    residual of the true profile.
    """
    table = legendre_table(spectrum.k_max, spectrum.d, t)
    masses = spectrum.block_masses
    return np.tensordot(masses, table, axes=(0, 0))


class SynthesizedActivation:
    """sigma(t) = sum_k sqrt(lambda_k) N(d,k) P_{k,d}(t) from a spectrum."""

    def __init__(self, d: int, weights: np.ndarray):
        self.d = d
        self.weights = weights  # sqrt(lambda_k) * N(d,k)
        self.k_max = len(weights) - 1

    def __call__(self, t):
        table = legendre_table(self.k_max, self.d, t)
        return np.tensordot(self.weights, table, axes=(0, 0))


def synth_activation(spectrum: Spectrum, k_max: Optional[int] = None) -> SynthesizedActivation:
    """Activation generating the given spectrum as a random-feature kernel.

    Round-trip property: computing the spectrum of the returned activation
    reproduces lambda_0..lambda_K and vanishes beyond K.
    """
    if k_max is None:
        k_max = spectrum.k_max
    lam = spectrum.lambdas[:k_max + 1]
    if np.any(lam < 0):
        raise ValidationError("negative eigenvalue in input spectrum")
    weights = np.sqrt(lam) * spectrum.multiplicities[:k_max + 1]
    return SynthesizedActivation(spectrum.d, weights)


# ---------------------------------------------------------------------------
# decay-rate fitting and bound constants

_EXPAND_CAP = 1 << 22


@dataclass(frozen=True)
class RateModel:
    """Fitted power-law decay mu_j ~ j^-(1+2 beta) with diagnostics."""

    beta_hat: float
    window: tuple
    residual: float
    slope: float
    intercept: float
    envelope: str = "power_law"
    q_value: Optional[float] = None


def fit_beta(spectrum: Spectrum, window: Optional[tuple] = None) -> RateModel:
    """Least-squares fit of log mu_j vs log j on the expanded sequence.

    Zero eigenvalues are excluded (the power-law ansatz addresses the
    envelope); beta_hat = -(slope + 1)/2.
    """
    total = spectrum.boundaries[-1]
    if window is None:
        window = (2, int(min(total, 100_000)))
    j_min, j_max = int(window[0]), int(window[1])
    if j_min < 1 or j_max <= j_min:
        raise ValidationError(f"bad fit window {window}")
    if j_max > total:
        raise ValidationError(f"window end {j_max} beyond truncation {total:.0f}")
    if j_max > _EXPAND_CAP:
        raise ValidationError(
            f"window end {j_max} exceeds materialization cap {_EXPAND_CAP}; "
            "narrow the window")
    mu = spectrum.expanded(j_max)[j_min - 1:]
    js = np.arange(j_min, j_max + 1, dtype=float)
    mask = mu > 0
    if len(np.unique(mu[mask])) < 5:
        raise FitError("need at least 5 distinct positive eigenvalues in the window")
    x, y = np.log(js[mask]), np.log(mu[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    beta = -(slope + 1.0) / 2.0
    if beta <= 0:
        raise FitError(f"fitted decay beta={beta:.4g} is not positive")
    d = spectrum.d
    return RateModel(beta_hat=float(beta), window=(j_min, j_max), residual=resid,
                     slope=float(slope), intercept=float(intercept),
                     envelope="power_law", q_value=float((d + 1) ** (2 * beta)))


def fit_tail_exponent(spectrum: Spectrum, k_window: tuple) -> tuple:
    """Fit T(m) ~ m^-gamma on degree boundaries k in [k_lo, k_hi]; returns (gamma, residual)."""
    k_lo, k_hi = k_window
    k_hi = min(k_hi, spectrum.k_max - 1)
    bounds = spectrum.boundaries
    ms, ts = [], []
    for k in range(k_lo, k_hi + 1):
        t_val = spectrum.tail(bounds[k]).T
        if t_val > 0:
            ms.append(bounds[k])
            ts.append(t_val)
    if len(ms) < 3:
        raise FitError("not enough positive tail values in the window")
    x, y = np.log(ms), np.log(ts)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(-slope), resid


class QFactor(NamedTuple):
    value: float
    attained_at_cap: bool
    argmax_k: int


def q_factor(L: Callable, d: int, k_cap: int = 10_000) -> QFactor:
    """q(d, L) = sup_{1 <= k <= k_cap} L(k) / L((d+1)k) for decreasing L.

    The supremum over all k may sit at infinity for slowly varying L, so a
    finite cap is used and flagged when it is the active maximizer.
    """
    ks = np.unique(np.concatenate([
        np.arange(1, min(k_cap, 1024) + 1),
        np.unique(np.geomspace(1, k_cap, 512).astype(np.int64)),
    ]))
    ks = ks[ks <= k_cap]
    lk = np.array([float(L(int(k))) for k in ks])
    ldk = np.array([float(L(int((d + 1) * k))) for k in ks])
    if np.any(lk <= 0) or np.any(ldk <= 0):
        raise ValidationError("L must be positive on the scanned range")
    # decreasing check on the combined grid
    grid = np.concatenate([ks, (d + 1) * ks])
    order = np.argsort(grid)
    vals = np.concatenate([lk, ldk])[order]
    if np.any(np.diff(vals) > 1e-12 * np.abs(vals[:-1])):
        raise ValidationError("L is not decreasing on the scanned range")
    ratios = lk / ldk
    idx = int(np.argmax(ratios))
    at_cap = bool(idx == len(ks) - 1 and ratios[idx] > ratios[len(ks) // 2] * (1 + 1e-9))
    return QFactor(value=float(ratios[idx]), attained_at_cap=at_cap,
                   argmax_k=int(ks[idx]))


def predicted_rate(beta: float, d: int) -> tuple:
    """Exponent pair of the rate d^(beta/(2 beta + 1)) n^(-beta/(2 (2 beta + 1)))."""
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    denom = 2.0 * beta + 1.0
    return (beta / denom, beta / (2.0 * denom))


# ---------------------------------------------------------------------------
# kernel catalog


def _softplus(t):
    t = np.asarray(t, dtype=float)
    return np.logaddexp(0.0, t)


def builtin_kernel(name: str, d: int, params: Optional[dict] = None, **kw) -> KernelSpec:
    """Construct a catalog kernel by name.

    arccos0/arccos1 are closed forms of the step and rectifier random-feature
    kernels under the uniform sphere measure (the degree-1 form carries a 1/d
    normalization, exposed via ``dim_normalized``); gaussian(h) is
    exp(-(2-2t)/h^2); the smooth names are activation variants.
    """
    params = dict(params or {})
    params.update(kw)
    if name not in BUILTIN_NAMES:
        raise ValidationError(f"unknown kernel name {name!r}; choose from {BUILTIN_NAMES}")

    if name == "arccos0":
        def kappa(t):
            return (math.pi - np.arccos(np.clip(t, -1.0, 1.0))) / (2.0 * math.pi)
        return KernelSpec(
            name=name, d=d, variant="closed_form", params=params, kappa_fn=kappa,
            exact_coeff_fn=lambda k_max: _relu_alpha_coefficients(d, 0, k_max),
            exact_trace=0.5)

    if name == "arccos1":
        dim_normalized = bool(params.setdefault("dim_normalized", True))
        scale = 1.0 / d if dim_normalized else 1.0

        def kappa(t):
            t = np.clip(t, -1.0, 1.0)
            return scale * ((math.pi - np.arccos(t)) * t
                            + np.sqrt(np.maximum(1.0 - t * t, 0.0))) / (2.0 * math.pi)

        coeff_scale = 1.0 if dim_normalized else math.sqrt(d)
        return KernelSpec(
            name=name, d=d, variant="closed_form", params=params, kappa_fn=kappa,
            exact_coeff_fn=lambda k_max: coeff_scale * _relu_alpha_coefficients(d, 1, k_max),
            exact_trace=scale * 0.5)

    if name == "gaussian":
        h = float(params.setdefault("h", math.sqrt(2.0)))
        if h <= 0:
            raise ValidationError(f"bandwidth must be positive, got {h}")

        def kappa(t):
            return np.exp(-(2.0 - 2.0 * np.asarray(t, dtype=float)) / (h * h))

        return KernelSpec(name=name, d=d, variant="closed_form", params=params,
                          kappa_fn=kappa, exact_trace=1.0)

    if name in ("relu_alpha", "heaviside"):
        alpha = 0 if name == "heaviside" else int(params.setdefault("alpha", 1))
        if name == "heaviside":
            params["alpha"] = 0
        if alpha < 0:
            raise ValidationError(f"alpha must be a nonnegative integer, got {alpha}")

        def sigma(t, _a=alpha):
            t = np.asarray(t, dtype=float)
            if _a == 0:
                return (t > 0).astype(float)
            return np.where(t > 0, t, 0.0) ** _a

        exact_fn = None
        if alpha in (0, 1):
            exact_fn = lambda k_max, _a=alpha: _relu_alpha_coefficients(d, _a, k_max)
        else:
            exact_fn = lambda k_max, _a=alpha: _relu_alpha_quadrature(d, _a, k_max)
        return KernelSpec(name=name, d=d, variant="activation", params=params,
                          activation_fn=sigma, exact_coeff_fn=exact_fn,
                          exact_trace=0.5 * _even_moment(d, alpha))

    if name in ("sigmoid", "softplus", "silu"):
        fns = {"sigmoid": lambda t: expit(np.asarray(t, dtype=float)),
               "softplus": _softplus,
               "silu": lambda t: np.asarray(t, dtype=float) * expit(np.asarray(t, dtype=float))}
        return KernelSpec(name=name, d=d, variant="activation", params=params,
                          activation_fn=fns[name])

    # custom: caller supplies kappa= or sigma= in params
    kappa_fn = params.pop("kappa", None)
    sigma_fn = params.pop("sigma", None)
    if kappa_fn is not None and sigma_fn is not None:
        raise ValidationError("custom kernel takes kappa or sigma, not both")
    if kappa_fn is not None:
        return KernelSpec(name="custom", d=d, variant="closed_form",
                          params=params, kappa_fn=kappa_fn)
    if sigma_fn is not None:
        return KernelSpec(name="custom", d=d, variant="activation",
                          params=params, activation_fn=sigma_fn)
    raise ValidationError("custom kernel needs a kappa or sigma callable")


def _relu_alpha_quadrature(d: int, alpha: int, k_max: int) -> np.ndarray:
    """Coefficients of max(0,t)^alpha for alpha >= 2 via a half-interval rule.

    The integrand restricted to [0, 1] is analytic, so the Jacobi rule with
    the (1-t)^((d-3)/2) endpoint factor converges superexponentially.
    """
    n = max(64, k_max // 2 + 16)
    t, wt = _half_interval_rule(d, n)
    a = 0.5 * (d - 3)
    log_b = _log_beta_const(0.5 * (d - 2))
    f = (t ** alpha) * (1.0 + t) ** a
    table = legendre_table(k_max, d, t)
    return (table @ (wt * f)) * math.exp(-log_b)


def tabulated_kernel(spectrum: Spectrum, name: str = "tabulated") -> KernelSpec:
    """Wrap an existing spectrum as a kernel specification."""
    return KernelSpec(name=name, d=spectrum.d, variant="tabulated",
                      params={}, table=spectrum,
                      exact_trace=spectrum.trace_target)


# ---------------------------------------------------------------------------
# kernel profile evaluation

_DEFAULT_PROFILE_KMAX = 60


def kernel_profile(spec: KernelSpec, spectrum: Optional[Spectrum] = None,
                   k_max: Optional[int] = None) -> Callable:
    """Vectorized evaluator for kappa(t) on [-1, 1].

    Closed forms evaluate directly.  Activation and tabulated kernels go
    through the Mercer partial sum, compiled once to a Chebyshev series (the
    partial sum is a polynomial, so the compilation is exact).
    """
    if spec.variant == "closed_form":
        fn = spec.kappa_fn
        return lambda t: np.asarray(fn(np.clip(np.asarray(t, dtype=float), -1.0, 1.0)))
    key = ("profile", k_max)
    if key in spec._profile_cache:
        return spec._profile_cache[key]
    if spectrum is None:
        if spec.variant == "tabulated":
            spectrum = spec.table
        else:
            spectrum = compute_spectrum(spec, k_max=k_max or _DEFAULT_PROFILE_KMAX)
    deg = spectrum.k_max + 4
    xs = np.cos(np.pi * np.arange(deg + 1) / deg)
    coef = np.polynomial.chebyshev.chebfit(xs, mercer_reconstruct(spectrum, xs), deg)

    def profile(t, _coef=coef):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return np.polynomial.chebyshev.chebval(t, _coef)

    spec._profile_cache[key] = profile
    return profile


# ---------------------------------------------------------------------------
# dimension scan for the Gaussian profile


def gaussian_dim_scan(h: float, j: int, d_list, rule: Optional[QuadratureRule] = None):
    """N(d, j) lambda_j(d) for the Gaussian kernel across dimensions.

    Returns one row per d with the degree-j eigenvalue, its multiplicity,
    the block mass N(d,j) lambda_j, and the mass-to-dimension ratio.
    """
    if j < 1:
        raise ValidationError(f"degree must be >= 1, got {j}")
    rows = []
    for d in d_list:
        spec = builtin_kernel("gaussian", d, h=h)
        spectrum = compute_spectrum(spec, k_max=max(j + 4, 8), rule=rule)
        lam = float(spectrum.lambdas[j])
        n_dk = float(spectrum.multiplicities[j])
        rows.append({"d": int(d), "lambda_j": lam, "multiplicity": n_dk,
                     "mass": n_dk * lam, "ratio_to_d": n_dk * lam / d})
    return rows


# ---------------------------------------------------------------------------
# serialization


def _fmt(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2 ** 53:
        return repr(int(x))
    return repr(x)


def spectrum_to_csv(spectrum: Spectrum, path) -> None:
    """Write (k, N_dk, lambda_k, mu_block_start, tail_T_at_block_end) rows."""
    bounds = spectrum.boundaries
    lines = ["k,N_dk,lambda_k,mu_block_start,tail_T_at_block_end"]
    start = 1.0
    for k in range(spectrum.k_max + 1):
        t_val = spectrum.tail(bounds[k]).T
        lines.append(",".join([
            str(k), _fmt(spectrum.multiplicities[k]),
            repr(float(spectrum.lambdas[k])), _fmt(start), repr(float(t_val))]))
        start = bounds[k] + 1.0
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def kernel_to_json(spec: KernelSpec) -> str:
    """JSON object (name, d, params) describing the kernel."""
    params = {k: v for k, v in spec.params.items() if not callable(v)}
    return json.dumps({"name": spec.name, "d": spec.d, "params": params},
                      sort_keys=True)
