"""Learning-curve experiments with theoretical bound overlays.

Each (n, trial) task draws a unit-ball target, a uniform sample, Gaussian
noise, fits the norm-constrained KRR estimator, and measures sup-norm and L2
errors.  Seeds derive from the master seed and the task coordinates, so runs
are reproducible and order-independent under any worker pool.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import FitError, ValidationError
from .harmonics import sphere_sample
from .krr import (fit_constrained, gram, kernel_expansion, sample_target,
                  sup_norm_estimate)
from .spectra import (KernelSpec, RateModel, Spectrum, builtin_kernel,
                      compute_spectrum, fit_beta, kernel_profile, q_factor,
                      spectrum_to_csv)

__all__ = [
    "BoundTerms",
    "ExperimentConfig",
    "LearningCurveReport",
    "RateFit",
    "bound_curves",
    "epsilon_term",
    "e_term",
    "fit_rate",
    "load_csv_rows",
    "run_curve",
    "task_seed",
    "write_report",
]

RAW_HEADER = "n,trial,seed,linf_err,l2_err,rkhs_norm,lambda_ridge,fit_status"
AGG_HEADER = "n,median_linf,p90_linf,median_l2,bound_rhs,bound_lower,m_star"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Everything a learning-curve run depends on, JSON-serializable."""

    kernel_name: str = "sigmoid"
    d: int = 5
    kernel_params: dict = field(default_factory=dict)
    n_grid: tuple = (32, 128, 512, 2048)
    trials: int = 20
    noise_sigma: float = 0.1
    delta: float = 0.05
    target_centers: int = 16
    sup_grid: int = 10_000
    mc_points: int = 10_000
    k_max: int = 60
    master_seed: int = 2024
    L_choice: str = "inverse_m"
    threads: int = 1
    out_dir: Optional[str] = None

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or not self.n_grid:
            raise ValidationError("n grid must be nonempty and strictly increasing")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if self.noise_sigma < 0:
            raise ValidationError("noise level must be >= 0")
        if not (0 < self.delta < 1):
            raise ValidationError("delta must be in (0, 1)")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")

    def spec(self) -> KernelSpec:
        return builtin_kernel(self.kernel_name, self.d, dict(self.kernel_params))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n_grid"] = list(self.n_grid)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# seeds


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def task_seed(master_seed: int, n: int, trial: int) -> int:
    """Derived seed master ^ mix(n, trial); collision-free across the grid."""
    return (master_seed ^ _splitmix64((n << 20) | trial)) & 0xFFFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# bound terms


def epsilon_term(n: int, sigma: float, delta: float, kappa1: float) -> float:
    """(sigma^2 kappa(1) (1 + log(1/delta)) / n)^(1/4)."""
    return (sigma * sigma * kappa1 * (1.0 + math.log(1.0 / delta)) / n) ** 0.25


def e_term(n: int, delta: float, kappa1: float) -> float:
    """sqrt(kappa(1) (log n + log(1/delta)) / n)."""
    return math.sqrt(kappa1 * (math.log(n) + math.log(1.0 / delta)) / n)


@dataclass(frozen=True)
class BoundTerms:
    """Per-n upper-bound scan result and the spectral lower-bound value."""

    n: int
    epsilon: float
    e: float
    m_star: float
    rhs: float
    sqrt_qL_term: float
    lower: float
    q: float
    q_at_cap: bool


def _sup_tail_times_power(spectrum: Spectrum, power: float) -> float:
    """sup_m T(m) m^power over the tabulated range, exact per block for power=1.

    Within a block T(m) = S - (m - m0) lam is affine, so T(m) m^power is
    maximized at a block endpoint or the interior vertex (power = 1).
    """
    masses = spectrum.block_masses
    bounds = spectrum.boundaries
    residual = max(spectrum.truncation_residual, 0.0)
    suffix = np.concatenate([np.cumsum(masses[::-1])[::-1], [0.0]]) + residual
    best = 0.0
    for k in range(spectrum.k_max + 1):
        m0 = bounds[k - 1] if k else 0.0
        lam = spectrum.lambdas[k]
        s_k = suffix[k]
        for m in (m0 + 1.0, bounds[k]):
            t_val = max(s_k - (m - m0) * lam, 0.0)
            best = max(best, t_val * m ** power)
        if power == 1.0 and lam > 0:
            m_vert = 0.5 * (s_k / lam + m0)
            if m0 + 1.0 < m_vert < bounds[k]:
                t_val = max(s_k - (m_vert - m0) * lam, 0.0)
                best = max(best, t_val * m_vert)
    return best


def bound_curves(spec: KernelSpec, spectrum: Spectrum, sigma: float,
                 delta: float, n_grid, L_choice: str = "inverse_m",
                 beta: Optional[float] = None, k_cap: int = 10_000):
    """Upper-bound scan over m and the lower-bound value, per sample size.

    The scan evaluates sqrt(q L(m)) + sqrt(m) (eps + e) over degree boundaries
    and a 50-point log grid.  ``L_choice`` selects the envelope of the block
    tail T(m): "inverse_m" uses C/m with C the exact supremum of T(m) m,
    "power_law" uses C m^(-2 beta), "spectral" uses the tabulated tail itself.
    The lower-bound value is min(1, sigma / sqrt(trace)) sqrt(T(n)).
    """
    kappa1 = spectrum.trace_target
    d = spectrum.d
    m_total = float(spectrum.boundaries[-1])
    if L_choice == "inverse_m":
        c_env = _sup_tail_times_power(spectrum, 1.0)
        L = lambda m: c_env / m
        q_val, q_cap = float(d + 1), False
    elif L_choice == "power_law":
        if beta is None or beta <= 0:
            raise ValidationError("power_law envelope needs a positive beta")
        grid = np.unique(np.concatenate(
            [spectrum.boundaries, np.geomspace(1.0, m_total, 512)]))
        tvals = np.array([spectrum.tail(m).T for m in grid])
        c_env = float(np.max(tvals * grid ** (2 * beta)))
        L = lambda m, _b=beta: c_env * m ** (-2.0 * _b)
        q_val, q_cap = float((d + 1) ** (2 * beta)), False
    elif L_choice == "spectral":
        tiny = max(spectrum.truncation_residual, 1e-300)
        L = lambda m: max(spectrum.tail(min(m, m_total)).T, tiny)
        cap = max(2, min(k_cap, int(m_total / (d + 1))))
        qf = q_factor(L, d, k_cap=cap)
        q_val, q_cap = qf.value, qf.attained_at_cap
    else:
        raise ValidationError(f"unknown L choice {L_choice!r}")

    m_scan = np.unique(np.concatenate([
        spectrum.boundaries.astype(float),
        np.geomspace(1.0, m_total, 50)]))
    m_scan = m_scan[(m_scan >= 1.0) & (m_scan <= m_total)]
    l_vals = np.array([L(m) for m in m_scan])
    terms = []
    for n in n_grid:
        eps = epsilon_term(n, sigma, delta, kappa1)
        e_val = e_term(n, delta, kappa1)
        rhs_scan = np.sqrt(q_val * l_vals) + np.sqrt(m_scan) * (eps + e_val)
        idx = int(np.argmin(rhs_scan))
        lower = min(1.0, sigma / math.sqrt(kappa1)) * spectrum.tail(n).Lambda
        terms.append(BoundTerms(
            n=int(n), epsilon=eps, e=e_val, m_star=float(m_scan[idx]),
            rhs=float(rhs_scan[idx]),
            sqrt_qL_term=float(math.sqrt(q_val * l_vals[idx])),
            lower=float(lower), q=q_val, q_at_cap=q_cap))
    return terms


# ---------------------------------------------------------------------------
# the experiment


class RateFit(NamedTuple):
    slope: float
    intercept: float
    band: tuple  # bootstrap (lo, hi) for the slope


@dataclass
class LearningCurveReport:
    config: ExperimentConfig
    rows: list
    aggregates: list
    bound_terms: list
    rate: Optional[RateFit]
    beta_model: Optional[RateModel]
    constants: dict
    spectrum: Spectrum


def _run_task(spec: KernelSpec, profile: Callable, config: ExperimentConfig,
              n: int, trial: int) -> dict:
    seed = task_seed(config.master_seed, n, trial)
    s_target, s_x, s_noise, s_sup, s_mc = (
        int(v) for v in np.random.SeedSequence(seed).generate_state(5))
    row = {"n": n, "trial": trial, "seed": seed, "linf_err": math.nan,
           "l2_err": math.nan, "rkhs_norm": math.nan, "lambda_ridge": math.nan,
           "fit_status": "ok"}
    try:
        target = sample_target(spec, config.d, config.target_centers, s_target,
                               profile=profile)
        X = sphere_sample(config.d, n, s_x)
        noise = config.noise_sigma * np.random.default_rng(s_noise).standard_normal(n)
        y = target(X.points) + noise
        K = gram(spec, X, profile=profile)
        model = fit_constrained(K, y, budget=1.0, spec=spec, centers=X.points)
        err_centers = np.vstack([X.points, target.centers])
        err_coeffs = np.concatenate([model.coefficients, -target.coefficients])

        def err_fn(points):
            return kernel_expansion(profile, err_centers, err_coeffs, points)

        sup = sup_norm_estimate(err_fn, config.d, config.sup_grid, s_sup)
        mc = sphere_sample(config.d, config.mc_points, s_mc).points
        l2 = float(np.sqrt(np.mean(err_fn(mc) ** 2)))
        row.update(linf_err=float(sup.value), l2_err=l2,
                   rkhs_norm=float(model.rkhs_norm),
                   lambda_ridge=float(model.lambda_ridge))
    except FitError as exc:
        row["fit_status"] = f"fit_error:{exc}"
    return row


def run_curve(config: ExperimentConfig) -> LearningCurveReport:
    """Run the full learning-curve experiment described by the config."""
    spec = config.spec()
    spectrum = compute_spectrum(spec, k_max=config.k_max)
    profile = kernel_profile(spec, spectrum=spectrum)
    tasks = [(n, t) for n in config.n_grid for t in range(config.trials)]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(
                lambda nt: _run_task(spec, profile, config, nt[0], nt[1]), tasks))
    else:
        rows = [_run_task(spec, profile, config, n, t) for n, t in tasks]
    rows.sort(key=lambda r: (r["n"], r["trial"]))

    beta_model = None
    try:
        beta_model = fit_beta(spectrum)
    except (FitError, ValidationError):
        pass
    bounds = bound_curves(spec, spectrum, config.noise_sigma, config.delta,
                          config.n_grid, L_choice=config.L_choice,
                          beta=beta_model.beta_hat if beta_model else None)
    bound_by_n = {bt.n: bt for bt in bounds}

    aggregates = []
    ratios = []
    for n in config.n_grid:
        ok = [r for r in rows if r["n"] == n and r["fit_status"] == "ok"]
        bt = bound_by_n[n]
        if ok:
            linf = np.array([r["linf_err"] for r in ok])
            l2 = np.array([r["l2_err"] for r in ok])
            agg = {"n": n, "median_linf": float(np.median(linf)),
                   "p90_linf": float(np.percentile(linf, 90)),
                   "median_l2": float(np.median(l2)),
                   "bound_rhs": bt.rhs, "bound_lower": bt.lower,
                   "m_star": bt.m_star}
            ratios.append(float(np.percentile(linf, 95)) / bt.rhs)
        else:
            agg = {"n": n, "median_linf": math.nan, "p90_linf": math.nan,
                   "median_l2": math.nan, "bound_rhs": bt.rhs,
                   "bound_lower": bt.lower, "m_star": bt.m_star}
        aggregates.append(agg)

    rate = None
    good = [a for a in aggregates if math.isfinite(a["median_linf"])]
    if len(good) >= 3:
        rate = fit_rate(rows, [a["n"] for a in good], config.master_seed)

    constants = {
        "kappa1": spectrum.trace_target,
        "p95_over_rhs": ratios,
        "ratio_max_over_min": (max(ratios) / min(ratios)) if ratios else math.nan,
        "ratio_C": max(ratios) if ratios else math.nan,
        "lower_le_rhs": bool(all(bt.lower <= bt.rhs + 1e-12 for bt in bounds)),
        "q": bounds[0].q if bounds else math.nan,
        "q_attained_at_cap": bounds[0].q_at_cap if bounds else False,
    }
    return LearningCurveReport(config=config, rows=rows, aggregates=aggregates,
                               bound_terms=bounds, rate=rate,
                               beta_model=beta_model, constants=constants,
                               spectrum=spectrum)


def fit_rate(rows, n_values, seed: int, n_boot: int = 200) -> RateFit:
    """Log-log slope of median sup-norm error vs n, with a bootstrap band.

    Bootstrap resamples trials within each n, refits the slope, and reports
    the central 95% interval.
    """
    n_values = [int(n) for n in n_values]
    if len(n_values) < 3:
        raise FitError("need at least 3 grid points with successful medians")
    by_n = {n: np.array([r["linf_err"] for r in rows
                         if r["n"] == n and r["fit_status"] == "ok"])
            for n in n_values}
    logn = np.log(np.array(n_values, dtype=float))

    def slope_of(medians):
        s, b = np.polyfit(logn, np.log(medians), 1)
        return float(s), float(b)

    slope, intercept = slope_of([float(np.median(by_n[n])) for n in n_values])
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xB007)))
    boots = []
    for _ in range(n_boot):
        meds = []
        for n in n_values:
            vals = by_n[n]
            meds.append(float(np.median(vals[rng.integers(0, len(vals), len(vals))])))
        boots.append(slope_of(meds)[0])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return RateFit(slope=slope, intercept=intercept, band=(float(lo), float(hi)))


# ---------------------------------------------------------------------------
# report files


def _r(x) -> str:
    return repr(float(x))


def write_report(report: LearningCurveReport, out_dir) -> dict:
    """Write curve_raw.csv, curve_agg.csv, spectrum.csv, and summary.json.

    All floats are written with full round-trip precision; rereading the raw
    rows reproduces the aggregates exactly.  The only non-reproducible field
    is the "created" timestamp in summary.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw_lines = [RAW_HEADER]
    for r in report.rows:
        raw_lines.append(",".join([
            str(r["n"]), str(r["trial"]), str(r["seed"]), _r(r["linf_err"]),
            _r(r["l2_err"]), _r(r["rkhs_norm"]), _r(r["lambda_ridge"]),
            r["fit_status"]]))
    (out / "curve_raw.csv").write_text("\n".join(raw_lines) + "\n")

    agg_lines = [AGG_HEADER]
    for a in report.aggregates:
        agg_lines.append(",".join([
            str(a["n"]), _r(a["median_linf"]), _r(a["p90_linf"]),
            _r(a["median_l2"]), _r(a["bound_rhs"]), _r(a["bound_lower"]),
            _r(a["m_star"])]))
    (out / "curve_agg.csv").write_text("\n".join(agg_lines) + "\n")

    spectrum_to_csv(report.spectrum, out / "spectrum.csv")

    summary = {
        "config": report.config.to_dict(),
        "slopes": {
            "empirical": report.rate.slope if report.rate else None,
            "predicted_from_beta": (
                -report.beta_model.beta_hat
                / (2 * (2 * report.beta_model.beta_hat + 1))
                if report.beta_model else None),
        },
        "bands": {"slope": list(report.rate.band) if report.rate else None},
        "intercept": report.rate.intercept if report.rate else None,
        "beta": ({"beta_hat": report.beta_model.beta_hat,
                  "residual": report.beta_model.residual,
                  "window": list(report.beta_model.window)}
                 if report.beta_model else None),
        "constants": report.constants,
        "bound_terms": [asdict(bt) for bt in report.bound_terms],
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return {"raw": out / "curve_raw.csv", "agg": out / "curve_agg.csv",
            "spectrum": out / "spectrum.csv", "summary": out / "summary.json"}


def load_csv_rows(path) -> list:
    """Parse a report CSV back into dicts (floats where possible)."""
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        row = {}
        for key, val in zip(header, vals):
            try:
                row[key] = int(val)
            except ValueError:
                try:
                    row[key] = float(val)
                except ValueError:
                    row[key] = val
        rows.append(row)
    return rows
