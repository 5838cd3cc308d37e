"""Invariant suite backing the ``check`` CLI subcommand.

Each check is a fast, deterministic verification of an exact identity or
contract the library maintains.  They are a curated subset of the test
suite, runnable without pytest.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from . import gap, harness, krr, spectra
from .harmonics import cumulative_dim, multiplicity, sphere_sample
from .orthopoly import legendre_table, quadrature_rule, weighted_inner

__all__ = ["CheckResult", "run_all"]


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str


def _orthogonality() -> str:
    worst = 0.0
    for d in (3, 5, 10):
        rule = quadrature_rule(d, 200)
        table = legendre_table(20, d, rule.nodes)
        G = (table * rule.weights) @ table.T
        expected = np.diag([1.0 / multiplicity(d, k) for k in range(21)])
        worst = max(worst, float(np.max(np.abs(G - expected))))
    assert worst <= 1e-8, f"orthogonality defect {worst:.2e}"
    return f"max defect {worst:.2e}"


def _moments() -> str:
    for d in (4, 6, 11):
        rule = quadrature_rule(d, 64)
        one = weighted_inner(lambda t: np.ones_like(t), lambda t: np.ones_like(t), rule)
        m1 = rule.integrate(lambda t: t)
        m2 = rule.integrate(lambda t: t * t)
        m4 = rule.integrate(lambda t: t ** 4)
        assert abs(one - 1.0) <= 1e-12
        assert abs(m1) <= 1e-14
        assert abs(m2 - 1.0 / d) <= 1e-13
        assert abs(m4 - 3.0 / (d * (d + 2))) <= 1e-13
    return "moments t^0, t, t^2, t^4 exact"


def _multiplicities() -> str:
    for d in range(3, 15):
        for k in range(0, 25):
            alt = math.comb(k + d - 1, k) - (math.comb(k + d - 3, k - 2) if k >= 2 else 0)
            assert multiplicity(d, k) == alt, (d, k)
        ms = [cumulative_dim(d, k) for k in range(25)]
        assert all(b <= (d + 1) * a for a, b in zip(ms, ms[1:]))
    return "two formulas agree; growth ratio <= d+1"


def _exact_values() -> str:
    spec0 = spectra.builtin_kernel("arccos0", 4)
    s0 = spectra.compute_spectrum(spec0, k_max=20)
    assert abs(s0.lambdas[0] - 0.25) <= 1e-8
    assert all(s0.lambdas[k] <= 1e-10 for k in range(2, 21, 2))
    g = spectra.builtin_kernel("gaussian", 5, h=math.sqrt(2.0))
    assert g.trace() == 1.0
    a1 = spectra.builtin_kernel("arccos1", 5)
    assert abs(a1.trace() - 0.1) <= 1e-15
    return "arccos0 lambda_0 = 1/4, even degrees vanish; traces exact"


def _trace_residuals() -> str:
    for name, k_max in (("gaussian", 30), ("sigmoid", 30), ("arccos1", 400)):
        spec = spectra.builtin_kernel(name, 5)
        s = spectra.compute_spectrum(spec, k_max=k_max)
        assert s.truncation_residual >= -1e-10, name
        assert s.truncation_residual <= 1e-4, (name, s.truncation_residual)
    return "residuals small and nonnegative at moderate truncation"


def _mercer() -> str:
    spec = spectra.builtin_kernel("gaussian", 5, h=math.sqrt(2.0))
    s = spectra.compute_spectrum(spec, k_max=40)
    ts = np.linspace(-1, 1, 100)
    err = np.max(np.abs(spectra.mercer_reconstruct(s, ts) - np.exp(ts - 1.0)))
    assert err <= 1e-10, f"mercer reconstruction error {err:.2e}"
    return f"sup reconstruction error {err:.2e}"


def _round_trip() -> str:
    spec = spectra.builtin_kernel("arccos0", 5)
    s = spectra.compute_spectrum(spec, k_max=9)
    sigma = spectra.synth_activation(s)
    again = spectra.activation_coefficients(sigma, 5, 9)
    err = np.max(np.abs(again ** 2 - s.lambdas))
    assert err <= 1e-8, f"round-trip error {err:.2e}"
    return f"coefficient recovery error {err:.2e}"


def _hard_function() -> str:
    d, k = 5, 4
    spec = spectra.builtin_kernel("arccos1", d)
    s = spectra.compute_spectrum(spec, k_max=10)
    x0 = sphere_sample(d, 1, 7).points[0]
    hf = gap.hard_function(s, k, x0)
    rule = quadrature_rule(d, 400)
    l2_sq = rule.integrate(lambda t: (hf.scale * legendre_table(k, d, t)[k]) ** 2)
    assert abs(l2_sq - hf.lambda_k) <= 1e-10
    assert abs(hf(x0[None, :])[0] - hf.scale) <= 1e-12
    return "pole value and L2 norm identities hold"


def _neuron_projection() -> str:
    d = 5
    spec = spectra.builtin_kernel("sigmoid", d)
    s = spectra.compute_spectrum(spec, k_max=30)
    x0 = sphere_sample(d, 1, 3).points[0]
    proj = gap.project_neuron(spec.activation_fn, s, d, 6, x0)
    gap_err = abs(proj.l2_error_sq - proj.l2_error_sq_quadrature)
    assert gap_err <= 1e-8, f"tail disagreement {gap_err:.2e}"
    expected = sum(multiplicity(d, i) for i in range(7) if s.lambdas[i] > 0)
    assert abs(proj.rkhs_norm_sq - expected) <= 1e-9
    return f"tail agreement {gap_err:.2e}; norm counts retained degrees"


def _gap_estimator() -> str:
    d = 4
    spec = spectra.builtin_kernel("arccos0", d)
    X = sphere_sample(d, 60, 11)
    probe = sphere_sample(d, 1, 13).points
    kappa1 = spec.trace()
    cert = gap.delta_estimate(spec, X, epsilon=math.sqrt(kappa1) * 1.01, probes=probe)
    assert abs(cert.value - math.sqrt(kappa1)) <= 1e-6
    vals = [gap.delta_estimate(spec, X, eps, probes=probe).value
            for eps in (0.05, 0.15, 0.4)]
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))
    assert cert.rkhs_norm <= 1 + 1e-6
    return "unconstrained value sqrt(kappa(1)); monotone in epsilon"


def _krr() -> str:
    d, n = 4, 40
    spec = spectra.builtin_kernel("arccos0", d)
    X = sphere_sample(d, n, 5)
    K = krr.gram(spec, X)
    rng = np.random.default_rng(17)
    b = rng.standard_normal(n)
    b /= math.sqrt(b @ (K @ b))
    y = K @ b
    model = krr.fit_constrained(K, y)
    assert model.diagnostics["status"] == "interior"
    assert np.sqrt(model.diagnostics["train_mse"]) <= 1e-8
    assert model.rkhs_norm <= 1 + 1e-8
    model2 = krr.fit_constrained(K, 5.0 * y)
    assert abs(model2.rkhs_norm - 1.0) <= 1e-6
    assert model2.diagnostics["kkt_residual"] <= 1e-6 * np.linalg.norm(5.0 * y)
    return "interpolation, binding norm, and KKT residual verified"


def _sup_norm() -> str:
    d = 4
    est = krr.sup_norm_estimate(lambda pts: np.full(pts.shape[0], -0.7), d, 200, 1)
    assert abs(est.value - 0.7) <= 1e-12
    x0 = sphere_sample(d, 1, 2).points[0]
    from .orthopoly import legendre_eval
    est2 = krr.sup_norm_estimate(
        lambda pts, _x=x0: legendre_eval(4, d, pts @ _x), d, 2000, 3)
    assert est2.value >= 1 - 1e-3
    assert est2.value <= 1 + 1e-9
    return "constant exact; zonal max located at the pole"


def _bound_formulas() -> str:
    assert abs(harness.epsilon_term(32, 1.0, math.exp(-1.0), 1.0) - 0.5) <= 1e-14
    expected = math.sqrt((math.log(10) + math.log(10)) / 10)
    assert abs(harness.e_term(10, 0.1, 1.0) - expected) <= 1e-14
    spec = spectra.builtin_kernel("sigmoid", 5)
    s = spectra.compute_spectrum(spec, k_max=40)
    terms = harness.bound_curves(spec, s, 0.1, 0.05, (32, 128, 512))
    assert all(bt.lower <= bt.rhs + 1e-12 for bt in terms)
    return "closed-form terms exact; lower <= upper on the grid"


def _determinism() -> str:
    cfg = harness.ExperimentConfig(
        kernel_name="arccos0", d=3, n_grid=(8, 16), trials=2, noise_sigma=0.1,
        sup_grid=200, mc_points=200, k_max=20, target_centers=4, master_seed=99)
    r1 = harness.run_curve(cfg)
    r2 = harness.run_curve(cfg)
    assert r1.rows == r2.rows
    assert r1.aggregates == r2.aggregates
    return "repeated runs identical"


_CHECKS = [
    ("orthogonality", _orthogonality),
    ("marginal moments", _moments),
    ("multiplicities", _multiplicities),
    ("exact spectral values", _exact_values),
    ("trace residuals", _trace_residuals),
    ("mercer reconstruction", _mercer),
    ("activation round trip", _round_trip),
    ("hard function identities", _hard_function),
    ("neuron projection", _neuron_projection),
    ("gap estimator", _gap_estimator),
    ("constrained krr", _krr),
    ("sup-norm estimate", _sup_norm),
    ("bound formulas", _bound_formulas),
    ("determinism", _determinism),
]


def run_all(report: Callable = print) -> list:
    """Run every invariant check, reporting one PASS/FAIL line each."""
    results = []
    for name, fn in _CHECKS:
        try:
            detail = fn()
            results.append(CheckResult(name, True, detail))
            report(f"PASS  {name}: {detail}")
        except AssertionError as exc:
            results.append(CheckResult(name, False, str(exc)))
            report(f"FAIL  {name}: {exc}")
        except Exception as exc:  # surface unexpected breakage as a failure
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
            report(f"FAIL  {name}: {type(exc).__name__}: {exc}")
    return results
