import math

import numpy as np
import pytest

from zonal.errors import ValidationError
from zonal.harmonics import multiplicity, sphere_sample
from zonal.orthopoly import legendre_table, quadrature_rule
from zonal.spectra import builtin_kernel, compute_spectrum, kernel_profile
from zonal.gap import (delta_estimate, hard_function, project_neuron,
                       rf_ball_objective)
from zonal.harness import e_term


@pytest.fixture(scope="module")
def arccos_gap():
    d = 4
    spec = builtin_kernel("arccos0", d)
    X = sphere_sample(d, 80, seed=11)
    probe = sphere_sample(d, 1, seed=13).points
    return d, spec, X, probe


# ---------------------------------------------------------------------------
# delta_estimate


def test_delta_unconstrained_regime(arccos_gap):
    d, spec, X, probe = arccos_gap
    kappa1 = spec.trace()
    cert = delta_estimate(spec, X, epsilon=math.sqrt(kappa1) * 1.01, probes=probe)
    assert cert.value == pytest.approx(math.sqrt(kappa1), abs=1e-6)
    assert cert.multiplier == 0.0


def test_delta_zero_epsilon_probe_in_sample(arccos_gap):
    d, spec, X, _ = arccos_gap
    cert = delta_estimate(spec, X, epsilon=0.0, probes=X.points[:1])
    assert abs(cert.value) <= 1e-9
    assert cert.nu_norm <= 1e-9


def test_delta_empty_sample(arccos_gap):
    d, spec, _, probe = arccos_gap
    kappa1 = spec.trace()
    for eps in (0.0, 0.1, 1.0):
        cert = delta_estimate(spec, None, epsilon=eps, probes=probe)
        assert cert.value == pytest.approx(math.sqrt(kappa1), abs=1e-6)


def test_delta_monotone_in_epsilon(arccos_gap):
    d, spec, X, probe = arccos_gap
    vals = [delta_estimate(spec, X, eps, probes=probe).value
            for eps in (0.01, 0.05, 0.1, 0.2, 0.4, 0.75)]
    for a, b in zip(vals, vals[1:]):
        assert b >= a - 1e-7
    assert vals[-1] == pytest.approx(math.sqrt(spec.trace()), abs=1e-6)


def test_delta_certificates_feasible(arccos_gap):
    d, spec, X, probe = arccos_gap
    profile = kernel_profile(spec)
    for eps in (0.02, 0.1, 0.3):
        cert = delta_estimate(spec, X, eps, probes=probe)
        # recompute both constraint values from scratch (self-products are 1)
        t_zz = cert.centers @ cert.centers.T
        np.fill_diagonal(t_zz, 1.0)
        Kz = profile(t_zz)
        h_norm = math.sqrt(cert.coefficients @ (Kz @ cert.coefficients))
        evals = Kz[:len(X)] @ cert.coefficients
        nu = math.sqrt(np.mean(evals ** 2))
        assert h_norm <= 1 + 1e-6
        assert nu <= eps * (1 + 1e-6)
        t_probe = cert.centers @ cert.probe
        t_probe[-1] = 1.0
        assert cert.value == pytest.approx(
            float(profile(t_probe) @ cert.coefficients), abs=1e-9)


def test_delta_best_over_probes(arccos_gap):
    d, spec, X, _ = arccos_gap
    probes = sphere_sample(d, 5, seed=29).points
    best = delta_estimate(spec, X, 0.1, probes=probes)
    singles = [delta_estimate(spec, X, 0.1, probes=p[None, :]).value
               for p in probes]
    assert best.value == pytest.approx(max(singles), abs=1e-12)


def test_delta_validation(arccos_gap):
    d, spec, X, probe = arccos_gap
    with pytest.raises(ValidationError):
        delta_estimate(spec, X, epsilon=-0.1, probes=probe)


def test_delta_dominates_feasible_hard_function():
    # when the hard function satisfies both constraints on the sample, the
    # span-restricted maximum must reach at least its value (minus slack)
    d, k = 3, 2
    spec = builtin_kernel("arccos1", d)
    s = compute_spectrum(spec, k_max=12)
    x0 = sphere_sample(d, 1, seed=21).points[0]
    hf = hard_function(s, k, x0)
    X = sphere_sample(d, 300, seed=2)
    emp = math.sqrt(np.mean(hf(X.points) ** 2))
    cert = delta_estimate(spec, X, emp * 1.0001, probes=x0[None, :])
    assert cert.value >= hf.value_at_pole * (1 - 0.1)


# ---------------------------------------------------------------------------
# hard functions


@pytest.mark.parametrize("d", [3, 5, 10])
def test_hard_function_identities(d):
    spec = builtin_kernel("arccos1", d)
    s = compute_spectrum(spec, k_max=12)
    x0 = sphere_sample(d, 1, seed=d).points[0]
    rule = quadrature_rule(d, 400)
    degrees = [k for k in range(1, 10) if s.lambdas[k] > 1e-22][:3]
    assert len(degrees) == 3
    for k in degrees:
        hf = hard_function(s, k, x0)
        # RKHS norm oracle: scale^2 / (N lambda_k) must be 1
        assert hf.scale ** 2 / (multiplicity(d, k) * s.lambdas[k]) == pytest.approx(
            1.0, abs=1e-8)
        # L2 norm oracle by zonal quadrature
        p_k = legendre_table(k, d, rule.nodes)[k]
        l2_sq = float(np.sum(rule.weights * (hf.scale * p_k) ** 2))
        assert l2_sq == pytest.approx(hf.lambda_k, abs=1e-6)
        # pole value is exact since P(1) = 1
        assert hf(x0[None, :])[0] == pytest.approx(hf.scale, abs=1e-12)
        assert hf.l2_norm == math.sqrt(hf.lambda_k)
        assert hf.rkhs_norm == 1.0


def test_hard_function_rejects_zero_eigenvalue():
    spec = builtin_kernel("heaviside", 5)
    s = compute_spectrum(spec, k_max=10)
    x0 = sphere_sample(5, 1, seed=1).points[0]
    with pytest.raises(ValidationError):
        hard_function(s, 2, x0)  # even degree of the step kernel is exactly 0


def test_hard_function_sup_attained_at_pole():
    d = 5
    spec = builtin_kernel("arccos1", d)
    s = compute_spectrum(spec, k_max=8)
    x0 = sphere_sample(d, 1, seed=4).points[0]
    hf = hard_function(s, 2, x0)
    pts = sphere_sample(d, 20_000, seed=5).points
    assert np.max(np.abs(hf(pts))) <= hf.value_at_pole + 1e-12


# ---------------------------------------------------------------------------
# neuron projection


def test_project_neuron_full_truncation_recovers_neuron():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=30)
    x0 = sphere_sample(d, 1, seed=3).points[0]
    proj = project_neuron(spec.activation_fn, s, d, 30, x0)
    assert proj.l2_error_sq <= 1e-15
    assert proj.l2_error_sq_quadrature <= 1e-15


def test_project_neuron_tail_agreement():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=30)
    x0 = sphere_sample(d, 1, seed=3).points[0]
    for k_trunc in range(2, 11):
        proj = project_neuron(spec.activation_fn, s, d, k_trunc, x0)
        assert abs(proj.l2_error_sq - proj.l2_error_sq_quadrature) <= 1e-8


def test_project_neuron_norm_counts_retained_degrees():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=30)
    x0 = sphere_sample(d, 1, seed=3).points[0]
    for k_trunc in (2, 6, 10):
        proj = project_neuron(spec.activation_fn, s, d, k_trunc, x0)
        expected = sum(multiplicity(d, i) for i in range(k_trunc + 1)
                       if s.lambdas[i] > 0)
        assert proj.rkhs_norm_sq == pytest.approx(expected, abs=1e-9)


def test_project_neuron_flags_exact_zero_degrees():
    # the step activation has exactly zero even degrees on the closed-form
    # path, so the norm count legitimately falls short of m_k and is flagged
    d = 5
    spec = builtin_kernel("heaviside", d)
    s = compute_spectrum(spec, k_max=20)
    x0 = sphere_sample(d, 1, seed=3).points[0]
    proj = project_neuron(spec.activation_fn, s, d, 4, x0)
    assert proj.count_differs_from_lemma
    assert proj.skipped_degrees == (2, 4)
    assert proj.rkhs_norm_sq == 1 + multiplicity(d, 1) + multiplicity(d, 3)
    assert proj.lemma_count == sum(multiplicity(d, i) for i in range(5))
    # the projection error identities still hold with signed coefficients
    assert abs(proj.l2_error_sq - proj.l2_error_sq_quadrature) <= 1e-8


# ---------------------------------------------------------------------------
# random-feature ball objective


def test_rf_ball_feature_itself():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=40)
    X = sphere_sample(d, 12, seed=5)
    res = rf_ball_objective(spec, s, X.points[:1], np.array([1.0]), X,
                            epsilon=0.0)
    assert res.objective <= 1e-5
    assert res.c[0] == pytest.approx(len(X), rel=1e-2)


def test_rf_ball_zero_element():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=40)
    X = sphere_sample(d, 10, seed=6)
    res = rf_ball_objective(spec, s, X.points[:1], np.array([0.0]), X,
                            epsilon=0.0)
    assert res.objective == 0.0
    assert res.c_norm == 0.0


def test_rf_ball_trend_against_envelope():
    # unit-ball elements: median objective tracks C (eps + e(n, delta));
    # the fitted constant stays within a fixed band across n
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=40)
    profile = kernel_profile(spec, spectrum=s)
    kappa1 = s.trace_target
    eps = 0.05
    n_grid = (32, 64, 128, 256)
    medians = []
    for n in n_grid:
        objs = []
        for seed in range(5):
            X = sphere_sample(d, n, seed=1000 + 17 * n + seed)
            Z = sphere_sample(d, 6, seed=2000 + seed).points
            b = np.random.default_rng(3000 + seed).standard_normal(6)
            Kzz = profile(Z @ Z.T)
            b = b / math.sqrt(b @ (Kzz @ b))
            res = rf_ball_objective(spec, s, Z, b, X, epsilon=eps,
                                    representation="kernel_section")
            objs.append(res.objective)
        medians.append(float(np.median(objs)))
    envelopes = [eps + e_term(n, 0.5, kappa1) for n in n_grid]
    ratios = [m / env for m, env in zip(medians, envelopes)]
    assert max(ratios) <= 3.0 * min(ratios)


def test_rf_ball_rejects_bad_representation():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    s = compute_spectrum(spec, k_max=20)
    X = sphere_sample(d, 5, seed=1)
    with pytest.raises(ValidationError):
        rf_ball_objective(spec, s, X.points[:1], np.array([1.0]), X, 0.1,
                          representation="nope")
