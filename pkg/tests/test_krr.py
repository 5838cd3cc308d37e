import math

import numpy as np
import pytest

from zonal.errors import FitError, ValidationError
from zonal.harmonics import sphere_sample
from zonal.krr import (fit_constrained, gram, kernel_expansion, predict,
                       sample_target, sup_norm_estimate)
from zonal.orthopoly import legendre_eval
from zonal.spectra import builtin_kernel, compute_spectrum, kernel_profile


@pytest.fixture(scope="module")
def arccos_setup():
    d, n = 4, 50
    spec = builtin_kernel("arccos0", d)
    X = sphere_sample(d, n, seed=5)
    return d, spec, X, gram(spec, X)


def test_gram_diagonal_and_psd(arccos_setup):
    d, spec, X, K = arccos_setup
    np.testing.assert_allclose(np.diag(K), spec.trace(), atol=1e-12)
    assert np.min(np.linalg.eigvalsh(K)) >= -1e-8


def test_gram_single_point():
    spec = builtin_kernel("gaussian", 5)
    X = sphere_sample(5, 1, seed=1)
    K = gram(spec, X)
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_fit_zero_responses(arccos_setup):
    _, _, _, K = arccos_setup
    model = fit_constrained(K, np.zeros(K.shape[0]))
    assert model.rkhs_norm == 0.0
    assert np.all(model.coefficients == 0.0)


def test_fit_interpolates_in_span(arccos_setup):
    _, spec, X, K = arccos_setup
    n = K.shape[0]
    rng = np.random.default_rng(17)
    b = rng.standard_normal(n)
    b /= math.sqrt(b @ (K @ b))
    y = K @ b
    model = fit_constrained(K, y, spec=spec, centers=X.points)
    assert model.diagnostics["status"] == "interior"
    assert math.sqrt(model.diagnostics["train_mse"]) <= 1e-8
    assert model.rkhs_norm <= 1 + 1e-8
    # oracle: the direct linear solve agrees with the fitted coefficients
    direct = np.linalg.solve(K + model.diagnostics["jitter"] * np.eye(n), y)
    np.testing.assert_allclose(model.coefficients, direct, atol=1e-6)
    # prediction at training points recovers y
    np.testing.assert_allclose(predict(model, X.points), y, atol=1e-6)


def test_fit_binding_norm_and_kkt(arccos_setup):
    _, spec, X, K = arccos_setup
    n = K.shape[0]
    rng = np.random.default_rng(3)
    b = rng.standard_normal(n)
    b /= math.sqrt(b @ (K @ b))
    y = 5.0 * (K @ b)
    model = fit_constrained(K, y, tol=1e-8)
    assert model.diagnostics["status"] == "binding"
    assert model.rkhs_norm == pytest.approx(1.0, abs=1e-6)
    # KKT: (K + n lr I) a = y within tol * ||y||
    assert model.diagnostics["kkt_residual"] <= 1e-6 * np.linalg.norm(y)
    # training MSE never exceeds the zero predictor's
    assert model.diagnostics["train_mse"] <= np.mean(y ** 2)


def test_fit_validation(arccos_setup):
    _, _, _, K = arccos_setup
    with pytest.raises(ValidationError):
        fit_constrained(K, np.zeros(3))
    with pytest.raises(ValidationError):
        fit_constrained(K, np.full(K.shape[0], np.nan))
    with pytest.raises(ValidationError):
        fit_constrained(K, np.zeros(K.shape[0]), budget=0.0)


def test_prediction_linearity_and_single_center():
    d = 5
    spec = builtin_kernel("gaussian", d)
    profile = kernel_profile(spec)
    z = sphere_sample(d, 1, seed=2).points
    pts = sphere_sample(d, 20, seed=3).points
    vals = kernel_expansion(profile, z, np.array([1.0]), pts)
    np.testing.assert_allclose(vals, profile(pts @ z[0]), atol=1e-12)
    # superposition
    z2 = sphere_sample(d, 3, seed=4).points
    c1 = np.array([1.0, 0.0, 2.0])
    c2 = np.array([0.5, -1.0, 0.0])
    lhs = kernel_expansion(profile, z2, c1 + c2, pts)
    rhs = (kernel_expansion(profile, z2, c1, pts)
           + kernel_expansion(profile, z2, c2, pts))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_sample_target_unit_norm():
    d = 4
    spec = builtin_kernel("arccos0", d)
    profile = kernel_profile(spec)
    target = sample_target(spec, d, 8, seed=3, profile=profile)
    t = target.centers @ target.centers.T
    np.fill_diagonal(t, 1.0)  # self-products are exactly 1
    Kzz = profile(t)
    norm = math.sqrt(target.coefficients @ (Kzz @ target.coefficients))
    assert norm == pytest.approx(1.0, abs=1e-10)


def test_sample_target_single_center_is_normalized_section():
    d = 4
    spec = builtin_kernel("arccos0", d)
    profile = kernel_profile(spec)
    target = sample_target(spec, d, 1, seed=9, profile=profile)
    kappa1 = spec.trace()
    assert abs(target.coefficients[0]) == pytest.approx(1 / math.sqrt(kappa1),
                                                        rel=1e-12)
    pts = sphere_sample(d, 50, seed=10).points
    expected = target.coefficients[0] * profile(pts @ target.centers[0])
    np.testing.assert_allclose(target(pts), expected, atol=1e-12)


def test_sample_target_sup_bounded_by_reproducing_property():
    d = 5
    spec = builtin_kernel("sigmoid", d)
    spectrum = compute_spectrum(spec, k_max=40)
    profile = kernel_profile(spec, spectrum=spectrum)
    bound = math.sqrt(spec.trace())
    for seed in (1, 2, 3):
        target = sample_target(spec, d, 8, seed=seed, profile=profile)
        vals = target(sphere_sample(d, 10_000, seed=seed + 100).points)
        assert np.max(np.abs(vals)) <= bound + 1e-10


def test_sup_norm_constant():
    est = sup_norm_estimate(lambda pts: np.full(pts.shape[0], -0.3), 4, 100, seed=1)
    assert est.value == pytest.approx(0.3, abs=1e-15)


def test_sup_norm_zonal_peak_at_pole():
    d = 4
    x0 = sphere_sample(d, 1, seed=2).points[0]
    g = lambda pts: legendre_eval(4, d, pts @ x0)
    est = sup_norm_estimate(g, d, 2000, seed=3)
    assert 1 - 1e-3 <= est.value <= 1 + 1e-9
    assert abs(float(est.argmax @ x0)) >= 1 - 1e-2


def test_sup_norm_nondecreasing_in_grid_size():
    d = 4
    x0 = sphere_sample(d, 1, seed=2).points[0]
    g = lambda pts: legendre_eval(3, d, pts @ x0) + 0.2 * (pts @ x0)
    vals = [sup_norm_estimate(g, d, gs, seed=7).value for gs in (500, 2000, 8000)]
    for a, b in zip(vals, vals[1:]):
        assert b >= a - 1e-9


def test_noiseless_recovery_l2_decreases():
    # in-span targets on nested samples: L2 error shrinks as n grows
    d = 4
    spec = builtin_kernel("arccos0", d)
    profile = kernel_profile(spec)
    target = sample_target(spec, d, 6, seed=11, profile=profile)
    mc = sphere_sample(d, 8000, seed=12).points
    errs = []
    for n in (32, 128, 512):
        X = sphere_sample(d, n, seed=13)
        y = target(X.points)
        model = fit_constrained(gram(spec, X, profile=profile), y,
                                spec=spec, centers=X.points)
        resid_centers = np.vstack([X.points, target.centers])
        resid_coeffs = np.concatenate([model.coefficients, -target.coefficients])
        err = kernel_expansion(profile, resid_centers, resid_coeffs, mc)
        errs.append(float(np.sqrt(np.mean(err ** 2))))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 0.25 * errs[0]
