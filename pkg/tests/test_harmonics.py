import math

import numpy as np
import pytest

from zonal.errors import ValidationError
from zonal.harmonics import (cumulative_dim, cumulative_dims, log_multiplicity,
                             multiplicity, multiplicity_floats, sphere_sample,
                             zonal_product_check)


def harmonic_dim_by_difference(d, k):
    """Oracle: dim of degree-k harmonics = C(k+d-1, k) - C(k+d-3, k-2)."""
    if k == 0:
        return 1
    sub = math.comb(k + d - 3, k - 2) if k >= 2 else 0
    return math.comb(k + d - 1, k) - sub


def test_multiplicity_known_values():
    for d in range(3, 12):
        assert multiplicity(d, 0) == 1
        assert multiplicity(d, 1) == d
    for k in range(31):
        assert multiplicity(3, k) == 2 * k + 1


def test_multiplicity_exact_against_oracle():
    for d in range(3, 21):
        for k in range(31):
            assert multiplicity(d, k) == harmonic_dim_by_difference(d, k)


def test_log_multiplicity_consistent():
    for d in (3, 7, 15):
        for k in (1, 5, 40, 200):
            exact = multiplicity(d, k)
            assert log_multiplicity(d, k) == pytest.approx(math.log(exact), rel=1e-12)


def test_multiplicity_floats_spans_regimes():
    vals = multiplicity_floats(10, 600)
    assert vals[0] == 1.0 and vals[1] == 10.0
    assert vals[600] == pytest.approx(float(multiplicity(10, 600)), rel=1e-12)


def test_cumulative_dim():
    for d in (4, 9):
        assert cumulative_dim(d, 0) == 1
        assert cumulative_dim(d, 1) == 1 + d
    np.testing.assert_allclose(cumulative_dims(5, 4),
                               np.cumsum([multiplicity(5, k) for k in range(5)]))


def test_growth_ratio_bounded_by_d_plus_one():
    for d in range(3, 21):
        ms = [cumulative_dim(d, k) for k in range(31)]
        for a, b in zip(ms, ms[1:]):
            assert b <= (d + 1) * a


def test_sphere_sample_unit_norms_and_reproducibility():
    pts = sphere_sample(6, 500, seed=42)
    norms = np.linalg.norm(pts.points, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)
    again = sphere_sample(6, 500, seed=42)
    assert np.array_equal(pts.points, again.points)


def test_sphere_sample_prefix_property():
    small = sphere_sample(4, 100, seed=7).points
    big = sphere_sample(4, 300, seed=7).points
    assert np.array_equal(big[:100], small)


def test_sphere_sample_moments():
    d, n = 5, 100_000
    pts = sphere_sample(d, n, seed=123).points
    se_mean = 1.0 / math.sqrt(n * d)
    assert abs(pts.mean()) <= 5 * se_mean
    x1_sq = pts[:, 0] ** 2
    se = x1_sq.std(ddof=1) / math.sqrt(n)
    assert abs(x1_sq.mean() - 1.0 / d) <= 5 * se


def test_sphere_sample_validation():
    with pytest.raises(ValidationError):
        sphere_sample(1, 5, 0)
    with pytest.raises(ValidationError):
        sphere_sample(3, 0, 0)


def test_zonal_product_trivial_cases():
    x = sphere_sample(3, 1, 1).points[0]
    res = zonal_product_check(3, 0, x, x, mc_samples=100, seed=5)
    assert res.estimate == pytest.approx(1.0, abs=1e-12)
    assert res.reference == 1.0
    # perpendicular probes at degree 1: reference P_1(0)/N = 0
    e1, e2 = np.eye(3)[:2]
    res = zonal_product_check(3, 1, e1, e2, mc_samples=100, seed=5)
    assert res.reference == 0.0


def test_zonal_product_generic_within_5_sigma():
    res = zonal_product_check(5, 3, *sphere_sample(5, 2, 11).points,
                              mc_samples=100_000, seed=13)
    assert abs(res.estimate - res.reference) <= 5 * res.stderr


@pytest.mark.parametrize("d", [3, 5, 8])
def test_zonal_product_randomized_grid(d):
    rng_seed = 1000 + d
    pairs = sphere_sample(d, 8, rng_seed).points
    for k in range(7):
        res = zonal_product_check(d, k, pairs[0], pairs[1],
                                  mc_samples=20_000, seed=rng_seed + k)
        tol = 5 * res.stderr if res.stderr > 0 else 1e-12
        assert abs(res.estimate - res.reference) <= tol
