import numpy as np
import pytest

from artifact import exact_contraction as ec
from artifact import operators as ops
from artifact import perturbative as pt


@pytest.fixture(autouse=True)
def _tmp_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(pt.CACHE_ENV, str(tmp_path))


def _as_dict(table):
    out = {}
    for k, mask in enumerate(table.masks):
        for n, m in zip(*np.nonzero(table.counts[k])):
            out[(int(mask), int(n), int(m))] = int(table.counts[k, n, m])
    return out


def test_order_zero_is_a_single_empty_set():
    for D in (1, 2, 3):
        f = pt.enumerate_counting_factors(D, "n", order=0).factors()
        assert f.shape == (1, 1) and f[0, 0] == 1


@pytest.mark.parametrize("D,kind,order", [(1, "n", 8), (2, "n", 7), (2, "gram", 5), (2, "nn:1,1", 5), (3, "n", 5)])
def test_kernel_matches_brute_force(D, kind, order):
    for t in pt.standard_terms(D, kind):
        region = ops.region(t)
        table = pt.enumerate_region(D, region, order, use_cache=False)
        ref = {k: v for k, v in pt.brute_force_counts(D, region, order).items()}
        assert _as_dict(table) == ref


def test_chain_counts_are_single_paths():
    # in 1D the only admissible sets are the unbroken strings upstream of the site
    f = pt.enumerate_counting_factors(1, "n", order=10).row_sums()
    assert list(f) == [1] * 11


def test_cache_roundtrip(tmp_path):
    a = pt.enumerate_counting_factors(2, "n", order=6)
    b = pt.enumerate_counting_factors(2, "n", order=6)
    assert np.array_equal(a.counts, b.counts) and a.boundary == b.boundary
    assert list(tmp_path.glob("*.npz"))


def test_order_above_budget_is_rejected():
    with pytest.raises(ValueError):
        pt.enumerate_counting_factors(2, "n", order=pt.MAX_ORDER[2] + 1)


def test_chain_series_converges_to_exact_density():
    tA, tB = np.array([0.3, 0.8, 1.2]), np.array([0.5, 0.2, 0.9])
    series = pt.expect_series(ops.number(1), tA, tB, D=1, order=30).real
    assert np.allclose(series, ec.n_a_1d_analytic(tA, tB), atol=1e-10)


def test_series_agrees_with_cylinder_at_small_angles():
    tA, tB = np.array([0.4, 0.7]), np.array([0.6, 0.3])
    s = pt.expect_series(ops.number(2), tA, tB, D=2, order=10).real
    c = ec.expect_2d_cylinder(ops.number(2), tA, tB, L=8).real
    assert np.allclose(s, c, atol=1e-6)


def test_series_sum_matches_term_contraction_for_density():
    # for n the insertion value is sin^2(theta/2) on the anchor times the counting sum
    table = pt.enumerate_counting_factors(2, "n", order=8)
    tA, tB = np.array([0.5, 0.9]), np.array([0.4, 0.2])
    direct = pt.expect_series(ops.number(2), tA, tB, D=2, order=8).real
    assert np.allclose(direct, np.sin(tA / 2) ** 2 * pt.series_sum(table, tA, tB), atol=1e-12)


def test_regime_map_small_angles_inside_large_outside():
    mask, inc = pt.regime_map(np.array([0.3, 2.9]), np.array([0.3, 2.9]), D=2, order=8)
    assert mask.tolist() == [True, False]
    assert inc[1] > inc[0]


def test_regime_threshold_must_be_positive():
    with pytest.raises(ValueError):
        pt.regime_map(0.1, 0.1, D=2, order=4, threshold=0.0)


def test_superexponential_needs_order_four():
    with pytest.raises(ValueError):
        pt.superexponential_check(pt.enumerate_counting_factors(2, "n", order=3))
