import numpy as np
import pytest

from artifact import exact_contraction as ec
from artifact import expectation as ex
from artifact.lattice import Lattice


def test_density_1d_matches_closed_form():
    rng = np.random.default_rng(7)
    tA, tB = rng.uniform(-3, 3, (2, 20))
    assert np.allclose(ex.one_point("n", tA, tB, D=1), ec.n_a_1d_analytic(tA, tB), atol=1e-12)


def test_density_on_b_is_the_exchange():
    tA, tB = np.array([0.4, 2.1]), np.array([1.7, -0.6])
    nB = ex.one_point("n", tA, tB, D=2, anchor="B", L=6)
    assert np.allclose(nB, ex.one_point("n", tB, tA, D=2, L=6), atol=1e-10)


@pytest.mark.parametrize("D,backend", [(1, None), (2, None), (3, "series")])
def test_F_on_the_axis_is_sin_theta(D, backend):
    th = np.array([-2.5, -0.7, 0.3, 1.9])
    F = ex.F_function(th, 0.0, D=D, backend=backend, L=6)
    assert np.allclose(F, np.sin(th), atol=1e-10)


def test_correlation_length_fit_matches_transfer_gap():
    tA, tB = 1.3, 0.9
    fit = ex.correlation_length(tA, tB, D=1, r_min=2, r_max=14)
    assert fit["xi"] == pytest.approx(float(ex.correlation_length_1d_exact(tA, tB)), rel=1e-6)
    # odd and even separations carry different amplitudes, so the log fit is not perfectly straight
    assert fit["r_squared"] > 0.99
    c = np.abs(fit["correlator"])
    assert np.allclose(c[2:] / c[:-2], c[2] / c[0], rtol=1e-6)


def test_correlation_length_needs_signal():
    with pytest.raises(ex.InsufficientData):
        ex.correlation_length(0.0, 0.0, D=1)


def test_series_two_point_order_guard():
    m = ex.Manifold([0.3], [0.3], D=2, backend="series", order=2)
    with pytest.raises(ValueError, match="too low"):
        ex.two_point_connected(3, None, None, D=2, manifold=m)


def test_backend_validation():
    with pytest.raises(ex.BackendError):
        ex.Manifold(0.1, 0.1, D=2, backend="exact_1d")
    with pytest.raises(ex.BackendError):
        ex.Manifold(0.1, 0.1, D=3, backend="cylinder")


def test_cross_gram_vanishes_on_open_lattice():
    for lat, th in ((Lattice(1, (6,), "open"), (0.8, 1.4)), (Lattice(2, (2, 3), "open"), (1.1, 0.5))):
        assert abs(ex.cross_gram_small(lat, th)) < 1e-8


def test_gram_1d_at_origin():
    # d/dtheta of cos(t/2)|0> - i sin(t/2)|1> has norm 1/2 when the neighbours are down
    assert ex.gram_element(0.0, 0.0, D=1)[0] == pytest.approx(0.25, abs=1e-12)
