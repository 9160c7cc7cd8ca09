import numpy as np
import pytest

from artifact import exact_contraction as ec
from artifact import operators as ops
from artifact.lattice import Lattice


def test_norm_is_one_1d_and_cylinder():
    rng = np.random.default_rng(3)
    tA, tB = rng.uniform(-2.8, 2.8, (2, 6))
    assert np.allclose(ec.expect_1d(ops.identity(1), tA, tB).real, 1.0, atol=1e-12)
    assert np.allclose(ec.expect_2d_cylinder(ops.identity(2), tA, tB, L=6).real, 1.0, atol=1e-10)


def test_chain_density_matches_closed_form():
    tA, tB = np.array([0.4, 1.9, -2.5]), np.array([1.2, -0.3, 2.0])
    n = ec.expect_1d(ops.number(1), tA, tB).real
    assert np.allclose(n, ec.n_a_1d_analytic(tA, tB), atol=1e-13)


def test_chain_matches_large_ring():
    # finite-size corrections on a 16-site ring are ~ (s_A s_B)^8
    lat = Lattice(1, (16,))
    psi = ec.state_vector_small(lat, (0.9, 0.6))
    conf = ec.configurations(16)
    p = np.abs(psi) ** 2
    n0 = p @ conf[:, 0]
    assert n0 == pytest.approx(ec.n_a_1d_analytic(0.9, 0.6), abs=1e-7)


def test_state_vector_agrees_with_bond_sum():
    lat = Lattice(2, (2, 3), "open")
    rng = np.random.default_rng(0)
    th, ph = rng.uniform(-3, 3, 6), rng.uniform(-3, 3, 6)
    psi = ec.state_vector_small(lat, th, ph, normalize=False)
    for idx in (0, 5, 17, 40, 63):
        conf = ec.configurations(6)[idx]
        assert psi[idx] == pytest.approx(ec.amplitude_oracle(lat, th, ph, conf), abs=1e-14)


def test_ansatz_lives_in_the_blockaded_space():
    lat = Lattice(2, (4, 4))
    psi = ec.state_vector_small(lat, (1.3, -0.7), (0.2, 0.5))
    bad = ~ec.blockade_ok(lat, ec.configurations(16))
    assert np.max(np.abs(psi[bad])) == 0


def test_degenerate_transfer_matrix_raises():
    with pytest.raises(ec.ConvergenceError):
        ec.Environment(np.pi, np.pi, D=1)


def test_cylinder_width_checks():
    with pytest.raises(ValueError):
        ec.cylinder(5)
    with pytest.raises(ValueError):
        ec.cylinder(16)


def test_cylinder_converges_in_width():
    a = ec.expect_2d_cylinder(ops.number(2), [0.8], [1.4], L=8).real
    b = ec.expect_2d_cylinder(ops.number(2), [0.8], [1.4], L=10).real
    assert a == pytest.approx(b, abs=1e-8)


def test_cylinder_near_corner_uses_direct_solve():
    env = ec.Environment([3.0], [3.0], D=2, L=8)
    assert env.info["direct"][0]
    assert ec.expect(ops.identity(2), env).real[0] == pytest.approx(1.0, abs=1e-9)


def test_1d_gauge_equivalence_with_projected_product_state():
    lat = Lattice(1, (8,))
    gap, _, _ = ec.manifold_overlap_gap(lat, (0.9, 0.4), n_starts=2)
    assert gap < 1e-8


def test_class_count_amplitudes_match_state_vector():
    from artifact.tensors import amplitude_table

    lat = Lattice(2, (4, 4))
    conf = ec.configurations(16)
    keep = ec.blockade_ok(lat, conf)
    counts = ec._class_counts(lat, conf[keep])
    x = (0.8, -1.3, 0.4, 2.0)
    tabs = np.stack([amplitude_table(x[0], x[2]), amplitude_table(x[1], x[3])]).reshape(8)
    fast = np.prod(tabs[None, :] ** counts, axis=1)
    slow = ec.state_vector_small(lat, x[:2], x[2:], normalize=False)[keep]
    assert np.allclose(fast, slow, atol=1e-14)


def test_overlap_gap_ring_is_zero_torus_is_not():
    g1, _, _ = ec.manifold_overlap_gap(Lattice(1, (8,)), (0.7, 1.9), n_starts=2)
    g2, _, _ = ec.manifold_overlap_gap(Lattice(2, (4, 4)), (0.7, 1.9), n_starts=2)
    assert g1 < 1e-10
    assert g2 > 1e-6
