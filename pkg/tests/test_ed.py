import itertools

import numpy as np
import pytest

from artifact import ed_oracle as ed
from artifact import exact_contraction as ec
from artifact.lattice import Lattice


def _brute_count(lat):
    from artifact.lattice import edges
    E = [(lat.index(a), lat.index(b)) for a, b in edges(lat)]
    return sum(all(not (c[i] and c[j]) for i, j in E) for c in itertools.product((0, 1), repeat=lat.n_sites))


@pytest.mark.parametrize("lat,count", [(Lattice(1, (5,), "open"), 13), (Lattice(1, (8,)), 47)])
def test_basis_counts(lat, count):
    assert ed.build_basis(lat).size == count == _brute_count(lat)


def test_square_torus_count():
    assert ed.build_basis(Lattice(2, (4, 4))).size == 743


def test_budget_abort():
    with pytest.raises(ed.BudgetExceeded):
        ed.build_basis(Lattice(1, (30,)), budget=1000)


def test_hamiltonian_is_symmetric():
    b = ed.build_basis(Lattice(2, (2, 4)))
    H = ed.hamiltonian(b, Delta=0.3, V=-0.7)
    assert abs(H - H.T).max() == 0


def test_vacuum_couples_to_every_single_excitation():
    lat = Lattice(1, (6,))
    b = ed.build_basis(lat)
    v = np.zeros(b.size)
    v[b.index([0])[0]] = 1.0
    out = ed.apply_hamiltonian(b, v)
    singles = b.index([1 << k for k in range(6)])
    assert np.allclose(out[singles], 1.0) and out.sum() == pytest.approx(6.0)


def test_z2_diagonal_energy():
    lat = Lattice(2, (4, 4))
    b = ed.build_basis(lat)
    z = ed.z2_state(b, "A")
    H = ed.hamiltonian(b, Delta=0.4, V=0.25)
    # 8 excited sites, each with 4 diagonal NNN partners on the same sublattice: 16 pairs
    assert z @ (H @ z) == pytest.approx(-0.4 * 8 + 0.25 * 16)


def test_matrix_free_action_agrees():
    b = ed.build_basis(Lattice(1, (12,)))
    v = np.random.default_rng(2).normal(size=b.size)
    assert np.allclose(ed.HamiltonianAction(b, 0.2, -0.5)(v), ed.hamiltonian(b, 0.2, -0.5) @ v)
    with pytest.raises(ValueError):
        ed.HamiltonianAction(b)(v[:-1])


def test_index_outside_basis():
    b = ed.build_basis(Lattice(1, (6,)))
    with pytest.raises(KeyError):
        b.index([0b110000])


def test_time_evolution_basics():
    b = ed.build_basis(Lattice(1, (10,)))
    times = np.linspace(0.0, 2.0, 41)
    states, fid = ed.time_evolve(b, ed.cat_state(b), times)
    assert fid[0] == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        ed.time_evolve(b, ed.cat_state(b), np.array([0.0, 0.1, 0.3]))


def test_revival_chain_18():
    out, _, _ = ed.revival(Lattice(1, (18,)), t_max=6.0, dt=0.01)
    assert out["period"] == pytest.approx(4.79, abs=0.02)
    assert out["basis_size"] == 5778


def test_no_revival_in_a_short_window():
    with pytest.raises(ed.NoRevival):
        ed.revival(Lattice(1, (10,)), t_max=1.0, dt=0.01)


@pytest.mark.parametrize("lat", [Lattice(1, (12,)), Lattice(2, (4, 4))])
def test_ground_state_bounds_product_ansatz(lat):
    b = ed.build_basis(lat)
    rng = np.random.default_rng(5)
    for _ in range(4):
        Delta, V = rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 0.5)
        E0, _, _ = ed.ground_state(b, Delta, V)
        th = rng.uniform(-3.0, 3.0, 2)
        psi = ec.state_vector_small(lat, th, (np.pi / 2, np.pi / 2))[b.states]
        Ev = np.vdot(psi, ed.hamiltonian(b, Delta, V) @ psi).real
        assert E0 <= Ev + 1e-12


def test_fidelity_susceptibility_flat_deep_in_disordered_phase():
    b = ed.build_basis(Lattice(1, (12,)))
    chi = ed.fidelity_susceptibility(b, [-8.0], dDelta=1e-3)
    assert chi[0] < 1e-2
    peak = ed.fidelity_susceptibility(b, [1.0], dDelta=1e-3)
    assert peak[0] > chi[0]
