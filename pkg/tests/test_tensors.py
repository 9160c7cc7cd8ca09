import numpy as np
import pytest

from artifact import tensors as tn


@pytest.mark.parametrize("D", [1, 2, 3])
def test_reduced_double_tensor_is_p_minus_s_q(D):
    th = 1.1
    T = tn.reduce_tensor(tn.double_tensor(th, D))
    assert np.allclose(T, tn.reduced_tensor(th, D), atol=1e-14)


@pytest.mark.parametrize("D", [1, 2, 3])
def test_q_contracted_with_p_vanishes(D):
    assert np.all(tn.contract_q_with_p(D) == 0)


def test_up_spin_needs_all_upstream_down():
    M = tn.site_tensor(0.7, 0.3, D=2)
    # physical up with any upstream up is zero
    assert M[1, 1, 0].sum() == 0 and M[1, 0, 1].sum() == 0 and M[1, 1, 1].sum() == 0
    assert abs(M[1, 0, 0, 1, 1]) == pytest.approx(np.sin(0.35))


def test_out_legs_copy_the_spin():
    M = tn.site_tensor(0.9, 0.0, D=2)
    for s in (0, 1):
        for ins in np.ndindex(2, 2):
            for outs in np.ndindex(2, 2):
                if outs != (s, s):
                    assert M[(s,) + ins + outs] == 0


def test_reduced_factor_is_markov():
    F = tn.reduced_factor(np.array([0.4, 2.0]), 2)
    assert np.allclose(F.sum(axis=1), 1.0)


def test_pair_factor_matches_double_tensor():
    th, ph = 0.8, 0.4
    F = tn.pair_factor(th, ph, op=tn.SX, in_dims=(4,), out_dim=4)[0]
    T = tn.double_tensor(th, 1, ph, op=tn.SX)  # legs (in, out), pair values 2*ket + bra
    for v in range(4):
        for u in range(4):
            assert F[v, u] == pytest.approx(T[u, v])


def test_operator_kinds():
    with pytest.raises(ValueError):
        tn.operator_tensor("X", 0.3)
    g = tn.operator_tensor("g", 0.3, D=1)
    # <dM|dM> with all upstream down is 1/4
    assert g.sum(axis=1)[0] == pytest.approx(0.25)
