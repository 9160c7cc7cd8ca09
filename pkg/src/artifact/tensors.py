"""Site tensors of the ansatz and the objects derived from them.

Leg order for a site tensor is ``(physical, in_1..in_D, out_1..out_D)``,
every virtual leg of dimension 2.  Double-layer tensors pair a ket leg with
the matching bra leg into one leg of dimension 4 with value ``2*ket + bra``,
so the reduction to bond dimension 2 keeps the values 0 and 3.

Besides the dense tensors this module provides *pair factors*.  The out
legs of M all equal the spin of the site, so a double-layer network can be
contracted with one variable per site, ``v = 2*s_ket + s_bra``, and a factor
``F[v, u_1, ..., u_D]`` that depends on the variables of the upstream
neighbours.  The contraction engines only use pair factors.
"""

from itertools import product

import numpy as np

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
N_OP = np.array([[0.0, 0.0], [0.0, 1.0]])
P_DOWN = np.array([[1.0, 0.0], [0.0, 0.0]])
ID2 = np.eye(2)

OPERATOR_KINDS = ("S", "J", "K", "g", "dM", "dT")


def _check_dim(D):
    if D not in (1, 2, 3):
        raise ValueError(f"unsupported dimension D={D}")


def amplitude_table(theta, phi=0.0, deriv=False):
    """a[..., s, z]: amplitude of M for spin s when the upstream spins are all down (z=1) or not (z=0).

    With ``deriv`` the table of dM/dtheta is returned instead.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    up = -1j * np.exp(1j * phi)
    a = np.zeros(np.broadcast(theta, phi).shape + (2, 2), dtype=complex)
    if deriv:
        a[..., 0, 1] = -0.5 * s
        a[..., 1, 1] = 0.5 * up * c
    else:
        a[..., 0, 1] = c
        a[..., 0, 0] = 1.0
        a[..., 1, 1] = up * s
    return a


def site_tensor(theta, phi=0.0, D=1, deriv=False):
    """Dense M(theta, phi) with legs (physical, in*D, out*D).

    M = |dn>(cos(theta/2)|0><0| + |beta><0|) - i e^{i phi} sin(theta/2) |up>|0><1|
    """
    _check_dim(D)
    a = amplitude_table(theta, phi, deriv)
    M = np.zeros((2,) + (2,) * (2 * D), dtype=complex)
    zero, ones = (0,) * D, (1,) * D
    for ins in product((0, 1), repeat=D):
        z = int(ins == zero)
        M[(0,) + ins + zero] = a[0, z]
        M[(1,) + ins + ones] = a[1, z]
    return M


def double_tensor(theta, D=1, phi=0.0, op=None, ket_deriv=False, bra_deriv=False):
    """T = sum_{s,s'} conj(Mb^{s'}) op[s', s] Mk^{s}, legs (in*D, out*D) of dimension 4."""
    _check_dim(D)
    op = ID2 if op is None else np.asarray(op)
    Mk = site_tensor(theta, phi, D, ket_deriv)
    Mb = site_tensor(theta, phi, D, bra_deriv)
    T = np.zeros((2,) * (2 * D) + (2,) * (2 * D), dtype=complex)
    for sk, sb in product((0, 1), repeat=2):
        if op[sb, sk] == 0:
            continue
        T += op[sb, sk] * np.multiply.outer(Mk[sk], Mb[sb].conj())
    # axes now: ket legs (2D of them) then bra legs; interleave to pairs
    n = 2 * D
    T = T.transpose([x for k in range(n) for x in (k, n + k)])
    return T.reshape((4,) * n)


def reduce_tensor(T):
    """Keep the diagonal pair values (00) and (11) on every leg: t_{ab..} = T_{(aa)(bb)..}."""
    idx = np.array([0, 3])
    return T[np.ix_(*([idx] * T.ndim))]


def alpha_vec(D):
    return np.ones((2,) * D)


def p_tensor(D):
    """p = |alpha><0|, legs (in*D, out*D)."""
    _check_dim(D)
    p = np.zeros((2,) * (2 * D))
    p[(Ellipsis,) + (0,) * D] = 1.0
    return p


def q_tensor(D):
    """q = |0><0| - |0><1|."""
    _check_dim(D)
    q = np.zeros((2,) * (2 * D))
    q[(0,) * D + (0,) * D] = 1.0
    q[(0,) * D + (1,) * D] = -1.0
    return q


def reduced_tensor(theta, D):
    """t(theta) = p - sin^2(theta/2) q."""
    return p_tensor(D) - np.sin(theta / 2) ** 2 * q_tensor(D)


def contract_q_with_p(D):
    """q with a p attached to each of its out legs; every element of the result is zero."""
    q, p = q_tensor(D), p_tensor(D)
    out = q
    for _ in range(D):
        # the next uncontracted out leg of q always sits at axis D
        out = np.tensordot(out, p, axes=([D], [0]))
    return out


def operator_tensor(kind, theta, phi=0.0, D=1):
    """Closed-form reduced or double tensors used for observables.

    S: <M|sx|M>, J: <M|n|M>, K: <dM|sx|M>, g: <dM|dM>, dM: dM/dtheta,
    dT: <dM|M> (after reduction proportional to q).
    Out-leg strings follow the leg value 2*ket + bra.
    """
    _check_dim(D)
    if kind == "S":
        return double_tensor(theta, D, phi, op=SX)
    if kind == "J":
        return reduce_tensor(double_tensor(theta, D, phi, op=N_OP))
    if kind == "K":
        return double_tensor(theta, D, phi, op=SX, bra_deriv=True)
    if kind == "g":
        return reduce_tensor(double_tensor(theta, D, phi, ket_deriv=True, bra_deriv=True))
    if kind == "dM":
        return site_tensor(theta, phi, D, deriv=True)
    if kind == "dT":
        return reduce_tensor(double_tensor(theta, D, phi, bra_deriv=True))
    raise ValueError(f"invalid operator kind {kind!r}; choose from {OPERATOR_KINDS}")


# ---------------------------------------------------------------------------
# pair factors


def _zero_mask(nin, dims):
    """For upstream pair variables with the given dims, masks (ket all down, bra all down)."""
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    zk = np.ones(tuple(dims), dtype=bool)
    zb = np.ones(tuple(dims), dtype=bool)
    for g, d in zip(grids, dims):
        val = g if d == 4 else 3 * g  # dimension-2 legs are reduced: 0 -> 00, 1 -> 11
        zk &= (val >> 1) == 0
        zb &= (val & 1) == 0
    return zk, zb


def pair_factor(theta, phi=0.0, op=None, ket_deriv=False, bra_deriv=False, in_dims=(2,), out_dim=4):
    """F[batch, v, u_1..u_D] for a site with its own variable v and upstream variables u.

    ``in_dims`` gives 2 (reduced) or 4 (full pair) for every upstream leg and
    ``out_dim`` the same for the site itself.  Returns shape (B, out_dim, *in_dims).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    B = theta.shape[0]
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (B,))
    op = ID2 if op is None else np.asarray(op, dtype=complex)
    ak = amplitude_table(theta, phi, ket_deriv)
    ab = amplitude_table(theta, phi, bra_deriv).conj()
    zk, zb = _zero_mask(len(in_dims), in_dims)
    zk, zb = zk.astype(int), zb.astype(int)
    vals = [0, 3] if out_dim == 2 else [0, 1, 2, 3]
    F = np.zeros((B, out_dim) + tuple(in_dims), dtype=complex)
    for i, v in enumerate(vals):
        sk, sb = v >> 1, v & 1
        if op[sb, sk] == 0:
            continue
        F[:, i] = op[sb, sk] * ak[:, sk][:, zk] * ab[:, sb][:, zb]
    return F


def reduced_factor(theta, nin, in_dims=None):
    """Real pair factor of t = p - sin^2 q: F[b, v, u..] with v in {0,1}.

    Upstream legs of dimension 4 (full pair variables) accept only the
    diagonal values 0 and 3; the off-diagonal entries are zero.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    in_dims = (2,) * nin if in_dims is None else tuple(in_dims)
    s = np.sin(theta / 2) ** 2
    B = s.shape[0]
    grids = np.meshgrid(*[np.arange(d) for d in in_dims], indexing="ij")
    allz = np.ones(in_dims, dtype=bool)
    valid = np.ones(in_dims, dtype=bool)
    for g, d in zip(grids, in_dims):
        allz &= g == 0
        if d == 4:
            valid &= (g == 0) | (g == 3)
    F = np.zeros((B, 2) + in_dims)
    sb = s.reshape((B,) + (1,) * len(in_dims))
    F[:, 0] = np.where(allz, 1.0 - sb, 1.0) * valid
    F[:, 1] = np.where(allz, sb, 0.0) * valid
    return F
