"""Vectorized assembly of the bilinear and linear forms used by the solvers.

All kernels loop over quadrature points with ``einsum`` across every
cell at once.  Coefficients may be constants or callables ``w(x)``
evaluated at physical quadrature points ``x`` of shape (2, M, nq).
"""

import numpy as np

from .elements import eval_basis, line_quadrature, quadrature
from .linalg import MatrixBuilder

ASSEMBLY_DEGREE = 5   # 2 * (max trial degree) + 1
SOURCE_DEGREE = 6


def _coef(w, mesh, rule):
    if w is None:
        return 1.0
    if callable(w):
        return np.asarray(w(mesh.map_points(rule.points)), dtype=float)
    return float(w)


def _dx(mesh, rule):
    """Quadrature weights times |det J|, shape (M, nq)."""
    return np.abs(mesh.jacobians[1])[:, None] * rule.weights[None, :]


def _finish(local, rows, cols, shape):
    b = MatrixBuilder(shape)
    b.add(local, rows, cols)
    return b.tocsr()


def mass_matrix(V, W=None, weight=None, degree=ASSEMBLY_DEGREE):
    """``int w phi_i psi_j`` for scalar spaces (rows ``V``, columns ``W``)."""
    W = V if W is None else W
    rule = quadrature(degree)
    dx = _dx(V.mesh, rule) * _coef(weight, V.mesh, rule)
    a, _ = eval_basis(V.element, rule.points)
    b, _ = eval_basis(W.element, rule.points)
    local = np.einsum("mq,qa,qb->mab", dx, a, b)
    return _finish(local, V.dofmap, W.dofmap, (V.ndofs, W.ndofs))


def stiffness_matrix(V, weight=None, degree=ASSEMBLY_DEGREE):
    """``int w grad phi_i . grad phi_j`` for a scalar space."""
    rule = quadrature(degree)
    dx = _dx(V.mesh, rule) * _coef(weight, V.mesh, rule)
    _, g = V.tabulate(rule.points)
    local = np.einsum("mq,mqad,mqbd->mab", dx, g, g)
    return _finish(local, V.dofmap, V.dofmap, (V.ndofs, V.ndofs))


def elasticity_matrix(V, mu, lam=0.0, degree=ASSEMBLY_DEGREE):
    """``int 2 mu eps(u):eps(v) + lam div u div v`` for a vector space."""
    rule = quadrature(degree)
    dx = _dx(V.mesh, rule)
    _, g = V.tabulate(rule.points)
    # D[m, i, a, j, b] = int d_i phi_a d_j phi_b
    D = np.einsum("mq,mqai,mqbj->miajb", dx, g, g)
    n = V.nloc
    lap = D[:, 0, :, 0, :] + D[:, 1, :, 1, :]
    local = np.empty((V.mesh.num_cells, 2, n, 2, n))
    for c in range(2):
        for d in range(2):
            blk = mu * D[:, d, :, c, :] + lam * D[:, c, :, d, :]
            if c == d:
                blk = blk + mu * lap
            local[:, c, :, d, :] = blk
    local = local.reshape(-1, 2 * n, 2 * n)
    return _finish(local, V.dofmap, V.dofmap, (V.ndofs, V.ndofs))


def divergence_matrix(Q, V, degree=ASSEMBLY_DEGREE):
    """``B[i, j] = int psi_i div phi_j`` with ``Q`` scalar and ``V`` vector."""
    rule = quadrature(degree)
    dx = _dx(V.mesh, rule)
    psi, _ = eval_basis(Q.element, rule.points)
    _, g = V.tabulate(rule.points)
    local = np.einsum("mq,qa,mqbc->macb", dx, psi, g).reshape(V.mesh.num_cells, Q.nloc, 2 * V.nloc)
    return _finish(local, Q.dofmap, V.dofmap, (Q.ndofs, V.ndofs))


def load_vector(V, func, t=0.0, degree=SOURCE_DEGREE):
    """``int f . v`` for ``f(x, t)`` (scalar or 2-vector valued)."""
    rule = quadrature(degree)
    mesh = V.mesh
    dx = _dx(mesh, rule)
    X = mesh.map_points(rule.points)
    vals = np.asarray(func(X, t), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError(f"non-finite source values at t={t}")
    phi, _ = eval_basis(V.element, rule.points)
    if V.value_size == 1:
        vals = np.broadcast_to(vals, dx.shape)
        local = np.einsum("mq,mq,qa->ma", dx, vals, phi)
    else:
        vals = np.broadcast_to(vals, (2,) + dx.shape)
        local = np.einsum("mq,cmq,qa->mca", dx, vals, phi).reshape(mesh.num_cells, -1)
    out = np.zeros(V.ndofs)
    np.add.at(out, V.dofmap.ravel(), local.ravel())
    return out


def facet_geometry(mesh, facet_ids):
    """Endpoints, length and outward unit normal of boundary facets."""
    f = mesh.facets[facet_ids]
    a = mesh.vertices[f[:, 0]]
    b = mesh.vertices[f[:, 1]]
    d = b - a
    length = np.linalg.norm(d, axis=1)
    n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    cells = mesh.facet_cells[facet_ids, 0]
    centroid = mesh.vertices[mesh.cells[cells]].mean(axis=1)
    flip = np.einsum("kd,kd->k", centroid - a, n) > 0
    n[flip] *= -1.0
    return a, b, length, n


def normal_stress_vector(V, tags, stress, t=0.0, degree=SOURCE_DEGREE):
    """``int_Gamma s(x, t) n . v ds`` over facets with the given tags (vector ``V``)."""
    mesh = V.mesh
    out = np.zeros(V.ndofs)
    ids = np.nonzero(np.isin(mesh.facet_tags, list(tags)))[0]
    if ids.size == 0:
        return out
    s, w = line_quadrature(degree)
    a, b, length, n = facet_geometry(mesh, ids)
    X = a.T[:, :, None] + (b - a).T[:, :, None] * s[None, None, :]   # (2, K, nq)
    vals = np.broadcast_to(np.asarray(stress(X, t), dtype=float), X.shape[1:])
    if V.degree == 2:
        shape = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)
    else:
        shape = np.stack([1 - s, s], axis=1)
    nodes = V.facet_nodes[ids]
    # local[k, c, a] = sum_q w len s_q n_c N_a
    local = np.einsum("q,k,kq,kc,qa->kca", w, length, vals, n, shape)
    dofs = np.stack([2 * nodes, 2 * nodes + 1], axis=1) if V.value_size == 2 else nodes[:, None, :]
    np.add.at(out, dofs.ravel(), local.ravel())
    return out
