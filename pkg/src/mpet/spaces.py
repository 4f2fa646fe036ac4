"""Continuous Lagrange function spaces, dof maps and boundary constraints."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .elements import eval_basis, lagrange_element
from .mesh import Mesh


class SpaceError(ValueError):
    pass


class FESpace:
    """Scalar or 2-vector continuous Lagrange space on a :class:`Mesh`.

    Scalar nodes are numbered vertices first, then edge midpoints (degree
    2).  Vector dofs interleave components: ``dof = 2 * node + component``.
    Locally, vector dofs are ordered component-major, so ``dofmap[:, c *
    nloc + a]`` is component ``c`` of local node ``a``.

    Parameters
    ----------
    mesh : Mesh
    degree : {1, 2}
    value_size : {1, 2}
    constrained_tags : iterable of int
        Boundary tags on which the space carries Dirichlet data.
    name : str
    """

    def __init__(self, mesh: Mesh, degree: int, value_size: int = 1,
                 constrained_tags=(), name: str = ""):
        if value_size not in (1, 2):
            raise SpaceError("value_size must be 1 or 2")
        self.mesh = mesh
        self.element = lagrange_element(degree)
        self.degree = self.element.degree
        self.value_size = value_size
        tags = frozenset(int(t) for t in constrained_tags)
        unknown = tags - mesh.tags
        if unknown:
            raise SpaceError(f"space {name!r}: unknown boundary tag(s) {sorted(unknown)}; "
                             f"mesh has {sorted(mesh.tags)}")
        self.constrained_tags = tags
        self.name = name

    def __repr__(self):
        kind = "vector" if self.value_size == 2 else "scalar"
        return f"FESpace({self.name!r}, {kind} P{self.degree}, ndofs={self.ndofs})"

    @property
    def nloc(self):
        return self.element.node_count

    @cached_property
    def num_nodes(self):
        m = self.mesh
        return m.num_vertices + (m.num_edges if self.degree == 2 else 0)

    @property
    def ndofs(self):
        return self.value_size * self.num_nodes

    @cached_property
    def cell_nodes(self):
        m = self.mesh
        if self.degree == 1:
            return m.cells
        return np.hstack([m.cells, m.num_vertices + m.cell_edges])

    @cached_property
    def node_coords(self):
        m = self.mesh
        if self.degree == 1:
            return m.vertices
        mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mids])

    @cached_property
    def dofmap(self):
        """Global dofs of each cell, shape (M, value_size * nloc)."""
        if self.value_size == 1:
            return self.cell_nodes
        n = self.cell_nodes
        return np.hstack([2 * n, 2 * n + 1])

    @cached_property
    def facet_nodes(self):
        """Nodes on each boundary facet: (a, b) or (a, b, midpoint)."""
        m = self.mesh
        if self.degree == 1:
            return m.facets
        return np.column_stack([m.facets, m.num_vertices + m.facet_edges])

    def boundary_nodes(self, tags):
        """Sorted unique nodes lying on facets whose tag is in ``tags``."""
        tags = [tags] if np.isscalar(tags) else list(tags)
        sel = np.isin(self.mesh.facet_tags, tags)
        return np.unique(self.facet_nodes[sel])

    def node_dofs(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.value_size == 1:
            return nodes
        return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))

    @cached_property
    def constrained_dofs(self):
        if not self.constrained_tags:
            return np.zeros(0, dtype=np.int64)
        return self.node_dofs(self.boundary_nodes(sorted(self.constrained_tags)))

    def dof_coords(self):
        """Coordinates of every dof, shape (ndofs, 2)."""
        if self.value_size == 1:
            return self.node_coords
        return np.repeat(self.node_coords, 2, axis=0)

    # -- geometry helpers -------------------------------------------------
    def tabulate(self, bary):
        """Basis values (nq, nloc) and physical gradients (M, nq, nloc, 2)."""
        vals, grads = eval_basis(self.element, bary)
        invJ = self.mesh.jacobians[2]
        pg = np.einsum("qad,mde->mqae", grads, invJ)
        return vals, pg


@dataclass
class FEFunction:
    """Coefficient vector attached to an :class:`FESpace`."""

    space: FESpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.ndofs,):
            raise SpaceError(f"coefficient length {self.coefficients.shape} does not match "
                             f"space size {self.space.ndofs}")

    def copy(self):
        return FEFunction(self.space, self.coefficients.copy())

    def cell_values(self):
        """Local coefficients per cell, shape (M, nloc) or (M, 2, nloc)."""
        V = self.space
        loc = self.coefficients[V.dofmap]
        if V.value_size == 2:
            return loc.reshape(-1, 2, V.nloc)
        return loc

    def eval_at_quadrature(self, bary, grad=False):
        """Values (…, M, nq) and optionally gradients (…, 2, M, nq) at cell points.

        For vector functions the leading axis indexes the component.
        """
        V = self.space
        vals, pg = V.tabulate(bary)
        loc = self.cell_values()
        if V.value_size == 1:
            v = loc @ vals.T
            if not grad:
                return v
            g = np.einsum("ma,mqad->dmq", loc, pg)
            return v, g
        v = np.einsum("mca,qa->cmq", loc, vals)
        if not grad:
            return v
        g = np.einsum("mca,mqad->cdmq", loc, pg)
        return v, g

    def eval_in_cell(self, cell, bary):
        """Value at one barycentric point of one cell (scalar or length-2 array)."""
        V = self.space
        vals, _ = eval_basis(V.element, np.asarray(bary, dtype=float))
        loc = self.coefficients[V.dofmap[cell]]
        if V.value_size == 2:
            return loc.reshape(2, V.nloc) @ vals
        return float(loc @ vals)


def interpolate(space, expr, t=0.0):
    """Nodal interpolant of ``expr(x, t)``.

    ``x`` is passed with shape (2, N); ``expr`` returns shape (N,) for
    scalar spaces and (2, N) for vector spaces.  Plain numbers are
    accepted as constant expressions.
    """
    X = space.node_coords.T
    if callable(expr):
        vals = np.asarray(expr(X, t), dtype=float)
    else:
        vals = np.asarray(expr, dtype=float)
    n = space.num_nodes
    if space.value_size == 1:
        vals = np.broadcast_to(vals, (n,))
        return FEFunction(space, np.array(vals, dtype=float))
    if vals.size == 1:
        vals = np.full((2, n), float(vals))
    vals = np.broadcast_to(vals.reshape(2, -1) if vals.size > 2 else vals.reshape(2, 1), (2, n))
    coeffs = np.empty(2 * n)
    coeffs[0::2] = vals[0]
    coeffs[1::2] = vals[1]
    return FEFunction(space, coeffs)


def make_taylor_hood_spaces(mesh, A, dirichlet_spec=None):
    """Spaces ``[V_h, Q_0h, Q_1h, ..., Q_Ah]`` of the total-pressure scheme.

    ``V_h`` is vector P2, the pressures are scalar P1.  ``dirichlet_spec``
    maps field names (``"u"``, ``"p1"``, ...) to the boundary tags where
    that field is prescribed; ``"p"`` sets all network pressures at once.
    ``Q_0h`` is never constrained.
    """
    return _make_spaces(mesh, A, dirichlet_spec, total_pressure=True)


def make_standard_spaces(mesh, A, dirichlet_spec=None):
    """Spaces ``[V_h, Q_1h, ..., Q_Ah]`` of the two-field scheme."""
    return _make_spaces(mesh, A, dirichlet_spec, total_pressure=False)


def field_names(A, total_pressure=True):
    return ["u"] + (["p0"] if total_pressure else []) + [f"p{j}" for j in range(1, A + 1)]


def _make_spaces(mesh, A, dirichlet_spec, total_pressure):
    A = int(A)
    if A < 1:
        raise SpaceError("need at least one network")
    spec = dict(dirichlet_spec or {})
    allowed = {"u", "p"} | {f"p{j}" for j in range(1, A + 1)}
    bad = set(spec) - allowed
    if bad:
        raise SpaceError(f"unknown field(s) in Dirichlet specification: {sorted(bad)}")
    for key, tags in spec.items():
        unknown = set(int(t) for t in tags) - mesh.tags
        if unknown:
            raise SpaceError(f"field {key!r}: unknown boundary tag(s) {sorted(unknown)}")
    spaces = [FESpace(mesh, 2, 2, spec.get("u", ()), name="u")]
    if total_pressure:
        spaces.append(FESpace(mesh, 1, 1, (), name="p0"))
    for j in range(1, A + 1):
        tags = spec.get(f"p{j}", spec.get("p", ()))
        spaces.append(FESpace(mesh, 1, 1, tags, name=f"p{j}"))
    return spaces
