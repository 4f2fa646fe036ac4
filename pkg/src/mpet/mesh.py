"""
Two-dimensional simplicial meshes with tagged boundary facets.

A :class:`Mesh` stores vertex coordinates, counter-clockwise cells and
the boundary facets together with an integer tag per facet.  Derived
connectivity (unique edges, cell-to-edge map, facet-to-cell map) is
computed lazily and cached.

Examples
--------
>>> m = build_unit_square_mesh(4)
>>> m.num_vertices, m.num_cells, m.num_facets
(25, 32, 16)
>>> refine_uniform(m).num_cells
128
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

WHOLE = 1
SKULL = 2
VENTRICLE = 3

TAG_NAMES = {WHOLE: "whole", SKULL: "skull", VENTRICLE: "ventricle"}


class MeshError(ValueError):
    """Raised for structurally invalid meshes or malformed mesh files."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with tagged boundary facets.

    Parameters
    ----------
    vertices : (N, 2) array
        Vertex coordinates.
    cells : (M, 3) int array
        Counter-clockwise vertex triples.
    facets : (K, 2) int array
        Boundary edges as vertex pairs.
    facet_tags : (K,) int array
        One tag per boundary facet.
    diagonal : str, optional
        Free-form description of how the mesh was generated; carried into
        reports for reproducibility.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    diagonal: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float))
        object.__setattr__(self, "cells", np.ascontiguousarray(self.cells, dtype=np.int64))
        object.__setattr__(self, "facets", np.ascontiguousarray(self.facets, dtype=np.int64))
        object.__setattr__(self, "facet_tags", np.ascontiguousarray(self.facet_tags, dtype=np.int64))
        for arr in (self.vertices, self.cells, self.facets, self.facet_tags):
            arr.setflags(write=False)
        self._validate()

    def _validate(self):
        nv = self.vertices.shape[0]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (N, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshError("cells must have shape (M, 3)")
        if self.facets.ndim != 2 or self.facets.shape[1] != 2:
            raise MeshError("facets must have shape (K, 2)")
        if self.facet_tags.shape != (self.facets.shape[0],):
            raise MeshError("facet_tags must hold exactly one tag per facet")
        for name, idx in (("cell", self.cells), ("facet", self.facets)):
            bad = np.nonzero((idx < 0) | (idx >= nv))[0]
            if bad.size:
                raise MeshError(f"{name} {bad[0]} references a vertex index out of range [0, {nv})")
        area = self.cell_areas
        bad = np.nonzero(area <= 0.0)[0]
        if bad.size:
            raise MeshError(f"cell {bad[0]} has non-positive signed area {area[bad[0]]:.3e}")

        counts = np.bincount(self.cell_edges.ravel(), minlength=len(self.edges))
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two cells")
        boundary_edges = np.nonzero(counts == 1)[0]
        facet_edges = self.facet_edges
        if np.unique(facet_edges).size != facet_edges.size:
            raise MeshError("a boundary facet is listed more than once")
        if np.any(counts[facet_edges] != 1):
            raise MeshError("a listed facet is not a boundary edge")
        if boundary_edges.size != facet_edges.size:
            raise MeshError(
                f"{boundary_edges.size} boundary edges but {facet_edges.size} tagged facets")

    # -- sizes -------------------------------------------------------------
    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @property
    def num_facets(self):
        return self.facets.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def tags(self):
        return frozenset(int(t) for t in np.unique(self.facet_tags))

    # -- geometry ----------------------------------------------------------
    @cached_property
    def cell_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def jacobians(self):
        """Affine maps from the reference triangle: (J, detJ, invJ)."""
        p = self.vertices[self.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        return J, det, inv

    def map_points(self, bary):
        """Physical coordinates of barycentric points in every cell, shape (2, M, nq)."""
        p = self.vertices[self.cells]  # (M, 3, 2)
        x = np.einsum("qk,mkd->dmq", np.asarray(bary), p)
        return x

    @property
    def area(self):
        return float(self.cell_areas.sum())

    @cached_property
    def h(self):
        """Longest edge length."""
        e = self.vertices[self.edges]
        return float(np.max(np.linalg.norm(e[:, 1] - e[:, 0], axis=1)))

    # -- connectivity ------------------------------------------------------
    @cached_property
    def _edge_data(self):
        c = self.cells
        # local edge i is opposite local vertex i
        local = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        keys = pairs[:, 0] * self.num_vertices + pairs[:, 1]
        ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        edges = pairs[first]
        return ukeys, edges, inverse.reshape(-1, 3)

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_data[1]

    @property
    def cell_edges(self):
        """Edge index of local edge i (opposite local vertex i), shape (M, 3)."""
        return self._edge_data[2]

    def edge_index(self, pairs):
        """Global edge index for each vertex pair; raises if a pair is not an edge."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        keys = pairs[:, 0] * self.num_vertices + pairs[:, 1]
        ukeys = self._edge_data[0]
        idx = np.searchsorted(ukeys, keys)
        idx = np.minimum(idx, len(ukeys) - 1)
        if np.any(ukeys[idx] != keys):
            raise MeshError("facet does not coincide with a cell edge")
        return idx

    @cached_property
    def facet_edges(self):
        return self.edge_index(self.facets)

    @cached_property
    def facet_cells(self):
        """(cell, local edge) adjacent to each facet, shape (K, 2)."""
        ce = self.cell_edges.ravel()
        lookup = np.full(self.num_edges, -1, dtype=np.int64)
        lookup[ce] = np.arange(ce.size)
        flat = lookup[self.facet_edges]
        return np.stack([flat // 3, flat % 3], axis=1)

    def facets_with_tag(self, tag):
        return np.nonzero(self.facet_tags == tag)[0]

    @property
    def euler_characteristic(self):
        """V - E + F with F the number of cells (outer face not counted)."""
        return self.num_vertices - self.num_edges + self.num_cells

    def __repr__(self):
        return (f"Mesh({self.num_vertices} vertices, {self.num_cells} cells, "
                f"{self.num_facets} facets, tags={sorted(self.tags)})")

    def same_as(self, other, tol=0.0):
        """Exact structural equality (used for file round trips)."""
        return (self.vertices.shape == other.vertices.shape
                and np.allclose(self.vertices, other.vertices, rtol=0.0, atol=tol)
                and np.array_equal(self.cells, other.cells)
                and np.array_equal(self.facets, other.facets)
                and np.array_equal(self.facet_tags, other.facet_tags))


def build_unit_square_mesh(n, diagonal="right"):
    """Uniform triangulation of the unit square with ``n x n`` squares.

    Each square is split by a diagonal; ``diagonal="right"`` runs from the
    lower-left to the upper-right corner, ``"left"`` from lower-right to
    upper-left.  All boundary facets get the :data:`WHOLE` tag.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    if diagonal not in ("right", "left"):
        raise ValueError("diagonal must be 'right' or 'left'")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v0 = (j * (n + 1) + i).ravel()
    v1 = v0 + 1
    v2 = v0 + n + 1
    v3 = v2 + 1
    if diagonal == "right":
        cells = np.concatenate([np.column_stack([v0, v1, v3]), np.column_stack([v0, v3, v2])])
    else:
        cells = np.concatenate([np.column_stack([v0, v1, v2]), np.column_stack([v1, v3, v2])])
    # interleave so both halves of a square are neighbours in numbering
    cells = cells.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)

    k = np.arange(n)
    bottom = np.column_stack([k, k + 1])
    right = np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n])
    top = np.column_stack([n * (n + 1) + k + 1, n * (n + 1) + k])
    left = np.column_stack([(k + 1) * (n + 1), k * (n + 1)])
    facets = np.concatenate([bottom, right, top, left])
    tags = np.full(len(facets), WHOLE)
    return Mesh(vertices, cells, facets, tags, diagonal=diagonal)


def refine_uniform(mesh):
    """Split every triangle into four congruent children via edge midpoints."""
    nv = mesh.num_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.concatenate([mesh.vertices, mids])
    c = mesh.cells
    m = nv + mesh.cell_edges  # m[:, i] is the midpoint opposite vertex i
    cells = np.concatenate([
        np.column_stack([c[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([m[:, 2], c[:, 1], m[:, 0]]),
        np.column_stack([m[:, 1], m[:, 0], c[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    fm = nv + mesh.facet_edges
    facets = np.concatenate([
        np.column_stack([mesh.facets[:, 0], fm]),
        np.column_stack([fm, mesh.facets[:, 1]]),
    ])
    tags = np.concatenate([mesh.facet_tags, mesh.facet_tags])
    return Mesh(vertices, cells, facets, tags, diagonal=mesh.diagonal)


def build_annulus_mesh(r_inner, r_outer, resolution):
    """Structured triangulation of an annulus centred at the origin.

    ``resolution`` is the number of radial layers; the angular count is
    chosen so that cells at the mean radius are roughly isotropic.  Inner
    facets are tagged :data:`VENTRICLE`, outer facets :data:`SKULL`.
    """
    r_inner = float(r_inner)
    r_outer = float(r_outer)
    resolution = int(resolution)
    if not (0.0 < r_inner < r_outer):
        raise ValueError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    if resolution < 1:
        raise ValueError("resolution must be a positive integer")
    nr = resolution
    dr = (r_outer - r_inner) / nr
    nt = max(8, int(np.ceil(np.pi * (r_inner + r_outer) / dr)))

    radii = np.linspace(r_inner, r_outer, nr + 1)
    theta = 2.0 * np.pi * np.arange(nt) / nt
    R, TH = np.meshgrid(radii, theta, indexing="ij")
    vertices = np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])

    k, l = np.meshgrid(np.arange(nr), np.arange(nt), indexing="ij")
    k = k.ravel()
    l = l.ravel()
    a = k * nt + l
    b = k * nt + (l + 1) % nt
    c = (k + 1) * nt + l
    d = (k + 1) * nt + (l + 1) % nt
    cells = np.concatenate([np.column_stack([a, d, b]), np.column_stack([a, c, d])])

    l = np.arange(nt)
    inner = np.column_stack([(l + 1) % nt, l])  # clockwise: outward normal points to centre
    outer = np.column_stack([nr * nt + l, nr * nt + (l + 1) % nt])
    facets = np.concatenate([outer, inner])
    tags = np.concatenate([np.full(nt, SKULL), np.full(nt, VENTRICLE)])
    return Mesh(vertices, cells, facets, tags, diagonal="annulus")


def write_mesh(mesh, path):
    """Write ``mesh`` in the plain-text ``mpetmesh 1`` format."""
    lines = ["mpetmesh 1", f"vertices {mesh.num_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"cells {mesh.num_cells}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    lines.append(f"facets {mesh.num_facets}")
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.facets.tolist(), mesh.facet_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a mesh written by :func:`write_mesh`.

    Raises
    ------
    MeshError
        With the offending line number for malformed input, out-of-range
        vertex references or clockwise cells.
    """
    raw = Path(path).read_text().splitlines()
    lines = [(no, ln.split()) for no, ln in enumerate(raw, start=1) if ln.strip()]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"{path}: unexpected end of file")
        item = lines[pos]
        pos += 1
        return item

    no, tok = take()
    if tok != ["mpetmesh", "1"]:
        raise MeshError(f"{path}:{no}: expected header 'mpetmesh 1'")

    def section(name, width, conv):
        no, tok = take()
        if len(tok) != 2 or tok[0] != name:
            raise MeshError(f"{path}:{no}: expected '{name} <count>'")
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshError(f"{path}:{no}: bad {name} count {tok[1]!r}") from None
        rows, linenos = [], []
        for _ in range(count):
            no, tok = take()
            if len(tok) != width:
                raise MeshError(f"{path}:{no}: expected {width} fields in {name} entry, got {len(tok)}")
            try:
                rows.append([conv(t) for t in tok])
            except ValueError:
                raise MeshError(f"{path}:{no}: cannot parse {name} entry {' '.join(tok)!r}") from None
            linenos.append(no)
        return rows, linenos

    verts, _ = section("vertices", 2, float)
    cells, cell_lines = section("cells", 3, int)
    facets, facet_lines = section("facets", 3, int)
    if pos != len(lines):
        raise MeshError(f"{path}:{lines[pos][0]}: trailing content")

    nv = len(verts)
    verts = np.array(verts, dtype=float).reshape(-1, 2)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    facets = np.array(facets, dtype=np.int64).reshape(-1, 3)
    for name, arr, linenos in (("cell", cells, cell_lines), ("facet", facets[:, :2], facet_lines)):
        bad = np.nonzero(np.any((arr < 0) | (arr >= nv), axis=1))[0]
        if bad.size:
            raise MeshError(f"{path}:{linenos[bad[0]]}: {name} {bad[0]} references vertex out of range [0, {nv})")
    if len(cells):
        p = verts[cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        bad = np.nonzero(area <= 0.0)[0]
        if bad.size:
            raise MeshError(f"{path}:{cell_lines[bad[0]]}: cell {bad[0]} is clockwise or degenerate")
    try:
        return Mesh(verts, cells, facets[:, :2], facets[:, 2])
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None
