"""Lagrange basis functions and quadrature on the reference triangle.

The reference triangle has vertices (0, 0), (1, 0), (0, 1).  Points are
passed as barycentric coordinates ``(l0, l1, l2)`` with ``l1 = x`` and
``l2 = y``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

# d(l0, l1, l2)/d(x, y)
_DBARY = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class ReferenceElement:
    """Continuous Lagrange element of degree 1 or 2.

    Degree-2 nodes are the vertices followed by the midpoints of the edges
    opposite vertex 0, 1, 2.
    """

    degree: int

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"unsupported Lagrange degree {self.degree}")

    @property
    def node_count(self):
        return 3 if self.degree == 1 else 6

    @property
    def node_coords(self):
        """Barycentric coordinates of the nodes, shape (node_count, 3)."""
        verts = np.eye(3)
        if self.degree == 1:
            return verts
        mids = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        return np.vstack([verts, mids])


def lagrange_element(degree):
    return ReferenceElement(int(degree))


def eval_basis(element, points):
    """Evaluate basis values and reference gradients.

    Parameters
    ----------
    element : ReferenceElement
    points : (..., 3) array
        Barycentric coordinates.

    Returns
    -------
    values : (..., n) array
    grads : (..., n, 2) array
        Gradients with respect to the reference coordinates (x, y).
    """
    L = np.asarray(points, dtype=float)
    l0, l1, l2 = L[..., 0], L[..., 1], L[..., 2]
    if element.degree == 1:
        values = L.copy()
        grads = np.broadcast_to(_DBARY, L.shape[:-1] + (3, 2)).copy()
        return values, grads

    values = np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ], axis=-1)
    # chain rule through the barycentric coordinates
    dL = np.stack([
        (4 * l0 - 1)[..., None] * _DBARY[0],
        (4 * l1 - 1)[..., None] * _DBARY[1],
        (4 * l2 - 1)[..., None] * _DBARY[2],
        4 * (l2[..., None] * _DBARY[1] + l1[..., None] * _DBARY[2]),
        4 * (l0[..., None] * _DBARY[2] + l2[..., None] * _DBARY[0]),
        4 * (l1[..., None] * _DBARY[0] + l0[..., None] * _DBARY[1]),
    ], axis=-2)
    return values, dL


@dataclass(frozen=True)
class QuadratureRule:
    degree: int
    points: np.ndarray   # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum to 1/2

    @property
    def xy(self):
        return self.points[:, 1:]


MAX_QUADRATURE_DEGREE = 6


@lru_cache(maxsize=None)
def quadrature(degree):
    """Collapsed Gauss-Jacobi rule on the reference triangle, exact to ``degree``.

    The square [0, 1]^2 is mapped onto the triangle by ``x = s``,
    ``y = t (1 - s)``; the Jacobian factor ``1 - s`` is absorbed into a
    Gauss-Jacobi rule in ``s``.
    """
    degree = int(degree)
    if degree < 0 or degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree {degree} not supported (0..{MAX_QUADRATURE_DEGREE})")
    n = degree // 2 + 1
    a, wa = roots_jacobi(n, 1.0, 0.0)   # weight (1 - a)
    b, wb = roots_legendre(n)
    s = 0.5 * (1.0 + a)
    ws = wa / 4.0                       # ds = da / 2 and (1 - s) = (1 - a) / 2
    t = 0.5 * (1.0 + b)
    wt = wb / 2.0
    S, Tt = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = (Tt * (1.0 - S)).ravel()
    w = np.outer(ws, wt).ravel()
    pts = np.column_stack([1.0 - x - y, x, y])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(degree, pts, w)


@lru_cache(maxsize=None)
def line_quadrature(degree):
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    n = int(degree) // 2 + 1
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w
