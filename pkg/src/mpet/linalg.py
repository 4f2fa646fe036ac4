"""Sparse assembly, block systems, Dirichlet elimination and direct solves.

Matrices are :class:`scipy.sparse.csr_matrix` (sorted, duplicate-free
column indices).  Factorizations use SuperLU with partial pivoting and a
fill-reducing column ordering; every solve is followed by a residual
check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14
BACKWARD_TOL = 1e-13


class SolverError(RuntimeError):
    """Singular matrix or failed residual check."""


class SingularMatrixError(SolverError):
    def __init__(self, index, message):
        super().__init__(message)
        self.index = index


class MatrixBuilder:
    """Accumulates element contributions as COO triplets.

    Contributions are privatized per call and merged by summation when
    converted, so the result does not depend on the order of :meth:`add`
    calls beyond floating-point summation order.
    """

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))
        self._rows, self._cols, self._vals = [], [], []

    def add(self, cell_matrices, row_dofs, col_dofs):
        """Scatter-add one (r, c) or a batch (M, r, c) of cell matrices."""
        K = np.asarray(cell_matrices, dtype=float)
        R = np.asarray(row_dofs, dtype=np.int64)
        C = np.asarray(col_dofs, dtype=np.int64)
        if K.ndim == 2:
            K, R, C = K[None], R[None], C[None]
        if K.shape != (R.shape[0], R.shape[1], C.shape[1]) or C.shape[0] != R.shape[0]:
            raise ValueError(f"cell matrix shape {K.shape} inconsistent with dofs {R.shape}, {C.shape}")
        if R.size and (R.min() < 0 or R.max() >= self.shape[0]):
            raise IndexError(f"row index out of range for shape {self.shape}")
        if C.size and (C.min() < 0 or C.max() >= self.shape[1]):
            raise IndexError(f"column index out of range for shape {self.shape}")
        self._rows.append(np.broadcast_to(R[:, :, None], K.shape).ravel())
        self._cols.append(np.broadcast_to(C[:, None, :], K.shape).ravel())
        self._vals.append(K.ravel())

    def tocsr(self):
        if not self._vals:
            return sp.csr_matrix(self.shape)
        A = sp.coo_matrix((np.concatenate(self._vals),
                           (np.concatenate(self._rows), np.concatenate(self._cols))),
                          shape=self.shape).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def assemble_add(builder, cell_matrix, row_dofs, col_dofs):
    builder.add(cell_matrix, row_dofs, col_dofs)
    return builder


@dataclass
class BlockSystem:
    """Grid of optional sparse blocks in field order plus right-hand side.

    ``constrained`` holds monolithic dof indices and ``values`` the
    prescribed values for them.
    """

    blocks: list
    sizes: list
    rhs: np.ndarray | None = None
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = len(self.sizes)
        if len(self.blocks) != n or any(len(row) != n for row in self.blocks):
            raise ValueError("block grid must be square and match the number of fields")
        for i, row in enumerate(self.blocks):
            for j, B in enumerate(row):
                if B is not None and B.shape != (self.sizes[i], self.sizes[j]):
                    raise ValueError(f"block ({i}, {j}) has shape {B.shape}, "
                                     f"expected {(self.sizes[i], self.sizes[j])}")

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @property
    def size(self):
        return int(sum(self.sizes))

    def matrix(self):
        grid = [[B for B in row] for row in self.blocks]
        for i, n in enumerate(self.sizes):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((n, n))
        return sp.bmat(grid, format="csr")

    def split(self, x):
        o = self.offsets
        return [x[o[i]:o[i + 1]] for i in range(len(self.sizes))]


def symmetry_defect(A):
    """Relative Frobenius norm of ``A - A^T``."""
    nrm = spla.norm(A)
    if nrm == 0.0:
        return 0.0
    return float(spla.norm(A - A.T) / nrm)


class DirichletLift:
    """Symmetric elimination of constrained dofs.

    The eliminated matrix has zero rows and columns at constrained dofs
    with a unit diagonal.  :meth:`rhs` lifts a right-hand side by
    subtracting the constrained columns times the prescribed values.
    """

    def __init__(self, A, constrained):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        c = np.unique(np.asarray(constrained, dtype=np.int64))
        self.constrained = c
        free = np.ones(n, dtype=bool)
        free[c] = False
        self.free = free
        D = sp.diags(free.astype(float))
        self.columns = sp.csc_matrix(A)[:, c]
        self.matrix = (D @ A @ D + sp.diags((~free).astype(float))).tocsr()
        self.matrix.eliminate_zeros()
        self.matrix.sort_indices()

    def rhs(self, b, values):
        values = np.broadcast_to(np.asarray(values, dtype=float), self.constrained.shape)
        out = np.array(b, dtype=float)
        if self.constrained.size:
            out -= self.columns @ values
            out[self.constrained] = values
        return out


def apply_dirichlet(system: BlockSystem):
    """Eliminate the constraints of ``system``; returns (matrix, rhs)."""
    A = system.matrix()
    lift = DirichletLift(A, system.constrained)
    b = system.rhs if system.rhs is not None else np.zeros(A.shape[0])
    full = np.zeros(A.shape[0])
    full[system.constrained] = system.values
    return lift.matrix, lift.rhs(b, full[lift.constrained])


class DirectSolver:
    """LU factorization of a square sparse matrix, reusable across solves."""

    max_refinements = 4
    min_refinements = 1

    def __init__(self, A, pivot_tol=PIVOT_TOL, residual_tol=RESIDUAL_TOL):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise SolverError(f"matrix is not square: {A.shape}")
        self.A = A.tocsr()
        self.residual_tol = residual_tol
        self.last_residual = None
        self.last_backward_error = None
        self.norm_A = float(spla.norm(A, 'fro'))
        absA = abs(A)
        row_max = np.asarray(absA.max(axis=1).todense()).ravel()
        zero_rows = np.nonzero(row_max == 0.0)[0]
        if zero_rows.size:
            raise SingularMatrixError(int(zero_rows[0]),
                                      f"matrix is singular: row {zero_rows[0]} is identically zero")
        try:
            self.lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=0.01,
                                options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise SingularMatrixError(-1, f"matrix is singular: {exc}") from None
        # tiny pivots relative to the largest entry of the pivot column
        col_max = np.asarray(absA.max(axis=0).todense()).ravel()
        udiag = np.abs(self.lu.U.diagonal())
        ref = col_max[self.lu.perm_c]
        small = np.nonzero(udiag <= pivot_tol * ref)[0]
        if small.size:
            k = int(self.lu.perm_c[small[0]])
            raise SingularMatrixError(k, f"matrix is numerically singular: pivot for column {k} "
                                         f"is {udiag[small[0]]:.3e}")

    def solve(self, b):
        """Solve ``A x = b`` with a residual check.

        The relative residual ``||Ax - b|| / ||b||`` must not exceed
        ``residual_tol``.  When the right-hand side is tiny compared with
        ``|A| |x|`` (strong cancellation, as for nearly incompressible
        displacement blocks) that bound lies below the rounding floor; the
        solve is then accepted if the normwise backward error
        ``||r|| / (||A|| ||x|| + ||b||)`` is at rounding level.
        At least ``min_refinements`` steps of iterative refinement are
        taken while they keep lowering the residual; one step is enough to
        bring saddle-point solutions with a large Lame parameter close to
        their rounding floor.  ``last_residual`` always holds the relative
        residual.
        """
        b = np.asarray(b, dtype=float)
        nb = np.linalg.norm(b)
        if nb == 0.0:
            x = np.zeros_like(b)
            self.last_residual = self.last_backward_error = 0.0
            return x
        x = self.lu.solve(b)
        r = self.A @ x - b
        res = np.linalg.norm(r) / nb
        steps = 0
        while steps < self.max_refinements:
            done = np.isfinite(res) and res <= self.residual_tol
            if done and steps >= self.min_refinements:
                break
            x_new = x - self.lu.solve(r)
            r_new = self.A @ x_new - b
            res_new = np.linalg.norm(r_new) / nb
            steps += 1
            if done and not res_new < res:
                break        # refinement has stalled at the rounding floor
            x, r, res = x_new, r_new, res_new
        berr = np.linalg.norm(r) / (self.norm_A * np.linalg.norm(x) + nb)
        if not np.isfinite(res) or (res > self.residual_tol and berr > BACKWARD_TOL):
            raise SolverError(f"residual check failed: {res:.3e} > {self.residual_tol:.1e}")
        if res > self.residual_tol:
            log.debug("relative residual %.2e above tolerance at rounding floor "
                      "(backward error %.2e)", res, berr)
        self.last_residual = float(res)
        self.last_backward_error = float(berr)
        return x


def solve(system_or_matrix, rhs=None):
    """Solve a :class:`BlockSystem` (after Dirichlet elimination) or ``A x = b``."""
    if isinstance(system_or_matrix, BlockSystem):
        A, b = apply_dirichlet(system_or_matrix)
    else:
        A, b = system_or_matrix, rhs
    return DirectSolver(A).solve(b)


def dump_matrix(A, path):
    """Write ``A`` in MatrixMarket coordinate format."""
    path = Path(path)
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
    log.debug("wrote %s", path)
