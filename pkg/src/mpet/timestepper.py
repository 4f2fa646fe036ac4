"""Compatible initial states and the transient step loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import TOTAL_PRESSURE, assemble_rhs, energy
from .linalg import DirectSolver, DirichletLift, SolverError, dump_matrix
from .spaces import FEFunction

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    dt: float
    theta: float = 0.5

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if not 0 < self.dt <= self.T:
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T/dt = {n} is not an integer")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta}")

    @property
    def num_steps(self):
        return int(round(self.T / self.dt))

    def times(self, t0=0.0, steps=None):
        n = self.num_steps if steps is None else steps
        return t0 + self.dt * np.arange(n + 1)


@dataclass
class MpetState:
    """Time level plus one :class:`FEFunction` per field (``u, [p0,] p1..pA``)."""

    t: float
    names: list
    fields: list

    @classmethod
    def from_vector(cls, template, t, x):
        parts = template.split(np.array(x, dtype=float))
        return cls(float(t), list(template.names),
                   [FEFunction(V, c) for V, c in zip(template.spaces, parts)])

    def vector(self):
        return np.concatenate([f.coefficients for f in self.fields])

    def __getitem__(self, name):
        return self.fields[self.names.index(name)]

    def copy(self):
        return MpetState(self.t, list(self.names), [f.copy() for f in self.fields])


def compatible_initial_state(template, p_init, sources, bcs, t0=0.0):
    """Initial state with pressures interpolated and ``u`` (and ``p0``) solved.

    The momentum equation (and the total-pressure definition) are solved
    with the network pressures frozen at the interpolants of ``p_init``.
    Entries of ``p_init`` may be callables ``(x, t)``, numbers or
    :class:`FEFunction` objects.
    """
    from .spaces import interpolate

    tp = template.formulation == TOTAL_PRESSURE
    prm = template.params
    first = 2 if tp else 1
    ps = []
    for j in range(prm.A):
        Q = template.spaces[first + j]
        src = p_init[j] if p_init is not None else 0.0
        pj = src.coefficients.copy() if isinstance(src, FEFunction) else interpolate(Q, src, t0).coefficients
        name = template.names[first + j]
        pj[Q.constrained_dofs] = bcs.values(Q, name, t0)
        ps.append(pj)

    K = template.stiff.blocks
    F = template.load(sources, t0)
    o = template.offsets
    Fu = F[o[0]:o[1]]
    V = template.spaces[0]
    if tp:
        A_sub = sp.bmat([[K[0][0], K[0][1]], [K[1][0], K[1][1]]], format="csr")
        rhs = np.concatenate([Fu, -sum(K[1][2 + j] @ ps[j] for j in range(prm.A))])
        n_c = V.constrained_dofs
        vals = bcs.values(V, "u", t0)
    else:
        A_sub = K[0][0]
        rhs = Fu - sum(K[0][1 + j] @ ps[j] for j in range(prm.A))
        n_c = V.constrained_dofs
        vals = bcs.values(V, "u", t0)
    lift = DirichletLift(A_sub, n_c)
    full = np.zeros(A_sub.shape[0])
    full[n_c] = vals
    try:
        y = DirectSolver(lift.matrix).solve(lift.rhs(rhs, full[lift.constrained]))
    except SolverError as exc:
        raise SolverError(f"initial state: {exc}") from exc
    x = np.concatenate([y] + ps)
    return MpetState.from_vector(template, t0, x)


def affine_initial_state(template, sources, bcs, t0=0.0, check=True):
    """Start on the affine-in-time discrete trajectory.

    For loads and Dirichlet data affine in ``t`` the semi-discrete system
    ``M_t x' + K x = F(t)`` has the solution ``x(t) = a + (t - t0) b`` with
    ``K b = F'`` and ``K a = F(t0) - M_t b``.  Starting from ``a`` removes
    the discrete transient, so the theta scheme then reproduces this
    trajectory exactly for every step size.
    """
    K = template.stiff.matrix()
    Mt = template.mass_t.matrix()
    F0 = template.load(sources, t0)
    F1 = template.load(sources, t0 + 1.0)
    g0 = template.dirichlet_values(bcs, t0)
    g1 = template.dirichlet_values(bcs, t0 + 1.0)
    if check:
        F2 = template.load(sources, t0 + 2.0)
        g2 = template.dirichlet_values(bcs, t0 + 2.0)
        scale = max(np.abs(F1).max(), np.abs(F0).max(), 1.0)
        if np.abs(F2 - 2 * F1 + F0).max() > 1e-10 * scale or np.abs(g2 - 2 * g1 + g0).max() > 1e-10 * scale:
            raise ValueError("data is not affine in time; use compatible_initial_state")
    lift = DirichletLift(K, template.constrained())
    solver = DirectSolver(lift.matrix)
    slope = solver.solve(lift.rhs(F1 - F0, g1 - g0))
    start = solver.solve(lift.rhs(F0 - Mt @ slope, g0))
    return MpetState.from_vector(template, t0, start)


class Probe:
    """Point evaluator; locates the containing cell once."""

    def __init__(self, mesh, point, tol=1e-12):
        self.point = np.asarray(point, dtype=float)
        p = mesh.vertices[mesh.cells]
        J, det, inv = mesh.jacobians
        d = self.point - p[:, 0]
        xi = np.einsum("mij,mj->mi", inv, d)
        bary = np.column_stack([1 - xi.sum(axis=1), xi])
        inside = np.nonzero(np.all(bary >= -tol, axis=1))[0]
        if inside.size == 0:
            raise ValueError(f"probe point {tuple(self.point)} lies outside the mesh")
        self.cell = int(inside[0])
        self.bary = np.clip(bary[self.cell], 0.0, 1.0)

    def __call__(self, fn):
        return fn.eval_in_cell(self.cell, self.bary)


def probe_columns(names, probes):
    cols = []
    for k in range(len(probes)):
        cols.append(f"|u|@x{k}")
        cols += [f"{n}@x{k}" for n in names if n not in ("u", "p0")]
    return cols


def sample_probes(state, probes):
    row = []
    for pr in probes:
        row.append(float(np.linalg.norm(pr(state["u"]))))
        row += [pr(f) for n, f in zip(state.names, state.fields) if n not in ("u", "p0")]
    return row


@dataclass
class RunResult:
    state: MpetState
    times: np.ndarray
    probe_names: list
    probes: np.ndarray              # (nsteps + 1, ncols)
    energy: list                    # dicts per time level
    residuals: list = field(default_factory=list)

    def write_probes(self, path):
        write_series(path, self.times, self.probe_names, self.probes)

    def write_energy(self, path):
        keys = ["elastic", "storage", "compress", "total"]
        write_series(path, self.times, keys, np.array([[e[k] for k in keys] for e in self.energy]))


def write_series(path, times, names, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + list(names))
        for t, row in zip(times, data):
            w.writerow([f"{t:.10g}"] + [f"{v:.12e}" for v in row])


def run(template, sources, bcs, grid, initial=None, p_init=None, probes=(),
        callbacks=(), steps=None, matrix_dump=None):
    """Advance from ``initial`` (or a compatible state built from ``p_init``).

    Parameters
    ----------
    template : OperatorTemplate
        Must match ``grid.dt`` and ``grid.theta``.
    initial : MpetState, optional
        Starting state; its time is the start time.
    steps : int, optional
        Number of steps (default ``grid.num_steps``).
    callbacks : iterable of callables
        Called as ``cb(step, state)`` after every step with a copy of the state.

    Returns
    -------
    RunResult
    """
    if abs(template.dt - grid.dt) > 1e-15 or template.theta != grid.theta:
        raise ValueError("operator template does not match the time grid")
    if initial is None:
        initial = compatible_initial_state(template, p_init, sources, bcs)
    nsteps = grid.num_steps if steps is None else int(steps)
    t0 = initial.t
    probes = [p if isinstance(p, Probe) else Probe(template.spaces[0].mesh, p) for p in probes]

    constrained = template.constrained()
    lift = DirichletLift(template.lhs, constrained)
    if matrix_dump is not None:
        dump_matrix(lift.matrix, matrix_dump)
    solver = DirectSolver(lift.matrix)

    x = initial.vector()
    times = [t0]
    series = [sample_probes(initial, probes)]
    energies = [energy(template, x)]
    residuals = []
    F_prev = template.load(sources, t0)
    for n in range(1, nsteps + 1):
        t_prev = t0 + (n - 1) * grid.dt
        t_next = t0 + n * grid.dt
        F_next = template.load(sources, t_next)
        rhs = assemble_rhs(template, sources, t_prev, t_next, x, loads=(F_prev, F_next))
        rhs = lift.rhs(rhs, template.dirichlet_values(bcs, t_next))
        try:
            x = solver.solve(rhs)
        except SolverError as exc:
            raise SolverError(f"step {n} (t={t_next:g}): {exc}") from exc
        residuals.append(solver.last_residual)
        F_prev = F_next
        state = MpetState.from_vector(template, t_next, x)
        times.append(t_next)
        series.append(sample_probes(state, probes))
        energies.append(energy(template, x))
        for cb in callbacks:
            cb(n, state.copy())
    final = MpetState.from_vector(template, times[-1], x)
    log.debug("ran %d steps to t=%g, max residual %.2e", nsteps, times[-1],
              max(residuals) if residuals else 0.0)
    return RunResult(final, np.array(times), probe_columns(template.names, probes),
                     np.array(series, dtype=float).reshape(len(times), -1), energies, residuals)
