"""Manufactured solutions, projections, error norms and convergence studies."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import forms
from .core import (STANDARD, TOTAL_PRESSURE, BoundaryConditions, MpetParameters, SourceData,
                   assemble_operator, lame_from_E_nu)
from .elements import quadrature
from .linalg import DirectSolver, DirichletLift
from .mesh import WHOLE, build_unit_square_mesh, refine_uniform
from .spaces import FEFunction, interpolate, make_standard_spaces, make_taylor_hood_spaces
from .timestepper import TimeGrid, affine_initial_state, compatible_initial_state, run

log = logging.getLogger(__name__)

ERROR_DEGREE = 6
CS_STEP = 1e-30


# -- differentiation of closed-form fields ---------------------------------
def _grad_scalar(f, x, t):
    """Complex-step gradient of a scalar ``f(x, t)``; shape (2, ...)."""
    x = np.asarray(x, dtype=complex)
    out = []
    for d in range(2):
        xc = x.copy()
        xc[d] = xc[d] + 1j * CS_STEP
        out.append(np.imag(np.asarray(f(xc, t))) / CS_STEP)
    return np.stack(out, axis=0)


def _grad_vector(f, x, t):
    """Complex-step Jacobian of a 2-vector field; ``[comp, dir, ...]``."""
    return np.swapaxes(_grad_scalar(f, x, t), 0, 1)


# sixth-order central difference: offsets k*h with weights w_k (antisymmetric)
_FD_WEIGHTS = ((1, 3 / 4), (2, -3 / 20), (3, 1 / 60))


def _central_difference(fun, h):
    """``(fun(k h) - fun(-k h))`` combination approximating ``d fun / ds`` at 0.

    A high-order stencil lets the step stay large, which keeps the
    cancellation error small when ``fun`` carries a large factor such
    as the Lame parameter.
    """
    return sum(w * (fun(k * h) - fun(-k * h)) for k, w in _FD_WEIGHTS) / h


# -- manufactured case -----------------------------------------------------
@dataclass
class ManufacturedCase:
    """Closed-form exact solution with the sources that produce it."""

    name: str
    params: MpetParameters
    u: Callable
    p: list
    p0: Callable
    sources: SourceData
    T: float = 0.5
    dt: float = 0.125
    bcs: BoundaryConditions = None
    theta: float = 0.5
    start: str = "affine"   # or "interpolate"

    def __post_init__(self):
        if self.bcs is None:
            self.bcs = BoundaryConditions.homogeneous(self.params.A, u_tags=[WHOLE], p_tags=[WHOLE])

    def exact(self, name):
        if name == "u":
            return self.u
        if name == "p0":
            return self.p0
        return self.p[int(name[1:]) - 1]


def example1_case(nu=0.49999, c_value=1.0, lam_scale=1.0, E=1.0, lam=None, name=None):
    """Two-network smooth test case on the unit square with full Dirichlet data.

    ``lam`` replaces the Lamé parameter obtained from ``(E, nu)`` and
    ``lam_scale`` multiplies it; the exact displacement is built with the
    final value.
    """
    mu, lam_nu = lame_from_E_nu(E, nu)
    lam = (lam_nu if lam is None else float(lam)) * lam_scale
    params = MpetParameters(mu, lam, alpha=(1.0, 1.0), c=(c_value, c_value), K=(1.0, 1.0))
    return manufactured_case(params, name or f"example1(nu={nu}, c={c_value})")


def manufactured_case(params, name="example1"):
    """Example-1 type exact fields for arbitrary constant coefficients."""
    mu, lam = params.mu, params.lam
    k = 1.0 / (mu + lam)
    al = params.alpha
    A = params.A
    pi = np.pi
    idx = np.arange(1, A + 1)
    sum_aj = float(np.dot(al, idx))

    def s(x):
        return np.sin(pi * x[0]) * np.sin(pi * x[1])

    def u(x, t):
        x0, x1 = x[0], x[1]
        return t * np.stack([
            np.sin(2 * pi * x1) * (np.cos(2 * pi * x0) - 1.0) + k * s(x),
            np.sin(2 * pi * x0) * (1.0 - np.cos(2 * pi * x1)) + k * s(x),
        ])

    def make_p(j):
        return lambda x, t: -j * t * s(x)

    p = [make_p(j) for j in idx]

    def p0(x, t):
        return t * (lam * k * pi * np.sin(pi * (x[0] + x[1])) + sum_aj * s(x))

    def f(x, t):
        x0, x1 = x[0], x[1]
        lap0 = (-8 * pi**2 * np.sin(2 * pi * x1) * np.cos(2 * pi * x0)
                + 4 * pi**2 * np.sin(2 * pi * x1) - 2 * pi**2 * k * s(x))
        lap1 = (-4 * pi**2 * np.sin(2 * pi * x0)
                + 8 * pi**2 * np.sin(2 * pi * x0) * np.cos(2 * pi * x1) - 2 * pi**2 * k * s(x))
        graddiv = pi**2 * np.cos(pi * (x0 + x1))          # times k; (mu + lam) k = 1
        gp0 = pi * np.cos(pi * x0) * np.sin(pi * x1)
        gp1 = pi * np.sin(pi * x0) * np.cos(pi * x1)
        return t * np.stack([
            -mu * lap0 - graddiv - sum_aj * gp0,
            -mu * lap1 - graddiv - sum_aj * gp1,
        ])

    def make_g(j):
        a = al[j - 1]
        cj = params.c[j - 1]
        Kj = params.K[j - 1]
        exch = sum(params.xi[j - 1, i - 1] * (i - j) for i in idx if i != j)

        def g(x, t):
            return (-cj * j * s(x) + a * k * pi * np.sin(pi * (x[0] + x[1]))
                    - 2 * pi**2 * Kj * j * t * s(x) + exch * t * s(x))
        return g

    sources = SourceData(f=f, g=[make_g(j) for j in idx])
    return ManufacturedCase(name, params, u, p, p0, sources)


def residual_oracle(case, points, t, spatial_step=1e-2, temporal_step=1e-2):
    """Maximum pointwise residual of the MPET equations at ``points`` (2, N).

    Stresses and divergences are formed with complex-step first
    derivatives; the outer space and time derivatives use sixth-order
    centred differences with the given steps.
    """
    prm = case.params
    mu, lam = prm.mu, prm.lam
    x = np.asarray(points, dtype=float)
    h = spatial_step
    A = prm.A

    def stress(y):
        G = _grad_vector(case.u, y, t)               # [comp, dir, N]
        div = G[0, 0] + G[1, 1]
        sig = mu * (G + np.swapaxes(G, 0, 1))
        sig[0, 0] += lam * div
        sig[1, 1] += lam * div
        return sig

    def shifted(d):
        e = np.zeros_like(x)
        e[d] = 1.0
        return e

    divsig = np.zeros((2,) + x.shape[1:])
    for d in range(2):
        e = shifted(d)
        ds = _central_difference(lambda s: stress(x + s * e), h)  # [i, j, N]: d sigma_ij / d x_d
        divsig += ds[:, d]
    grad_p = sum(prm.alpha[j] * _grad_scalar(case.p[j], x, t) for j in range(A))
    f = np.asarray(case.sources.f(x, t)) if case.sources.f is not None else 0.0
    r_mom = np.abs(-divsig + grad_p - f).max()

    def div_u(tt):
        G = _grad_vector(case.u, x, tt)
        return G[0, 0] + G[1, 1]

    dt = temporal_step
    divu_dot = _central_difference(lambda s: div_u(t + s), dt)
    pv = [case.p[j](x, t) for j in range(A)]
    r_mass = 0.0
    for j in range(A):
        pdot = _central_difference(lambda s: case.p[j](x, t + s), dt)
        Kj = prm.K[j]
        lap = 0.0
        for d in range(2):
            e = shifted(d)
            gp = _central_difference(lambda s: _grad_scalar(case.p[j], x + s * e, t)[d], h)
            lap = lap + (Kj(x) if callable(Kj) else Kj) * gp
        S = sum(prm.xi[j, i] * (pv[j] - pv[i]) for i in range(A) if i != j)
        g = case.sources.g[j](x, t) if case.sources.g and case.sources.g[j] is not None else 0.0
        r = prm.c[j] * pdot + prm.alpha[j] * divu_dot - lap + S - g
        r_mass = max(r_mass, float(np.abs(r).max()))
    return float(max(r_mom, r_mass))


def oracle_gate(case, n=50, seed=0, T=None):
    """Residual at ``n`` random interior space-time samples."""
    rng = np.random.default_rng(seed)
    T = case.T if T is None else T
    pts = rng.uniform(0.02, 0.98, size=(2, n))
    ts = rng.uniform(0.02 * T, T, size=n)
    return max(residual_oracle(case, pts[:, i:i + 1], ts[i]) for i in range(n))


# -- norms ------------------------------------------------------------------
def _values_and_grads(obj, mesh, rule, t):
    """Values (C?, M, nq) and gradients (C?, 2, M, nq) of an FE function or callable."""
    if isinstance(obj, FEFunction):
        return obj.eval_at_quadrature(rule.points, grad=True)
    X = mesh.map_points(rule.points)
    v = np.asarray(obj(X, t), dtype=float)
    if v.ndim == X.ndim:      # vector valued
        return v, _grad_vector(obj, X, t)
    return np.broadcast_to(v, X.shape[1:]), _grad_scalar(obj, X, t)


def error_norms(numeric, exact, t=0.0):
    """``(L2, H1-seminorm, H1)`` norms of ``numeric - exact``.

    ``exact`` is a callable ``(x, t)``, an :class:`FEFunction` or ``0``.
    Gradients of callables come from complex-step differentiation.
    """
    mesh = numeric.space.mesh
    rule = quadrature(ERROR_DEGREE)
    dx = np.abs(mesh.jacobians[1])[:, None] * rule.weights[None, :]
    v, g = _values_and_grads(numeric, mesh, rule, t)
    if not (isinstance(exact, (int, float)) and exact == 0):
        ve, ge = _values_and_grads(exact, mesh, rule, t)
        v = v - ve
        g = g - ge
    l2 = float(np.sum(dx * v**2)) if np.ndim(v) == 2 else float(np.sum(dx * np.sum(v**2, axis=0)))
    semi = float(np.sum(dx * np.sum(g.reshape(-1, *dx.shape)**2, axis=0)))
    return np.sqrt(l2), np.sqrt(semi), np.sqrt(l2 + semi)


def weighted_norm(fields, weight=1.0, coeffs=None, derivative=None, t=0.0):
    """``||v||_w = sqrt(int w v . v)``.

    ``fields`` is one FE function or a list combined linearly with
    ``coeffs``; ``derivative`` is ``None``, ``"grad"`` or ``"eps"`` (the
    symmetric gradient of a vector field).  ``weight`` is a number or a
    callable ``w(x)``.
    """
    if isinstance(fields, FEFunction):
        fields = [fields]
    coeffs = np.ones(len(fields)) if coeffs is None else np.asarray(coeffs, dtype=float)
    mesh = fields[0].space.mesh
    rule = quadrature(ERROR_DEGREE)
    dx = np.abs(mesh.jacobians[1])[:, None] * rule.weights[None, :]
    w = weight(mesh.map_points(rule.points)) if callable(weight) else float(weight)
    if np.any(np.asarray(w) < 0):
        raise ValueError("weight must be non-negative")
    total = 0.0
    for fn, a in zip(fields, coeffs):
        v, g = fn.eval_at_quadrature(rule.points, grad=True)
        if derivative is None:
            q = v
        elif derivative == "grad":
            q = g
        elif derivative == "eps":
            q = 0.5 * (g + np.swapaxes(g, 0, 1))
        else:
            raise ValueError(f"unknown derivative {derivative!r}")
        total = total + a * q
    sq = np.asarray(total) ** 2
    sq = sq.reshape(-1, *dx.shape).sum(axis=0)
    return float(np.sqrt(np.sum(w * dx * sq)))


# -- projections -------------------------------------------------------------
def _mean_constraint(Q):
    return forms.load_vector(Q, lambda x, t: np.ones(x.shape[1:]))


def _is_pure_dirichlet(V):
    return V.mesh.tags <= V.constrained_tags


def stokes_interpolant(u_exact, p0_exact, V, Q0, mu, t=0.0, return_residual=False):
    """Discrete Stokes-type projection ``(Pi_V u, Pi_Q0 p0)``.

    Solves ``(2 mu eps(Pi u), eps(v)) + (Pi p0, div v) = (2 mu eps(u), eps(v)) + (p0, div v)``
    and ``(div Pi u, q) = (div u, q)``.  When ``u`` is constrained on the
    whole boundary the pressure mean is fixed to that of ``p0``.
    """
    mesh = V.mesh
    rule = quadrature(ERROR_DEGREE)
    dx = np.abs(mesh.jacobians[1])[:, None] * rule.weights[None, :]
    if isinstance(u_exact, FEFunction):
        uv, G = u_exact.eval_at_quadrature(rule.points, grad=True)   # G [comp, dir, M, nq]
    else:
        X = mesh.map_points(rule.points)
        G = _grad_vector(u_exact, X, t)
    if isinstance(p0_exact, FEFunction):
        pv = p0_exact.eval_at_quadrature(rule.points)
    else:
        pv = np.broadcast_to(np.asarray(p0_exact(mesh.map_points(rule.points), t), dtype=float), dx.shape)
    sig = mu * (G + np.swapaxes(G, 0, 1))
    sig = sig + pv * np.eye(2)[:, :, None, None]
    _, pg = V.tabulate(rule.points)
    local = np.einsum("mq,cdmq,mqad->mca", dx, sig, pg).reshape(mesh.num_cells, -1)
    b_u = np.zeros(V.ndofs)
    np.add.at(b_u, V.dofmap.ravel(), local.ravel())
    divu = G[0, 0] + G[1, 1]
    psi = forms.eval_basis(Q0.element, rule.points)[0]
    loc_q = np.einsum("mq,mq,qa->ma", dx, divu, psi)
    b_q = np.zeros(Q0.ndofs)
    np.add.at(b_q, Q0.dofmap.ravel(), loc_q.ravel())

    Aee = forms.elasticity_matrix(V, mu)
    B = forms.divergence_matrix(Q0, V)
    blocks = [[Aee, B.T], [B, None]]
    rhs = [b_u, b_q]
    pure = _is_pure_dirichlet(V)
    if pure:
        m = _mean_constraint(Q0)
        mean_p0 = float(np.sum(dx * pv))
        blocks = [[Aee, B.T, None], [B, None, sp.csr_matrix(m[:, None])],
                  [None, sp.csr_matrix(m[None, :]), None]]
        rhs.append(np.array([mean_p0]))
    K = sp.bmat(blocks, format="csr")
    b = np.concatenate(rhs)
    c = V.constrained_dofs
    full = np.zeros(K.shape[0])
    if isinstance(u_exact, FEFunction):
        full[c] = u_exact.coefficients[c]
    else:
        full[c] = interpolate(V, u_exact, t).coefficients[c]
    lift = DirichletLift(K, c)
    solver = DirectSolver(lift.matrix)
    y = solver.solve(lift.rhs(b, full[lift.constrained]))
    Pu = FEFunction(V, y[:V.ndofs])
    Pp = FEFunction(Q0, y[V.ndofs:V.ndofs + Q0.ndofs])
    if return_residual:
        return Pu, Pp, solver.last_residual
    return Pu, Pp


def elliptic_projection(p_exact, K, Q, t=0.0):
    """Weighted elliptic projection: ``(K grad Pi p, grad q) = (K grad p, grad q)``.

    Dirichlet dofs of ``Q`` take the nodal values of ``p``; without
    Dirichlet dofs the mean of ``p`` is preserved.
    """
    mesh = Q.mesh
    rule = quadrature(ERROR_DEGREE)
    dx = np.abs(mesh.jacobians[1])[:, None] * rule.weights[None, :]
    X = mesh.map_points(rule.points)
    Kq = K(X) if callable(K) else K
    if isinstance(p_exact, FEFunction):
        pv, gp = p_exact.eval_at_quadrature(rule.points, grad=True)
        nodal = p_exact.coefficients
    else:
        pv = np.broadcast_to(np.asarray(p_exact(X, t), dtype=float), dx.shape)
        gp = _grad_scalar(p_exact, X, t)
        nodal = interpolate(Q, p_exact, t).coefficients
    _, pg = Q.tabulate(rule.points)
    local = np.einsum("mq,dmq,mqad->ma", dx * Kq, gp, pg)
    b = np.zeros(Q.ndofs)
    np.add.at(b, Q.dofmap.ravel(), local.ravel())
    S = forms.stiffness_matrix(Q, weight=K)
    c = Q.constrained_dofs
    if c.size == 0:
        m = _mean_constraint(Q)
        S = sp.bmat([[S, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]], format="csr")
        b = np.concatenate([b, [float(np.sum(dx * pv))]])
        y = DirectSolver(S).solve(b)[:Q.ndofs]
        return FEFunction(Q, y)
    lift = DirichletLift(S, c)
    full = np.zeros(Q.ndofs)
    full[c] = nodal[c]
    y = DirectSolver(lift.matrix).solve(lift.rhs(b, full[lift.constrained]))
    return FEFunction(Q, y)


# -- convergence studies ----------------------------------------------------
H_LABELS = ["H", "H/2", "H/4", "H/8", "H/16", "H/32", "H/64"]


@dataclass
class LevelRecord:
    label: str
    n: int
    h: float
    ndofs: int
    errors: dict
    max_residual: float = 0.0
    p0_ratio: float = float("nan")


@dataclass
class ConvergenceReport:
    formulation: str
    case: str
    levels: list = field(default_factory=list)
    mesh_diagonal: str = "right"
    dt: float = 0.0

    @property
    def keys(self):
        return list(self.levels[0].errors) if self.levels else []

    def errors(self, key):
        return np.array([lv.errors[key] for lv in self.levels])

    def rates(self, key):
        e = self.errors(key)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log2(e[:-1] / e[1:])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "n", "ndofs"] + [x for k in self.keys for x in (k, f"rate[{k}]")])
        for i, lv in enumerate(self.levels):
            row = [lv.label, lv.n, lv.ndofs]
            for k in self.keys:
                r = self.rates(k)[i - 1] if i > 0 else ""
                row += [f"{lv.errors[k]:.6e}", f"{r:.4f}" if i > 0 else ""]
            w.writerow(row)
        return buf.getvalue()

    def to_markdown(self, groups=None, optimal=None):
        """Aligned markdown tables; ``groups`` lists tuples of error keys per table."""
        groups = groups or [tuple(self.keys[i:i + 2]) for i in range(0, len(self.keys), 2)]
        optimal = optimal or {}
        out = [f"## {self.case} ({self.formulation}, dt={self.dt:g}, diagonal={self.mesh_diagonal})", ""]
        for keys in groups:
            header = ["h"] + [x for k in keys for x in (_label(k), "Rate")]
            rows = []
            for i, lv in enumerate(self.levels):
                row = [lv.label]
                for k in keys:
                    row.append(f"{lv.errors[k]:.2e}")
                    row.append(f"{self.rates(k)[i - 1]:.2f}" if i > 0 else "")
                rows.append(row)
            if any(k in optimal for k in keys):
                rows.append(["Optimal"] + [x for k in keys
                                           for x in ("", f"{optimal[k]:g}" if k in optimal else "")])
            widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
            fmt = lambda r: "| " + " | ".join(s.ljust(wd) for s, wd in zip(r, widths)) + " |"
            out.append(fmt(header))
            out.append("|" + "|".join("-" * (wd + 2) for wd in widths) + "|")
            out += [fmt(r) for r in rows]
            out.append("")
        return "\n".join(out)


def _label(key):
    field_, norm = key.split(":")
    if field_.startswith("Pi"):
        return f"||Pi {field_[2:]} - {field_[2:]}_h||_{norm}"
    return f"||{field_} - {field_}_h||_{norm}"


def level_meshes(levels, n0=4, diagonal="right"):
    """Nested uniform refinements of the ``n0 x n0`` unit-square mesh."""
    if isinstance(levels, int):
        levels = list(range(levels))
    levels = sorted(int(k) for k in levels)
    meshes = []
    m = build_unit_square_mesh(n0, diagonal=diagonal)
    k = 0
    for target in levels:
        while k < target:
            m = refine_uniform(m)
            k += 1
        meshes.append((target, m))
    return meshes


def initial_state(case, template, start=None):
    """Initial state for ``case``: ``"affine"`` (discrete affine trajectory) or ``"interpolate"``."""
    start = case.start if start is None else start
    if start == "affine":
        return affine_initial_state(template, case.sources, case.bcs)
    if start == "interpolate":
        return compatible_initial_state(template, case.p, case.sources, case.bcs)
    raise ValueError(f"unknown start {start!r}")


def solve_level(case, formulation, mesh, dt=None, theta=None, T=None, callbacks=(), start=None):
    """Run the transient manufactured problem on one mesh; returns (template, RunResult)."""
    dt = case.dt if dt is None else dt
    theta = case.theta if theta is None else theta
    T = case.T if T is None else T
    make = make_taylor_hood_spaces if formulation == TOTAL_PRESSURE else make_standard_spaces
    spaces = make(mesh, case.params.A, case.bcs.spec())
    tmpl = assemble_operator(formulation, spaces, case.params, dt, theta)
    cbs = [cb(tmpl) for cb in callbacks]
    res = run(tmpl, case.sources, case.bcs, TimeGrid(T, dt, theta),
              initial=initial_state(case, tmpl, start), callbacks=cbs)
    return tmpl, res


def p0_control_ratio(template, state):
    """``||p0_h|| / ||eps(u_h)||_{2 mu}`` (total-pressure scheme only)."""
    den = weighted_norm(state["u"], 2 * template.params.mu, derivative="eps")
    if den == 0.0:
        return float("nan")
    return weighted_norm(state["p0"]) / den


def convergence_study(case, formulation=TOTAL_PRESSURE, levels=5, dt=None,
                      discretization_errors=False, diagonal="right", n0=4, start=None):
    """Errors at the final time on nested meshes and rates between adjacent levels.

    Error keys have the form ``"field:norm"`` with norm ``L2`` or ``H1``
    (full H1 norm).  With ``discretization_errors`` the distances
    ``||Pi p_j - p_j,h||`` to the elliptic projections and
    ``||Pi u - u_h||_H1`` to the Stokes projection are added as
    ``"Pip1:L2"`` etc.  ``start`` overrides ``case.start``.
    """
    levels = list(range(levels)) if isinstance(levels, int) else list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least two levels")
    dt = case.dt if dt is None else dt
    T = case.T
    report = ConvergenceReport(formulation, case.name, mesh_diagonal=diagonal, dt=dt)
    A = case.params.A
    tp = formulation == TOTAL_PRESSURE
    for k, mesh in level_meshes(levels, n0=n0, diagonal=diagonal):
        ratios = []
        cbs = []
        if tp:
            cbs.append(lambda tmpl, _r=ratios: (lambda step, state: _r.append(p0_control_ratio(tmpl, state))))
        tmpl, res = solve_level(case, formulation, mesh, dt=dt, callbacks=cbs, start=start)
        st = res.state
        errs = {}
        l2, _, h1 = error_norms(st["u"], case.u, T)
        errs["u:L2"], errs["u:H1"] = l2, h1
        for j in range(1, A + 1):
            l2, _, h1 = error_norms(st[f"p{j}"], case.p[j - 1], T)
            errs[f"p{j}:L2"], errs[f"p{j}:H1"] = l2, h1
        if tp:
            errs["p0:L2"] = error_norms(st["p0"], case.p0, T)[0]
        if discretization_errors:
            for j in range(1, A + 1):
                Q = st[f"p{j}"].space
                Pp = elliptic_projection(case.p[j - 1], case.params.K[j - 1], Q, T)
                l2, _, h1 = error_norms(st[f"p{j}"], Pp, T)
                errs[f"Pip{j}:L2"], errs[f"Pip{j}:H1"] = l2, h1
            if tp:
                Pu, Pp0 = stokes_interpolant(case.u, case.p0, st["u"].space, st["p0"].space,
                                             case.params.mu, T)
                errs["Piu:H1"] = error_norms(st["u"], Pu, T)[2]
                errs["Pip0:L2"] = error_norms(st["p0"], Pp0, T)[0]
        rec = LevelRecord(H_LABELS[k] if k < len(H_LABELS) else f"H/{2**k}", n0 * 2**k, mesh.h,
                          tmpl.size, errs, max(res.residuals) if res.residuals else 0.0,
                          float(np.nanmax(ratios)) if ratios and np.any(np.isfinite(ratios)) else float("nan"))
        log.info("%s %s level %s: %s", case.name, formulation, rec.label,
                 ", ".join(f"{kk}={vv:.3e}" for kk, vv in errs.items()))
        report.levels.append(rec)
    return report


# -- structural properties ----------------------------------------------------
def energy_study(formulation, params, n=8, T=1.0, dt=0.0625, theta=0.5, seed=0):
    """Zero-data run from random nodal network pressures; returns the energy trace.

    All fields are clamped to zero on the boundary, so the random
    pressures are admissible when their boundary values are zeroed.
    """
    rng = np.random.default_rng(seed)
    mesh = build_unit_square_mesh(n)
    bcs = BoundaryConditions.homogeneous(params.A, u_tags=[WHOLE], p_tags=[WHOLE])
    make = make_taylor_hood_spaces if formulation == TOTAL_PRESSURE else make_standard_spaces
    spaces = make(mesh, params.A, bcs.spec())
    tmpl = assemble_operator(formulation, spaces, params, dt, theta)
    Q = spaces[-1]
    p_init = []
    for _ in range(params.A):
        c = rng.standard_normal(Q.ndofs)
        c[Q.constrained_dofs] = 0.0
        p_init.append(FEFunction(Q, c))
    sources = SourceData(g=[None] * params.A)
    res = run(tmpl, sources, bcs, TimeGrid(T, dt, theta), p_init=p_init)
    return np.array([e["total"] for e in res.energy]), res


def max_energy_increase(trace):
    """Largest step-to-step increase of an energy trace (<= 0 when dissipative)."""
    trace = np.asarray(trace, dtype=float)
    return float(np.max(np.diff(trace))) if trace.size > 1 else 0.0


def static_displacement(mesh, mu, lam, f, stokes=False):
    """Static total-pressure solve ``-div(2 mu eps(u)) + grad p0 = f``, ``div u - p0 / lam = 0``.

    With ``stokes=True`` the ``1/lam`` term is dropped (incompressible
    limit) and the pressure mean is fixed to zero.  ``u`` vanishes on the
    whole boundary.
    """
    V, Q0 = make_taylor_hood_spaces(mesh, 1, {"u": [WHOLE]})[:2]
    Aee = forms.elasticity_matrix(V, mu)
    B = forms.divergence_matrix(Q0, V)
    bu = forms.load_vector(V, f, 0.0)
    if stokes:
        m = _mean_constraint(Q0)
        K = sp.bmat([[Aee, B.T, None], [B, None, sp.csr_matrix(m[:, None])],
                     [None, sp.csr_matrix(m[None, :]), None]], format="csr")
        b = np.concatenate([bu, np.zeros(Q0.ndofs + 1)])
    else:
        K = sp.bmat([[Aee, B.T], [B, -forms.mass_matrix(Q0) / lam]], format="csr")
        b = np.concatenate([bu, np.zeros(Q0.ndofs)])
    lift = DirichletLift(K, V.constrained_dofs)
    solver = DirectSolver(lift.matrix)
    y = solver.solve(lift.rhs(b, 0.0))
    return FEFunction(V, y[:V.ndofs]), solver.last_residual


def stokes_limit_study(lams=(1e3, 1e5, 1e7), n=8, mu=None, f=None):
    """``||u_lam - u_Stokes||_H1`` for each ``lam`` (should decrease monotonically)."""
    case = example1_case()
    mu = case.params.mu if mu is None else mu
    f = (lambda x, t: case.sources.f(x, 1.0)) if f is None else f
    mesh = build_unit_square_mesh(n)
    uS, _ = static_displacement(mesh, mu, np.inf, f, stokes=True)
    out = []
    for lam in lams:
        u, _ = static_displacement(mesh, mu, lam, f)
        out.append(error_norms(u, uS)[2])
    return np.array(out)
