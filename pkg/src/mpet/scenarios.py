"""Four-network brain-tissue scenario on a two-dimensional annulus.

Units are millimetres, pascals and seconds.  The outer circle plays the
skull (clamped displacement), the inner circle the ventricles (prescribed
total normal stress).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import STANDARD, TOTAL_PRESSURE, BoundaryConditions, MpetParameters, SourceData, assemble_operator
from .mesh import SKULL, VENTRICLE, build_annulus_mesh, read_mesh
from .spaces import make_standard_spaces, make_taylor_hood_spaces
from .timestepper import Probe, TimeGrid, run

log = logging.getLogger(__name__)

MMHG = 133.32          # Pa per mmHg
DELTA = 0.012          # transmantle pulse excess at the ventricles (mmHg)


def _const(v):
    return lambda x, t: np.full(np.shape(x)[1:], v)


def _pulse(base, amp):
    return lambda x, t: np.full(np.shape(x)[1:], MMHG * (base + amp * np.sin(2 * np.pi * t)))


@dataclass
class ScenarioSpec:
    """Geometry, coefficients, boundary program and sampling of a scenario run.

    ``dirichlet`` maps a field name to ``{tag: value(x, t)}``; any tag not
    listed for a pressure is a zero-flux boundary.  ``normal_stress`` maps
    tags to ``s(x, t)`` for the traction ``s n``.
    """

    params: MpetParameters
    dirichlet: dict
    normal_stress: dict
    p_init: list
    r_inner: float = 30.0
    r_outer: float = 100.0
    resolution: int = 10
    mesh_file: str | None = None
    T: float = 3.0
    dt: float = 0.0125
    theta: float = 0.5
    probes: list = field(default_factory=list)
    probe_labels: list = field(default_factory=list)
    drivers: dict = field(default_factory=dict)     # field -> (low, high) Pa

    def __post_init__(self):
        for name, tags in self.dirichlet.items():
            clash = set(tags) & set(self.normal_stress) if name == "u" else set()
            if clash:
                raise ValueError(f"tags {sorted(clash)} carry both a displacement and a stress condition")

    def mesh(self):
        if self.mesh_file:
            return read_mesh(self.mesh_file)
        return build_annulus_mesh(self.r_inner, self.r_outer, self.resolution)

    @property
    def bcs(self):
        return BoundaryConditions(self.dirichlet)

    @property
    def sources(self):
        return SourceData(f=None, g=[None] * self.params.A, normal_stress=dict(self.normal_stress))


def brain_parameters():
    """Four-network coefficients: CSF/ISF, arterial, venous, capillary."""
    E, nu = 1500.0, 0.4999
    xi = np.zeros((4, 4))
    for a, b in [(2, 4), (4, 3), (4, 1), (1, 3)]:
        xi[a - 1, b - 1] = xi[b - 1, a - 1] = 1.0e-6
    return MpetParameters.from_E_nu(
        E, nu,
        alpha=(0.49, 0.25, 0.01, 0.25),
        c=(3.9e-4, 2.9e-4, 1.5e-5, 2.9e-4),
        K=(1.57e-5, 3.75e-2, 3.75e-2, 3.75e-2),
        xi=xi,
    )


def brain_scenario(resolution=10, T=3.0, dt=0.0125):
    """Pulsating CSF and arterial pressures on the annulus ``30 < r < 100`` (mm)."""
    params = brain_parameters()
    p1_skull = _pulse(5.0, 2.0)
    p1_vent = _pulse(5.0, 2.0 + DELTA)
    p2_skull = _pulse(70.0, 10.0)
    p3 = _const(6.0 * MMHG)
    p4_ref = 0.5 * (70.0 + 6.0)
    dirichlet = {
        "u": {SKULL: 0.0},
        "p1": {SKULL: p1_skull, VENTRICLE: p1_vent},
        "p2": {SKULL: p2_skull},
        "p3": {SKULL: p3, VENTRICLE: p3},
    }
    al = params.alpha

    def stress(x, t):
        # s = -sum_j alpha_j p~_j with the reference pressures of each network
        pt = (p1_vent(x, t), p2_skull(x, t), p3(x, t), np.full(np.shape(x)[1:], MMHG * p4_ref))
        return -sum(a * p for a, p in zip(al, pt))

    r_mid = 65.0
    radii = [30.5, r_mid, 99.5]
    probes, labels = [], []
    for r, lab in zip(radii, ["ventricle", "mid", "skull"]):
        probes.append((r / np.sqrt(2.0), r / np.sqrt(2.0)))
        labels.append(lab)
    drivers = {
        "p1": (MMHG * (5.0 - 2.0 - DELTA), MMHG * (5.0 + 2.0 + DELTA)),
        "p2": (MMHG * 60.0, MMHG * 80.0),
        "p3": (MMHG * 6.0, MMHG * 6.0),
        "p4": (MMHG * p4_ref, MMHG * p4_ref),
    }
    return ScenarioSpec(
        params=params,
        dirichlet=dirichlet,
        normal_stress={VENTRICLE: stress},
        p_init=[MMHG * 5.0, MMHG * 70.0, MMHG * 6.0, MMHG * p4_ref],
        resolution=resolution, T=T, dt=dt,
        probes=probes, probe_labels=labels, drivers=drivers,
    )


@dataclass
class ScenarioResult:
    formulation: str
    spec: ScenarioSpec
    run: object                 # RunResult
    skull_displacement: float   # max |u| over skull nodes at every step
    cycles: list                # per-cycle {column: (min, max, mean)}

    def series(self, column):
        return self.run.probes[:, self.run.probe_names.index(column)]

    def columns(self):
        return list(self.run.probe_names)


def cycle_summary(times, data, names, period=1.0):
    """min, max and mean of each column over each full period ``(k, k+1]``."""
    out = []
    ncyc = int(round(times[-1] / period))
    for k in range(ncyc):
        sel = (times > k * period - 1e-12) & (times <= (k + 1) * period + 1e-12)
        out.append({n: (float(data[sel, i].min()), float(data[sel, i].max()), float(data[sel, i].mean()))
                    for i, n in enumerate(names)})
    return out


def cycle_difference(result, a=1, b=2, period=1.0):
    """Relative max difference between cycles ``a`` and ``b`` (0-based) for every column."""
    t = result.run.times
    steps = int(round(period / result.spec.dt))
    ia = np.arange(a * steps + 1, (a + 1) * steps + 1)
    ib = ia + (b - a) * steps
    if ib[-1] >= t.size:
        raise ValueError("run too short for the requested cycles")
    out = {}
    for i, n in enumerate(result.run.probe_names):
        sa, sb = result.run.probes[ia, i], result.run.probes[ib, i]
        scale = np.abs(sb).max()
        out[n] = float(np.abs(sa - sb).max() / scale) if scale > 0 else 0.0
    return out


def run_scenario(spec, formulation=TOTAL_PRESSURE, steps=None, matrix_dump=None):
    """Run one formulation on the scenario; returns :class:`ScenarioResult`."""
    mesh = spec.mesh()
    tags = {name: sorted(v) for name, v in spec.dirichlet.items()}
    make = make_taylor_hood_spaces if formulation == TOTAL_PRESSURE else make_standard_spaces
    spaces = make(mesh, spec.params.A, tags)
    tmpl = assemble_operator(formulation, spaces, spec.params, spec.dt, spec.theta)
    V = spaces[0]
    skull_dofs = V.node_dofs(V.boundary_nodes(SKULL))
    peak = [0.0]

    def watch(step, state):
        peak[0] = max(peak[0], float(np.abs(state["u"].coefficients[skull_dofs]).max()))

    probes = [Probe(mesh, p) for p in spec.probes]
    res = run(tmpl, spec.sources, spec.bcs, TimeGrid(spec.T, spec.dt, spec.theta),
              p_init=spec.p_init, probes=probes, callbacks=[watch], steps=steps,
              matrix_dump=matrix_dump)
    names = [_relabel(n, spec.probe_labels) for n in res.probe_names]
    res.probe_names = names
    cycles = cycle_summary(res.times, res.probes, names) if res.times[-1] >= 1.0 - 1e-12 else []
    log.info("%s: %d steps, max residual %.2e", formulation, len(res.times) - 1,
             max(res.residuals) if res.residuals else 0.0)
    return ScenarioResult(formulation, spec, res, peak[0], cycles)


def _relabel(column, labels):
    name, _, where = column.partition("@x")
    k = int(where)
    return f"{name}@{labels[k]}" if k < len(labels) else column


def pressure_bound_violations(result, tol=1e-9):
    """Probe pressures after the first cycle outside their widened driver range.

    The range of network ``j`` is the hull of its own driving values and
    those of every network it exchanges fluid with.  Returns a list of
    ``(column, value, low, high)``.
    """
    spec = result.spec
    xi = spec.params.xi
    A = spec.params.A
    t = result.run.times
    after = t > 1.0 + 1e-12
    bad = []
    for j in range(A):
        group = [j] + [i for i in range(A) if i != j and (xi[j, i] > 0 or xi[i, j] > 0)]
        lo = min(spec.drivers[f"p{i + 1}"][0] for i in group)
        hi = max(spec.drivers[f"p{i + 1}"][1] for i in group)
        for col in result.run.probe_names:
            if col.startswith(f"p{j + 1}@"):
                s = result.series(col)[after]
                slack = tol * max(abs(lo), abs(hi))
                if s.size and (s.min() < lo - slack or s.max() > hi + slack):
                    v = s.min() if s.min() < lo - slack else s.max()
                    bad.append((col, float(v), lo, hi))
    return bad


def compare_formulations(results):
    """Side-by-side probe statistics for a total-pressure and a standard run.

    Returns rows ``(column, max_tp, max_std, ratio_or_reldiff)``: the
    displacement rows give the ratio of peak magnitudes, the pressure rows
    the relative max difference of the series.
    """
    by = {r.formulation: r for r in results}
    tp, st = by[TOTAL_PRESSURE], by[STANDARD]
    rows = []
    for col in tp.columns():
        a, b = tp.series(col), st.series(col)
        if col.startswith("|u|"):
            ma, mb = float(np.abs(a).max()), float(np.abs(b).max())
            rows.append((col, ma, mb, ma / mb if mb > 0 else float("inf")))
        else:
            scale = float(np.abs(a).max())
            rows.append((col, float(np.abs(a).max()), float(np.abs(b).max()),
                         float(np.abs(a - b).max() / scale) if scale > 0 else 0.0))
    return rows


def comparison_markdown(rows):
    lines = ["| probe | total-pressure max | standard max | ratio / rel. diff |",
             "|-------|--------------------|--------------|-------------------|"]
    for col, a, b, r in rows:
        lines.append(f"| {col} | {a:.6e} | {b:.6e} | {r:.6g} |")
    return "\n".join(lines) + "\n"
