import numpy as np
import pytest

from mpet.core import STANDARD, TOTAL_PRESSURE, BoundaryConditions, SourceData, assemble_operator
from mpet.mesh import WHOLE, build_unit_square_mesh
from mpet.scenarios import MMHG, brain_scenario
from mpet.spaces import make_standard_spaces, make_taylor_hood_spaces
from mpet.timestepper import (MpetState, Probe, TimeGrid, affine_initial_state, compatible_initial_state,
                              run)
from mpet.verify import error_norms, example1_case


def _setup(formulation, n=4, dt=0.125):
    case = example1_case()
    m = build_unit_square_mesh(n)
    make = make_taylor_hood_spaces if formulation == TOTAL_PRESSURE else make_standard_spaces
    spaces = make(m, 2, case.bcs.spec())
    return case, assemble_operator(formulation, spaces, case.params, dt)


def test_time_grid():
    g = TimeGrid(0.5, 0.125)
    assert g.num_steps == 4
    assert abs(g.times()[-1] - 0.5) < 1e-14
    with pytest.raises(ValueError):
        TimeGrid(0.5, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.1, theta=0.4)


@pytest.mark.parametrize("formulation", [TOTAL_PRESSURE, STANDARD])
def test_example1_initial_state_vanishes(formulation):
    case, t = _setup(formulation)
    s = compatible_initial_state(t, case.p, case.sources, case.bcs)
    assert np.abs(s.vector()).max() <= 1e-10


def test_zero_data_stays_zero():
    case, t = _setup(TOTAL_PRESSURE)
    zero = SourceData(g=[None, None])
    res = run(t, zero, case.bcs, TimeGrid(0.5, 0.125), p_init=[0.0, 0.0], probes=[(0.3, 0.4)])
    assert np.all(res.state.vector() == 0.0)
    assert np.all(res.probes == 0.0)
    assert res.probes.shape == (5, 3)


def test_step_count_and_residuals():
    case, t = _setup(TOTAL_PRESSURE)
    res = run(t, case.sources, case.bcs, TimeGrid(0.5, 0.125), p_init=case.p)
    assert len(res.times) == 5 and abs(res.times[-1] - 0.5) < 1e-14
    assert len(res.residuals) == 4 and max(res.residuals) <= 1e-10
    assert len(res.energy) == 5


def test_mismatched_grid_rejected():
    case, t = _setup(TOTAL_PRESSURE)
    with pytest.raises(ValueError):
        run(t, case.sources, case.bcs, TimeGrid(0.5, 0.25), p_init=case.p)


@pytest.mark.parametrize("formulation", [TOTAL_PRESSURE, STANDARD])
def test_halving_dt_leaves_errors_unchanged(formulation):
    errs = []
    for dt in (0.125, 0.0625):
        case, t = _setup(formulation, dt=dt)
        res = run(t, case.sources, case.bcs, TimeGrid(0.5, dt), initial=affine_initial_state(t, case.sources, case.bcs))
        errs.append([error_norms(res.state[n], case.exact(n), 0.5)[0] for n in t.names])
    np.testing.assert_allclose(errs[0], errs[1], rtol=1e-8)


def test_affine_start_requires_affine_data():
    case, t = _setup(TOTAL_PRESSURE)
    src = SourceData(f=lambda x, s: s**2 * np.ones((2,) + x.shape[1:]), g=[None, None])
    with pytest.raises(ValueError, match="affine"):
        affine_initial_state(t, src, case.bcs)


def test_probe_evaluates_linear_field():
    case, t = _setup(TOTAL_PRESSURE)
    from mpet.spaces import interpolate
    Q = t.spaces[2]
    f = interpolate(Q, lambda x, s: 2 * x[0] - x[1])
    pr = Probe(Q.mesh, (0.37, 0.81))
    assert abs(pr(f) - (2 * 0.37 - 0.81)) < 1e-14
    with pytest.raises(ValueError, match="outside"):
        Probe(Q.mesh, (1.5, 0.5))


def test_state_round_trip():
    case, t = _setup(STANDARD)
    x = np.arange(t.size, dtype=float)
    s = MpetState.from_vector(t, 0.0, x)
    np.testing.assert_array_equal(s.vector(), x)
    assert s["p2"].coefficients[0] == t.offsets[2]


def test_brain_initial_state_uses_mmhg_pressures():
    spec = brain_scenario(resolution=3)
    m = spec.mesh()
    spaces = make_taylor_hood_spaces(m, 4, {k: sorted(v) for k, v in spec.dirichlet.items()})
    t = assemble_operator(TOTAL_PRESSURE, spaces, spec.params, spec.dt)
    s = compatible_initial_state(t, spec.p_init, spec.sources, spec.bcs)
    for j, v in enumerate((5.0, 70.0, 6.0, 38.0)):
        np.testing.assert_allclose(s[f"p{j + 1}"].coefficients, v * MMHG, rtol=1e-14)
    # ventricle traction moves the tissue, the skull stays clamped
    assert np.abs(s["u"].coefficients).max() > 0


def test_write_series(tmp_path):
    case, t = _setup(TOTAL_PRESSURE)
    res = run(t, case.sources, case.bcs, TimeGrid(0.5, 0.125), p_init=case.p, probes=[(0.5, 0.5)])
    res.write_probes(tmp_path / "p.csv")
    res.write_energy(tmp_path / "e.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,|u|@x0,p1@x0,p2@x0"
    assert len(lines) == 6
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "t,elastic,storage,compress,total"
