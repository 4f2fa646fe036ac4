import numpy as np
import pytest

from mpet.core import STANDARD, TOTAL_PRESSURE, MpetParameters, SourceData
from mpet.mesh import WHOLE, build_unit_square_mesh, refine_uniform
from mpet.spaces import FEFunction, FESpace, interpolate, make_taylor_hood_spaces
from mpet.verify import (ConvergenceReport, LevelRecord, ManufacturedCase, convergence_study,
                         elliptic_projection, energy_study, error_norms, example1_case,
                         manufactured_case, max_energy_increase, oracle_gate, residual_oracle,
                         stokes_interpolant, stokes_limit_study, weighted_norm)
from mpet import forms


# -- manufactured data ---------------------------------------------------------
@pytest.mark.parametrize("kw", [{}, {"nu": 0.4}, {"c_value": 0.0}])
def test_sources_pass_the_oracle(kw):
    case = example1_case(**kw)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.02, 0.98, size=(2, 50))
    assert residual_oracle(case, pts, 0.3) < 1e-5


def test_oracle_random_space_time_gate():
    assert oracle_gate(example1_case()) < 1e-5


def test_oracle_with_three_networks_and_exchange():
    xi = np.array([[0, 0.4, 0.1], [0.4, 0, 2.0], [0.1, 2.0, 0]])
    prm = MpetParameters(0.8, 3.0, alpha=(0.3, 0.6, 0.9), c=(0.5, 0.0, 2.0), K=(1.0, 0.2, 3.0), xi=xi)
    assert oracle_gate(manufactured_case(prm)) < 1e-5


def test_oracle_is_zero_for_zero_fields():
    zero = lambda x, t: np.zeros(np.shape(x)[1:])
    zvec = lambda x, t: np.zeros((2,) + np.shape(x)[1:])
    case = ManufacturedCase("zero", example1_case().params, zvec, [zero, zero], zero,
                            SourceData(f=zvec, g=[zero, zero]))
    assert residual_oracle(case, np.array([[0.3, 0.6], [0.2, 0.9]]), 0.4) == 0.0


def test_oracle_detects_corrupted_source():
    case = example1_case()
    g1 = case.sources.g[0]
    case.sources.g[0] = lambda x, t: g1(x, t) + 1.0
    r = residual_oracle(case, np.array([[0.3], [0.6]]), 0.3)
    assert abs(r - 1.0) < 1e-5


def test_exact_fields_vanish_at_time_zero():
    case = example1_case()
    x = np.random.default_rng(0).random((2, 20))
    assert np.all(case.u(x, 0.0) == 0) and np.all(case.p0(x, 0.0) == 0)
    assert all(np.all(p(x, 0.0) == 0) for p in case.p)


def test_exact_total_pressure_definition():
    case = example1_case()
    prm = case.params
    x = np.random.default_rng(1).random((2, 10))
    from mpet.verify import _grad_vector
    G = _grad_vector(case.u, x, 0.3)
    div = G[0, 0] + G[1, 1]
    expected = prm.lam * div - sum(a * p(x, 0.3) for a, p in zip(prm.alpha, case.p))
    np.testing.assert_allclose(case.p0(x, 0.3), expected, rtol=1e-9, atol=1e-9)


# -- norms ------------------------------------------------------------------------
def test_error_norms_zero_for_own_interpolant(mesh4):
    Q = FESpace(mesh4, 1)
    f = lambda x, t: 1.0 + 2 * x[0] - x[1]
    e = error_norms(interpolate(Q, f), f)
    assert max(e) < 1e-13


def test_l2_norm_of_sine_product():
    m = refine_uniform(refine_uniform(build_unit_square_mesh(4)))
    Q = FESpace(m, 2)
    fn = lambda x, t: np.sin(np.pi * x[0]) * np.sin(np.pi * x[1])
    l2, semi, h1 = error_norms(interpolate(Q, fn), 0)
    assert abs(l2 - 0.5) < 1e-4
    assert abs(semi - np.pi / np.sqrt(2)) < 1e-2
    assert abs(h1**2 - l2**2 - semi**2) < 1e-12


def test_weighted_norms(mesh4):
    Q = FESpace(mesh4, 1)
    one = interpolate(Q, 1.0)
    assert abs(weighted_norm([one, one], weight=1 / 4) - 1.0) < 1e-14
    f = interpolate(Q, lambda x, t: x[0] * x[1])
    assert abs(weighted_norm(f) - error_norms(f, 0)[0]) < 1e-14
    assert weighted_norm(f, weight=0.0) == 0.0
    with pytest.raises(ValueError):
        weighted_norm(f, weight=-1.0)


def test_symmetric_gradient_norm_of_shear(mesh4):
    V = FESpace(mesh4, 2, 2)
    u = interpolate(V, lambda x, t: np.stack([x[1], 0 * x[0]]))   # eps = [[0, 1/2], [1/2, 0]]
    assert abs(weighted_norm(u, 2.0, derivative="eps") - 1.0) < 1e-13
    assert abs(weighted_norm(u, derivative="grad") - 1.0) < 1e-13


# -- projections -------------------------------------------------------------------
def _th(n=4):
    m = build_unit_square_mesh(n)
    return make_taylor_hood_spaces(m, 1, {"u": [WHOLE]})[:2]


def test_stokes_interpolant_reproduces_discrete_fields():
    V, Q0 = _th()
    rng = np.random.default_rng(3)
    c = rng.standard_normal(V.ndofs)
    c[V.constrained_dofs] = 0.0
    q = rng.standard_normal(Q0.ndofs)
    mass = forms.load_vector(Q0, lambda x, t: np.ones(x.shape[1:]))
    q -= (mass @ q) * np.ones_like(q)   # zero mean so the fixed mean is consistent
    Pu, Pp = stokes_interpolant(FEFunction(V, c), FEFunction(Q0, q), V, Q0, 0.7)
    np.testing.assert_allclose(Pu.coefficients, c, atol=1e-10)
    np.testing.assert_allclose(Pp.coefficients, q, atol=1e-10)


def test_stokes_interpolant_divergence_moments():
    V, Q0 = _th()
    case = example1_case()
    Pu, _ = stokes_interpolant(case.u, case.p0, V, Q0, case.params.mu, 0.5)
    B = forms.divergence_matrix(Q0, V)
    from mpet.verify import _grad_vector
    exact = forms.load_vector(Q0, lambda x, t: (lambda G: G[0, 0] + G[1, 1])(_grad_vector(case.u, x, 0.5)))
    np.testing.assert_allclose(B @ Pu.coefficients, exact, atol=1e-10)


def test_stokes_interpolant_converges_at_order_two():
    case = example1_case()
    errs = []
    m = build_unit_square_mesh(4)
    for _ in range(3):
        V, Q0 = make_taylor_hood_spaces(m, 1, {"u": [WHOLE]})[:2]
        Pu, _ = stokes_interpolant(case.u, case.p0, V, Q0, case.params.mu, 0.5)
        errs.append(error_norms(Pu, case.u, 0.5)[2])
        m = refine_uniform(m)
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates[-1] > 1.9


def test_elliptic_projection_properties():
    m = build_unit_square_mesh(4)
    Q = FESpace(m, 1, constrained_tags=[WHOLE])
    rng = np.random.default_rng(5)
    c = rng.standard_normal(Q.ndofs)
    assert np.abs(elliptic_projection(FEFunction(Q, c), 1.0, Q).coefficients - c).max() < 1e-12
    case = example1_case()
    a = elliptic_projection(case.p[0], 1.0, Q, 0.5).coefficients
    b = elliptic_projection(case.p[0], 10.0, Q, 0.5).coefficients
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_elliptic_projection_rates():
    case = example1_case()
    m = build_unit_square_mesh(4)
    l2, h1 = [], []
    for _ in range(3):
        Q = FESpace(m, 1, constrained_tags=[WHOLE])
        e = error_norms(elliptic_projection(case.p[0], 1.0, Q, 0.5), case.p[0], 0.5)
        l2.append(e[0])
        h1.append(e[2])
        m = refine_uniform(m)
    assert abs(np.log2(l2[1] / l2[2]) - 2) < 0.1
    assert abs(np.log2(h1[1] / h1[2]) - 1) < 0.1


def test_elliptic_projection_pure_neumann_keeps_mean():
    m = build_unit_square_mesh(4)
    Q = FESpace(m, 1)
    f = lambda x, t: 3.0 + np.cos(np.pi * x[0])
    P = elliptic_projection(f, 1.0, Q)
    mass = forms.load_vector(Q, lambda x, t: np.ones(x.shape[1:]))
    assert abs(mass @ P.coefficients - 3.0) < 1e-3


# -- reports ----------------------------------------------------------------------
def test_report_rates_and_formats():
    rep = ConvergenceReport("total-pressure", "demo")
    for k, e in enumerate([1.0, 0.25, 0.0625]):
        rep.levels.append(LevelRecord(["H", "H/2", "H/4"][k], 4 * 2**k, 1.0, 10, {"u:L2": e}))
    np.testing.assert_allclose(rep.rates("u:L2"), [2.0, 2.0])
    md = rep.to_markdown(optimal={"u:L2": 2})
    assert "| Optimal |" in md and "2.00" in md
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "h,n,ndofs,u:L2,rate[u:L2]"
    assert csv_text.splitlines()[2].endswith("2.0000")


def test_study_needs_two_levels():
    with pytest.raises(ValueError):
        convergence_study(example1_case(), levels=1)


def test_frozen_coarse_errors_total_pressure():
    rep = convergence_study(example1_case(), TOTAL_PRESSURE, levels=2)
    np.testing.assert_allclose(rep.errors("u:L2"), [3.210475897521e-02, 3.691426504790e-03], rtol=1e-8)
    np.testing.assert_allclose(rep.errors("p1:L2"), [3.696273550390e-02, 9.750912611033e-03], rtol=1e-8)
    np.testing.assert_allclose(rep.errors("p0:L2"), [1.423659437822e-01, 3.103080228482e-02], rtol=1e-7)
    assert max(lv.max_residual for lv in rep.levels) <= 1e-10


def test_standard_formulation_coarse_pair_matches_published_row():
    rep = convergence_study(example1_case(), STANDARD, levels=2)
    assert abs(rep.errors("u:L2")[0] - 0.169) < 0.0005
    assert abs(rep.errors("u:H1")[0] - 2.066) < 0.005


def test_p0_control_ratio_is_bounded_across_levels():
    rep = convergence_study(example1_case(), TOTAL_PRESSURE, levels=3)
    ratios = np.array([lv.p0_ratio for lv in rep.levels])
    assert np.all(ratios[1:] <= 1.1 * ratios[0])


# -- structural properties ------------------------------------------------------------
@pytest.mark.parametrize("formulation", [TOTAL_PRESSURE, STANDARD])
def test_energy_decreases_without_data(formulation):
    trace, res = energy_study(formulation, example1_case(nu=0.3).params, n=4, T=0.5, dt=0.125)
    assert max_energy_increase(trace) <= 1e-10
    assert trace[-1] < trace[0]


def test_stokes_limit_monotone():
    d = stokes_limit_study(n=4)
    assert np.all(np.diff(d) < 0)
