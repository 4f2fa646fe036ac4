"""Physical parameters and discrete operators of the two MPET discretizations.

Both schemes are written as ``M_t x' + K x = F(t)`` in monolithic form
and discretized with the theta-scheme::

    (M_t / dt + theta K) x^{n+1} = (M_t / dt - (1 - theta) K) x^n
                                   + theta F^{n+1} + (1 - theta) F^n

Rows are then scaled (``1/theta`` on the displacement and total-pressure
rows, ``-dt`` on the network rows) so the left-hand operator is
symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import forms
from .linalg import BlockSystem
from .spaces import field_names

TOTAL_PRESSURE = "total-pressure"
STANDARD = "standard"
FORMULATIONS = (TOTAL_PRESSURE, STANDARD)


class ParameterError(ValueError):
    pass


def lame_from_E_nu(E, nu):
    """Lamé parameters ``(mu, lam)`` from Young's modulus and Poisson ratio."""
    if E <= 0:
        raise ParameterError(f"Young's modulus must be positive, got {E}")
    if not 0.0 < nu < 0.5:
        raise ParameterError(f"Poisson ratio must lie in (0, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = nu * E / ((1.0 - 2.0 * nu) * (1.0 + nu))
    return mu, lam


@dataclass
class MpetParameters:
    """Coefficients of the MPET system with ``A = len(alpha)`` networks.

    ``K[j]`` is a positive constant or a callable ``K(x)`` returning
    positive values.  ``xi`` is the symmetric transfer matrix; its
    diagonal is ignored.
    """

    mu: float
    lam: float
    alpha: tuple
    c: tuple
    K: tuple
    xi: np.ndarray = None

    def __post_init__(self):
        self.alpha = tuple(float(a) for a in self.alpha)
        self.c = tuple(float(v) for v in self.c)
        self.K = tuple(k if callable(k) else float(k) for k in self.K)
        A = len(self.alpha)
        if self.xi is None:
            self.xi = np.zeros((A, A))
        self.xi = np.array(self.xi, dtype=float)
        np.fill_diagonal(self.xi, 0.0)
        self.validate()

    @classmethod
    def from_E_nu(cls, E, nu, alpha, c, K, xi=None):
        mu, lam = lame_from_E_nu(E, nu)
        return cls(mu, lam, alpha, c, K, xi)

    @property
    def A(self):
        return len(self.alpha)

    @property
    def alpha_full(self):
        """``(alpha_0, alpha_1, ..., alpha_A)`` with ``alpha_0 = 1``."""
        return np.array((1.0,) + self.alpha)

    def validate(self):
        A = self.A
        if A < 1:
            raise ParameterError("need at least one network")
        if len(self.c) != A or len(self.K) != A:
            raise ParameterError(f"alpha, c and K must all have length {A}")
        if self.xi.shape != (A, A):
            raise ParameterError(f"xi must be {A}x{A}, got {self.xi.shape}")
        if not (self.mu > 0 and self.lam > 0):
            raise ParameterError("mu and lam must be positive")
        if any(not 0.0 < a <= 1.0 for a in self.alpha):
            raise ParameterError(f"Biot-Willis coefficients must lie in (0, 1]: {self.alpha}")
        if any(v < 0 for v in self.c):
            raise ParameterError(f"storage coefficients must be non-negative: {self.c}")
        if any((not callable(k)) and k <= 0 for k in self.K):
            raise ParameterError(f"conductivities must be positive: {self.K}")
        if np.any(self.xi < 0):
            raise ParameterError("transfer coefficients must be non-negative")
        if not np.allclose(self.xi, self.xi.T, rtol=0, atol=0):
            raise ParameterError("transfer coefficients must be symmetric")

    def replace(self, **kw):
        d = dict(mu=self.mu, lam=self.lam, alpha=self.alpha, c=self.c, K=self.K, xi=self.xi)
        d.update(kw)
        return MpetParameters(**d)


@dataclass
class SourceData:
    """Body force ``f(x, t)``, network sources ``g[j](x, t)`` and normal stresses.

    ``normal_stress`` maps a boundary tag to ``s(x, t)``; the traction
    ``s n`` is applied on facets with that tag.  ``None`` entries are zero.
    """

    f: Callable | None = None
    g: list = field(default_factory=list)
    normal_stress: dict = field(default_factory=dict)


@dataclass
class BoundaryConditions:
    """Dirichlet data per field and tag: ``{"u": {tag: value}, "p1": {...}}``.

    Values are numbers or callables ``(x, t)``; displacement values are
    2-vectors.  Tags missing from a field are natural (Neumann) boundaries.
    """

    dirichlet: dict = field(default_factory=dict)

    @classmethod
    def homogeneous(cls, A, u_tags=(), p_tags=()):
        d = {}
        if u_tags:
            d["u"] = {t: 0.0 for t in u_tags}
        for j in range(1, A + 1):
            if p_tags:
                d[f"p{j}"] = {t: 0.0 for t in p_tags}
        return cls(d)

    def spec(self):
        return {k: sorted(v) for k, v in self.dirichlet.items() if v}

    def values(self, space, name, t):
        """Prescribed values for ``space.constrained_dofs`` at time ``t``."""
        out = np.zeros(space.ndofs)
        data = self.dirichlet.get(name, {})
        # higher tags first so the lowest tag wins on shared nodes
        for tag in sorted(data, reverse=True):
            val = data[tag]
            nodes = space.boundary_nodes(tag)
            X = space.node_coords[nodes].T
            v = np.asarray(val(X, t) if callable(val) else val, dtype=float)
            if space.value_size == 1:
                out[nodes] = np.broadcast_to(v, nodes.shape)
            else:
                if v.size == 1:
                    v = np.full((2, nodes.size), float(v))
                else:
                    v = np.broadcast_to(v.reshape(2, -1) if v.size > 2 else v.reshape(2, 1),
                                        (2, nodes.size))
                out[2 * nodes] = v[0]
                out[2 * nodes + 1] = v[1]
        return out[space.constrained_dofs]


def transfer(xi, p, j):
    """``S_j = sum_i xi[j, i] (p_j - p_i)``; ``p`` indexed from network 1 (0-based here)."""
    xi = np.asarray(xi, dtype=float)
    pj = p[j]
    return sum(xi[j, i] * (pj - p[i]) for i in range(len(p)) if i != j)


def total_pressure_from_state(lam, alpha, div_u, p):
    """``p_0 = lam div u - sum_j alpha_j p_j``."""
    return lam * np.asarray(div_u) - sum(a * np.asarray(pj) for a, pj in zip(alpha, p))


def div_from_total_pressure(lam, alpha, p0, p):
    """Inverse of :func:`total_pressure_from_state`."""
    return (np.asarray(p0) + sum(a * np.asarray(pj) for a, pj in zip(alpha, p))) / lam


@dataclass
class OperatorTemplate:
    """Assembled time-step operators for one formulation, ``dt`` and ``theta``.

    ``lhs`` and ``history`` are row-scaled monolithic matrices before
    Dirichlet elimination; ``stiff`` and ``mass_t`` hold the unscaled
    ``K`` and ``M_t`` block grids.
    """

    formulation: str
    spaces: list
    params: MpetParameters
    dt: float
    theta: float
    stiff: BlockSystem
    mass_t: BlockSystem
    lhs: sp.csr_matrix
    history: sp.csr_matrix
    row_scale: np.ndarray
    energy_mats: dict

    @property
    def names(self):
        return field_names(self.params.A, self.formulation == TOTAL_PRESSURE)

    @property
    def offsets(self):
        return self.stiff.offsets

    @property
    def size(self):
        return self.stiff.size

    def split(self, x):
        return self.stiff.split(x)

    def lhs_blocks(self):
        """``lhs`` as a :class:`BlockSystem` (for inspection and tests)."""
        o = self.offsets
        n = len(self.spaces)
        grid = [[self.lhs[o[i]:o[i + 1], o[j]:o[j + 1]] for j in range(n)] for i in range(n)]
        return BlockSystem(grid, list(self.stiff.sizes))

    def constrained(self):
        o = self.offsets
        return np.concatenate([o[i] + V.constrained_dofs for i, V in enumerate(self.spaces)])

    def dirichlet_values(self, bcs, t):
        return np.concatenate([bcs.values(V, name, t) for V, name in zip(self.spaces, self.names)])

    def load(self, sources, t):
        """Unscaled load vector ``F(t)``."""
        F = np.zeros(self.size)
        o = self.offsets
        V = self.spaces[0]
        if sources.f is not None:
            F[o[0]:o[1]] += forms.load_vector(V, sources.f, t)
        for tag, s in sources.normal_stress.items():
            F[o[0]:o[1]] += forms.normal_stress_vector(V, [tag], s, t)
        first = 2 if self.formulation == TOTAL_PRESSURE else 1
        for j, g in enumerate(sources.g or []):
            if g is not None:
                k = first + j
                F[o[k]:o[k + 1]] += forms.load_vector(self.spaces[k], g, t)
        return F


def _pressure_operators(spaces_p, params):
    Q = spaces_p[0]
    M = forms.mass_matrix(Q)
    Ks = [forms.stiffness_matrix(Q, weight=k) for k in params.K]
    return M, Ks


def _build(formulation, spaces, params, dt, theta):
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [1/2, 1], got {theta}")
    A = params.A
    tp = formulation == TOTAL_PRESSURE
    nfields = A + (2 if tp else 1)
    if len(spaces) != nfields:
        raise ValueError(f"{formulation} formulation with A={A} needs {nfields} spaces, got {len(spaces)}")
    V = spaces[0]
    if V.value_size != 2 or V.degree != 2 or any(Q.value_size != 1 for Q in spaces[1:]):
        raise ValueError("expected vector P2 displacement and scalar pressure spaces")
    first = 2 if tp else 1
    M, Ks = _pressure_operators(spaces[first:], params)
    B = forms.divergence_matrix(spaces[1], V)
    a = params.alpha
    lam_inv = 1.0 / params.lam
    xi = params.xi

    Kg = [[None] * nfields for _ in range(nfields)]
    Mg = [[None] * nfields for _ in range(nfields)]
    if tp:
        Kg[0][0] = forms.elasticity_matrix(V, params.mu)
        Kg[0][1] = B.T.tocsr()
        Kg[1][0] = B
        Kg[1][1] = -lam_inv * M
        for j in range(A):
            Kg[1][2 + j] = -lam_inv * a[j] * M
            Mg[2 + j][1] = a[j] * lam_inv * M
    else:
        Kg[0][0] = forms.elasticity_matrix(V, params.mu, params.lam)
        for j in range(A):
            Kg[0][1 + j] = (-a[j] * B.T).tocsr()
            Mg[1 + j][0] = a[j] * B
    for j in range(A):
        r = first + j
        Kg[r][r] = Ks[j] + sum(xi[j, i] for i in range(A) if i != j) * M
        for i in range(A):
            if i != j and xi[j, i] != 0.0:
                Kg[r][first + i] = -xi[j, i] * M
            w = a[j] * a[i] * lam_inv if tp else 0.0
            diag = params.c[j] if i == j else 0.0
            if w != 0.0 or diag != 0.0:
                Mg[r][first + i] = (diag + w) * M

    sizes = [S.ndofs for S in spaces]
    stiff = BlockSystem(Kg, sizes)
    mass_t = BlockSystem(Mg, sizes)
    Kmat = stiff.matrix()
    Mmat = mass_t.matrix()
    scale = np.concatenate([np.full(n, 1.0 / theta if i < first else -dt) for i, n in enumerate(sizes)])
    S = sp.diags(scale)
    lhs = (S @ (Mmat / dt + theta * Kmat)).tocsr()
    history = (S @ (Mmat / dt - (1.0 - theta) * Kmat)).tocsr()
    energy = {"elastic": forms.elasticity_matrix(V, params.mu), "mass": M}
    if not tp:
        energy["divdiv"] = forms.elasticity_matrix(V, 0.0, 1.0)
    return OperatorTemplate(formulation, list(spaces), params, float(dt), float(theta),
                            stiff, mass_t, lhs, history, scale, energy)


def assemble_total_pressure_operator(spaces, params, dt, theta=0.5):
    """Time-step operators of the total-pressure scheme on ``[V, Q0, Q1..QA]``."""
    return _build(TOTAL_PRESSURE, spaces, params, dt, theta)


def assemble_standard_operator(spaces, params, dt, theta=0.5):
    """Time-step operators of the two-field scheme on ``[V, Q1..QA]``."""
    return _build(STANDARD, spaces, params, dt, theta)


def assemble_operator(formulation, spaces, params, dt, theta=0.5):
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}; choose from {FORMULATIONS}")
    return _build(formulation, spaces, params, dt, theta)


def assemble_rhs(template, sources, t_prev, t_next, prev, loads=None):
    """``history @ prev + scale * (theta F(t_next) + (1 - theta) F(t_prev))``.

    ``loads`` may supply precomputed ``(F(t_prev), F(t_next))``.
    """
    th = template.theta
    if loads is None:
        F_prev = template.load(sources, t_prev) if th < 1.0 else 0.0
        F_next = template.load(sources, t_next)
    else:
        F_prev, F_next = loads
    rhs = template.history @ prev + template.row_scale * (th * F_next + (1.0 - th) * F_prev)
    if not np.all(np.isfinite(rhs)):
        raise FloatingPointError(f"non-finite right-hand side for step to t={t_next}")
    return rhs


def energy(template, x):
    """Energy components of a monolithic state vector.

    Returns a dict with ``elastic`` (``||eps(u)||^2_{2 mu}``), ``storage``
    (``sum_j ||p_j||^2_{c_j}``), ``compress`` (``||alpha . p||^2_{1/lam}``)
    and their sum ``total``.
    """
    prm = template.params
    fields = template.split(x)
    u = fields[0]
    M = template.energy_mats["mass"]
    el = float(u @ (template.energy_mats["elastic"] @ u))
    tp = template.formulation == TOTAL_PRESSURE
    ps = fields[2:] if tp else fields[1:]
    st = float(sum(c * (p @ (M @ p)) for c, p in zip(prm.c, ps)))
    if tp:
        ap = fields[1] + sum(a * p for a, p in zip(prm.alpha, ps))
        comp = float(ap @ (M @ ap)) / prm.lam
    else:
        # alpha . p = lam div u for the two-field scheme
        comp = prm.lam * float(u @ (template.energy_mats["divdiv"] @ u))
    return {"elastic": el, "storage": st, "compress": comp, "total": el + st + comp}


def exchange_sum(template, x):
    """``sum_j int S_j`` (zero for symmetric transfer coefficients)."""
    prm = template.params
    fields = template.split(x)
    ps = fields[2:] if template.formulation == TOTAL_PRESSURE else fields[1:]
    M = template.energy_mats["mass"]
    ints = [float(np.sum(M @ p)) for p in ps]
    return float(sum(prm.xi[j, i] * (ints[j] - ints[i])
                     for j in range(prm.A) for i in range(prm.A) if i != j))
