"""The three packaged variational studies.

* :func:`sawtooth_spec` — the 1D oscillation functional
  ``J(u) = int u^2 + int ((u')^2 - 1)^2`` whose infimum over each level is
  positive but vanishes along the level net (minimizers are fine sawteeth).
* :func:`sign_perturbed_spec` — the critical Sobolev quotient
  ``(int |grad u|^2 + int a u^2) / (int |u|^{2*})^{2/2*}`` with homogeneous
  Dirichlet data.  The quotient is evaluated as the exact energy of the
  multilinear nodal interpolant (stiffness kron-sum numerator, per-cell Gauss
  denominator), so every discrete value is a true Sobolev quotient and stays
  above the sharp constant.
* :func:`singular_spec` — minimization of
  ``int (1/2 |grad u|^2 + W(u))`` with a singular potential (default
  ``W(t) = t**-2``), sign-changing boundary data, and the nodal constraint
  ``u != 0``; the minimizer splits the box into robustly positive / negative
  regions separated by a thin interface.

The Dirichlet term of the singular energy sums the squared derivative over
interior stencil rows only: the antisymmetric closure rows of the derivative
are not consistent for nonzero boundary values and would otherwise add a
spurious ``O(1/h)`` penalty.  Constants remain exactly harmonic under the
resulting masked stiffness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .calculus import GridFunction, diff_op, standard_battery
from .elements import apply_axis, gauss_interp, p1_matrices
from .grid import Domain, GridLevel, NodeSet
from .measure import NodeMask, perimeter
from .solver import LevelObjective, ProblemSpec

__all__ = [
    "sobolev_constant",
    "sawtooth_spec",
    "sawtooth_pattern",
    "BubbleInitializer",
    "bubble",
    "quadratic_well",
    "sign_perturbed_spec",
    "concentration_metric",
    "singular_spec",
    "InterfaceDecomposition",
    "extract_interface",
]


@lru_cache(maxsize=1)
def sobolev_constant(dimension: int = 3) -> float:
    """The sharp Sobolev constant, read from the pre-registered fixture.

    The fixture is produced independently by
    ``scripts/compute_sobolev_constant.py`` (radial quadrature of the
    Aubin-Talenti profile) before any acceptance run.
    """
    data = json.loads(
        resources.files("ultragrid.fixtures").joinpath("sobolev.json").read_text()
    )
    key = str(dimension)
    if key not in data:
        raise ValueError(f"no stored Sobolev constant for dimension {dimension}")
    return float(data[key]["value"])


# ---------------------------------------------------------------------------
# sawtooth
# ---------------------------------------------------------------------------


class _SawtoothObjective(LevelObjective):
    def __init__(self, level: GridLevel) -> None:
        super().__init__(level)
        self._op = diff_op(level)
        self._d = level.weights

    def value(self, u: np.ndarray) -> float:
        du = self._op.apply(u, 0)
        return float((u * u) @ self._d + ((du * du - 1.0) ** 2) @ self._d)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        du = self._op.apply(u, 0)
        inner_term = 4.0 * du * (du * du - 1.0) * self._d
        return 2.0 * u * self._d + self._op.apply_transpose(inner_term, 0)


def sawtooth_pattern(level: GridLevel) -> np.ndarray:
    """A period-4 nodal pattern with slope exactly +/-1 in every stencil row."""
    base = np.array([0.0, 1.0, 2.0, -1.0]) * level.h
    idx = np.arange(level.node_count) % 4
    return base[idx]


def sawtooth_spec() -> ProblemSpec:
    """The 1D oscillation study on [0, 1] (free boundary, lower bound 0)."""
    domain = Domain(bounds=((0.0, 1.0),))

    def build(level: GridLevel) -> LevelObjective:
        return _SawtoothObjective(level)

    def initial_guesses(level, rng, warm):
        return [np.zeros(level.node_count), sawtooth_pattern(level)]

    def random_start(level, rng):
        return rng.standard_normal(level.node_count) * level.h

    return ProblemSpec(
        name="sawtooth",
        domain=domain,
        build=build,
        initial_guesses=initial_guesses,
        random_start=random_start,
        lower_bound=0.0,
        battery=standard_battery(domain, 3),
    )


# ---------------------------------------------------------------------------
# critical Sobolev quotient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BubbleInitializer:
    """Cutoff Aubin-Talenti profile ``U(r) = (1 + r^2)^{-(N-2)/2}``.

    The scaled profile ``U_eps(r) = eps^{(2-N)/2} U(r/eps)`` is kept for
    ``r <= delta``, continued linearly down to zero on
    ``delta < r <= delta * theta`` and vanishes beyond.
    """

    center: tuple[float, ...]
    epsilon: float
    delta: float = 0.25
    theta: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.epsilon <= 0 or self.delta <= 0 or self.theta <= 1:
            raise ValueError("epsilon, delta must be positive and theta > 1")


def bubble(init: BubbleInitializer, level: GridLevel) -> GridFunction:
    """Sample the cutoff profile at the nodes of ``level``."""
    dim = level.dimension
    if dim < 3:
        raise ValueError("the bubble profile needs dimension >= 3")
    support = init.delta * init.theta
    for c, (lo, hi) in zip(init.center, level.domain.bounds):
        if c - support < lo - 1e-12 or c + support > hi + 1e-12:
            raise ValueError("bubble support exceeds the domain box")

    r = np.linalg.norm(level.coordinates - np.asarray(init.center), axis=1)
    power = (dim - 2) / 2.0
    u_eps = init.epsilon**-power * (1.0 + (r / init.epsilon) ** 2) ** -power
    edge = (
        init.epsilon**-power
        * (1.0 + (init.delta / init.epsilon) ** 2) ** -power
    )
    ramp = edge * (support - r) / (support - init.delta)
    values = np.where(r <= init.delta, u_eps, np.where(r <= support, ramp, 0.0))
    return GridFunction(level, values)


def quadratic_well(center: Sequence[float], strength: float = 50.0) -> Callable:
    """Potential ``a(x) = strength * |x - center|^2`` (isolated minimum)."""
    c = tuple(float(x) for x in center)

    def a(*coords):
        return strength * sum((np.asarray(x) - ci) ** 2 for x, ci in zip(coords, c))

    return a


class _QuotientObjective(LevelObjective):
    """Exact multilinear-interpolant Sobolev quotient on one level."""

    def __init__(self, level: GridLevel, potential: Optional[Callable]) -> None:
        super().__init__(level)
        dim = level.dimension
        self.p = 2.0 * dim / (dim - 2)  # critical exponent
        self.q = (dim - 2) / dim  # denominator power 2 / 2*
        self.fixed_mask = level.boundary_mask.copy()
        self.fixed_values = np.zeros(level.node_count)

        self._K1, self._M1 = [], []
        self._G, self._GTW, self._gw = [], [], []
        gauss_points = []
        for axis, m in enumerate(level.shape):
            K, M = p1_matrices(m, level.h)
            self._K1.append(K)
            self._M1.append(M)
            G, GTW, pts, w = gauss_interp(m, level.h, level.domain.bounds[axis][0])
            self._G.append(G)
            self._GTW.append(GTW)
            self._gw.append(w)
            gauss_points.append(pts)

        self._a_gauss = None
        if potential is not None:
            mesh = np.meshgrid(*gauss_points, indexing="ij", sparse=True)
            a_vals = np.asarray(potential(*mesh), dtype=float)
            shape = tuple(p.size for p in gauss_points)
            self._a_gauss = np.broadcast_to(a_vals, shape)

    # -- tensor helpers ---------------------------------------------------
    def _stiffness_apply(self, grid: np.ndarray) -> np.ndarray:
        dim = grid.ndim
        out = np.zeros_like(grid)
        for i in range(dim):
            tmp = grid
            for axis in range(dim):
                mat = self._K1[axis] if axis == i else self._M1[axis]
                tmp = apply_axis(mat, tmp, axis)
            out += tmp
        return out

    def _gauss_values(self, grid: np.ndarray) -> np.ndarray:
        tmp = grid
        for axis in range(grid.ndim):
            tmp = apply_axis(self._G[axis], tmp, axis)
        return tmp

    def _gauss_adjoint(self, gauss_grid: np.ndarray) -> np.ndarray:
        tmp = gauss_grid
        for axis in range(gauss_grid.ndim):
            tmp = apply_axis(self._GTW[axis], tmp, axis)
        return tmp

    def _gauss_sum(self, gauss_grid: np.ndarray) -> float:
        tmp = gauss_grid
        for w in self._gw:
            tmp = np.tensordot(w, tmp, axes=(0, 0))
        return float(tmp)

    # -- energy pieces ------------------------------------------------------
    def _pieces(self, u: np.ndarray):
        grid = u.reshape(self.level.shape)
        ku = self._stiffness_apply(grid)
        num = float(np.vdot(grid, ku))
        ug = self._gauss_values(grid)
        if self._a_gauss is not None:
            num += self._gauss_sum(self._a_gauss * ug * ug)
        den = self._gauss_sum(np.abs(ug) ** self.p)
        return grid, ku, ug, num, den

    def value(self, u: np.ndarray) -> float:
        _grid, _ku, _ug, num, den = self._pieces(u)
        if den <= 0.0:
            return float("inf")
        return num / den**self.q

    def gradient(self, u: np.ndarray) -> np.ndarray:
        grid, ku, ug, num, den = self._pieces(u)
        if den <= 0.0:
            return np.zeros(u.size)
        d_num = 2.0 * ku
        if self._a_gauss is not None:
            d_num = d_num + 2.0 * self._gauss_adjoint(self._a_gauss * ug)
        d_den = self.p * self._gauss_adjoint(np.sign(ug) * np.abs(ug) ** (self.p - 1.0))
        grad = d_num / den**self.q - (self.q * num / den ** (self.q + 1.0)) * d_den
        return grad.ravel()

    def normalize(self, u: np.ndarray) -> np.ndarray:
        grid = u.reshape(self.level.shape)
        den = self._gauss_sum(np.abs(self._gauss_values(grid)) ** self.p)
        if den <= 0.0:
            return u
        return u * den ** (-1.0 / self.p)


def concentration_metric(
    u: GridFunction, x_m: Sequence[float], r: float, exponent: Optional[float] = None
) -> float:
    """Fraction of the ``|u|^{2*}`` nodal mass inside the ball ``B_r(x_m)``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    dim = u.level.dimension
    if exponent is None:
        if dim < 3:
            raise ValueError("default exponent needs dimension >= 3")
        exponent = 2.0 * dim / (dim - 2)
    mass = np.abs(u.values) ** exponent * u.level.weights
    total = float(mass.sum())
    if total == 0.0:
        return 0.0
    dist = np.linalg.norm(u.level.coordinates - np.asarray(x_m, dtype=float), axis=1)
    return float(mass[dist <= r].sum() / total)


def sign_perturbed_spec(
    a: Optional[Callable] = None,
    dimension: int = 3,
    delta: float = 0.25,
    theta: float = 2.0,
    center: Optional[Sequence[float]] = None,
    bubble_scales: Sequence[float] = (2.0, 4.0, 8.0),
    concentration_radius: float = 0.2,
) -> ProblemSpec:
    """Critical Sobolev quotient on the unit box with Dirichlet-zero data.

    ``a`` is an optional potential (``a >= 0`` keeps the sharp constant a
    certified lower bound); initial guesses are cutoff instanton bubbles at
    grid-proportional scales, centered at ``center`` (default: box center).
    """
    if dimension < 3:
        raise ValueError("the critical-exponent study needs dimension >= 3")
    domain = Domain(bounds=tuple(((0.0, 1.0),) * dimension))
    x_m = tuple(center) if center is not None else (0.5,) * dimension

    lower = None
    if dimension == 3:
        if a is None:
            lower = sobolev_constant(3)
        else:
            rng = np.random.default_rng(12345)
            probes = rng.random((1000, dimension))
            sampled = np.asarray(a(*[probes[:, i] for i in range(dimension)]))
            if np.all(sampled >= 0.0):
                lower = sobolev_constant(3)

    cache: dict[int, _QuotientObjective] = {}

    def build(level: GridLevel) -> LevelObjective:
        obj = cache.get(id(level))
        if obj is None or obj.level is not level:
            obj = _QuotientObjective(level, a)
            cache.clear()
            cache[id(level)] = obj
        return obj

    def initial_guesses(level, rng, warm):
        scales = [bubble_scales[1]] if warm is not None else list(bubble_scales)
        guesses = []
        for s in scales:
            init = BubbleInitializer(
                center=x_m, epsilon=s * level.h, delta=delta, theta=theta
            )
            guesses.append(bubble(init, level).values)
        return guesses

    def diagnostics(obj: LevelObjective, u: np.ndarray) -> dict:
        gf = GridFunction(obj.level, u)
        return {
            "concentration": concentration_metric(gf, x_m, concentration_radius),
            "linf": float(np.max(np.abs(u))),
        }

    return ProblemSpec(
        name="sign_perturbed",
        domain=domain,
        build=build,
        initial_guesses=initial_guesses,
        lower_bound=lower,
        battery=standard_battery(domain, 3),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# singular potential problem
# ---------------------------------------------------------------------------


def _default_W(t: np.ndarray) -> np.ndarray:
    return 1.0 / (t * t)


def _default_Wp(t: np.ndarray) -> np.ndarray:
    return -2.0 / (t * t * t)


def _default_Wpp(t: np.ndarray) -> np.ndarray:
    return 6.0 / (t * t * t * t)


def _check_potential(W: Callable) -> None:
    """Sampled growth checks: blow-up at zero, subquadratic at infinity."""
    small = np.array([1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    vals = np.asarray(W(small), dtype=float)
    if not (np.all(np.diff(vals) > 0) and vals[-1] > 1e4):
        raise ValueError("potential must blow up as t -> 0")
    large = np.array([1e1, 1e2, 1e3, 1e4, 1e5, 1e6])
    ratio = np.asarray(W(large), dtype=float) / large**2
    if not (np.all(np.diff(ratio) < 0) and ratio[-1] < 1e-3):
        raise ValueError("potential must be subquadratic at infinity")


def _interior_row_mask(level: GridLevel, axis: int) -> np.ndarray:
    """Flat mask of nodes whose axis stencil row is a central difference."""
    idx = np.unravel_index(np.arange(level.node_count), level.shape)[axis]
    return (idx > 0) & (idx < level.shape[axis] - 1)


def _masked_stiffness(level: GridLevel) -> sp.csr_matrix:
    """Assemble ``sum_i D_i^T diag(d * mask_i) D_i`` as a sparse matrix."""
    from .calculus import _d1_matrix

    terms = []
    for i in range(level.dimension):
        pieces = []
        for axis, m in enumerate(level.shape):
            w = sp.diags(level.axis_weights[axis])
            if axis == i:
                D = _d1_matrix(m, level.h)
                mask = np.ones(m)
                mask[0] = mask[-1] = 0.0
                pieces.append(sp.csr_matrix(D.T @ sp.diags(level.axis_weights[axis] * mask) @ D))
            else:
                pieces.append(sp.csr_matrix(w))
        term = pieces[0]
        for p in pieces[1:]:
            term = sp.kron(term, p, format="csr")
        terms.append(term)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total.tocsr()


class _SingularObjective(LevelObjective):
    has_hessian = True

    def __init__(
        self,
        level: GridLevel,
        W: Callable,
        Wp: Callable,
        Wpp: Optional[Callable],
        g_values: np.ndarray,
    ) -> None:
        super().__init__(level)
        self._op = diff_op(level)
        self._d = level.weights
        self._W, self._Wp, self._Wpp = W, Wp, Wpp
        self.has_hessian = Wpp is not None
        self.fixed_mask = level.boundary_mask.copy()
        self.fixed_values = np.where(self.fixed_mask, g_values, 0.0)
        self._row_masks = [
            _interior_row_mask(level, axis) for axis in range(level.dimension)
        ]
        self._K = _masked_stiffness(level)

    def value(self, u: np.ndarray) -> float:
        total = 0.0
        for axis, mask in enumerate(self._row_masks):
            du = self._op.apply(u, axis)
            total += 0.5 * float((du * du * mask) @ self._d)
        total += float(self._W(u) @ self._d)
        return total

    def gradient(self, u: np.ndarray) -> np.ndarray:
        grad = self._d * self._Wp(u)
        for axis, mask in enumerate(self._row_masks):
            du = self._op.apply(u, axis)
            grad = grad + self._op.apply_transpose(du * mask * self._d, axis)
        return grad

    def hessian(self, u: np.ndarray) -> sp.spmatrix:
        return self._K + sp.diags(self._d * self._Wpp(u))

    def strong_residual(self, u: np.ndarray) -> np.ndarray:
        lap = np.zeros_like(u)
        for axis, mask in enumerate(self._row_masks):
            du = self._op.apply(u, axis)
            lap -= self._op.apply_transpose(du * mask * self._d, axis) / self._d
        return -lap + self._Wp(u)

    def feasible(self, u: np.ndarray) -> bool:
        return bool(np.all(u != 0.0))

    def accept_step(self, u_old: np.ndarray, u_new: np.ndarray) -> bool:
        free = self.free_mask
        return bool(np.all(u_new[free] * u_old[free] > 0.0))


def singular_spec(
    W: Optional[Callable] = None,
    Wp: Optional[Callable] = None,
    Wpp: Optional[Callable] = None,
    g: Optional[Callable] = None,
    domain: Optional[Domain] = None,
    init_floor: float = 0.1,
) -> ProblemSpec:
    """The singular-potential study (default ``W(t) = t**-2`` on [0,1]^2).

    ``g`` is sign-changing Dirichlet data, nonzero at every boundary node
    (default: +1 where the first coordinate is <= the axis midpoint, else -1;
    midline nodes get +1 by convention).  The initializer is the harmonic
    extension of ``g`` clipped away from zero (``|u| >= init_floor``).
    """
    if W is None:
        W, Wp, Wpp = _default_W, _default_Wp, _default_Wpp
    elif Wp is None:
        raise ValueError("a custom potential needs its derivative")
    _check_potential(W)
    if domain is None:
        domain = Domain(bounds=((0.0, 1.0), (0.0, 1.0)))
    mid = 0.5 * (domain.bounds[0][0] + domain.bounds[0][1])

    if g is None:
        def g(*coords):
            return np.where(np.asarray(coords[0]) <= mid, 1.0, -1.0)

    def _boundary_values(level: GridLevel) -> np.ndarray:
        coords = level.coordinates
        vals = np.asarray(
            g(*[coords[:, i] for i in range(level.dimension)]), dtype=float
        )
        on_boundary = level.boundary_mask
        zero = on_boundary & (vals == 0.0)
        if zero.any():
            node = int(np.flatnonzero(zero)[0])
            raise ValueError(f"boundary data vanishes at node {node}")
        return np.where(on_boundary, vals, 0.0)

    cache: dict[int, _SingularObjective] = {}

    def build(level: GridLevel) -> LevelObjective:
        obj = cache.get(id(level))
        if obj is None or obj.level is not level:
            obj = _SingularObjective(level, W, Wp, Wpp, _boundary_values(level))
            cache.clear()
            cache[id(level)] = obj
        return obj

    def initial_guesses(level, rng, warm):
        obj = build(level)
        fixed = obj.fixed_mask
        K = obj._K.tocsr()
        free_idx = np.flatnonzero(~fixed)
        fixed_idx = np.flatnonzero(fixed)
        u = np.zeros(level.node_count)
        u[fixed_idx] = obj.fixed_values[fixed_idx]
        rhs = -K[free_idx][:, fixed_idx] @ u[fixed_idx]
        u[free_idx] = spla.spsolve(K[free_idx][:, free_idx].tocsc(), rhs)
        x0 = level.coordinates[:, 0]
        sign = np.where(u > 0, 1.0, np.where(u < 0, -1.0, np.where(x0 <= mid, 1.0, -1.0)))
        clipped = sign * np.maximum(np.abs(u), init_floor)
        return [clipped]

    def diagnostics(obj: LevelObjective, u: np.ndarray) -> dict:
        gf = GridFunction(obj.level, u)
        deco = extract_interface(gf)
        free = obj.free_mask
        return {
            "min_abs_u": float(np.min(np.abs(u[free]))) if free.any() else 0.0,
            "interface_measure": deco.interface_measure,
        }

    return ProblemSpec(
        name="singular",
        domain=domain,
        build=build,
        initial_guesses=initial_guesses,
        battery=standard_battery(domain, 3),
        diagnostics=diagnostics,
        monotone_values=False,
    )


# ---------------------------------------------------------------------------
# interface extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterfaceDecomposition:
    """Disjoint cover of the nodes by sign robustness.

    ``omega1`` (``omega2``): nodes whose whole stencil neighborhood is
    strictly positive (negative); ``xi``: the remaining, mixed or touching
    zero.  ``interface_measure`` is the perimeter of the ``{u > 0}`` node
    mask (the nearest-node region extends past the box, so the measure counts
    only the internal interface).
    """

    omega1: NodeSet
    omega2: NodeSet
    xi: NodeSet
    interface_measure: float
    xi_max_distance: Optional[float] = None


def extract_interface(
    u: GridFunction, reference_distance: Optional[Callable] = None
) -> InterfaceDecomposition:
    """Decompose the nodes of ``u`` by stencil-robust sign.

    ``reference_distance``, when given, maps an ``(k, N)`` coordinate array
    to distances from a reference surface; the maximum over the mixed set is
    reported (useful to check interface location).
    """
    level = u.level
    grid = u.grid_values
    nmin = ndi.minimum_filter(grid, size=3, mode="nearest").ravel()
    nmax = ndi.maximum_filter(grid, size=3, mode="nearest").ravel()
    omega1 = nmin > 0.0
    omega2 = nmax < 0.0
    xi = ~(omega1 | omega2)

    measure = perimeter(NodeMask(level, u.values > 0.0), level)
    xi_idx = np.flatnonzero(xi)
    xi_dist = None
    if reference_distance is not None and xi_idx.size:
        xi_dist = float(np.max(reference_distance(level.coordinates[xi_idx])))
    return InterfaceDecomposition(
        omega1=NodeSet(level, np.flatnonzero(omega1)),
        omega2=NodeSet(level, np.flatnonzero(omega2)),
        xi=NodeSet(level, xi_idx),
        interface_measure=measure,
        xi_max_distance=xi_dist,
    )
