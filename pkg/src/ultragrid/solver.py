"""Level-net variational minimization, splitting, and residual verification.

A :class:`ProblemSpec` knows how to build a per-level objective (value,
gradient, optional sparse Hessian, boundary pinning, feasibility) and how to
produce initial guesses.  :func:`solve_net` minimizes level by level with
dyadic warm-start prolongation, :func:`split` decomposes the minimizer net
into a coarse standard part ``w`` plus per-level remainders ``psi``, and
:func:`verify_euler_lagrange` reports strong- and weak-form residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .calculus import GridFunction, TestFunction, inner, norm, restrict
from .grid import Domain, GridLevel, NodeSet, build_level
from .nets import (
    Classification,
    Net,
    classify,
    coarse_values,
    pointwise_standard_part,
)
from .optimize import OptimizeResult, lbfgs, newton

__all__ = [
    "LevelObjective",
    "ProblemSpec",
    "MinResult",
    "SolutionNet",
    "Splitting",
    "PairingReport",
    "ELReport",
    "prolong",
    "minimize_level",
    "solve_net",
    "split",
    "verify_euler_lagrange",
    "check_gradient",
]

#: Relative optimizer tolerance: converged when ||g||_* <= GTOL_FACTOR * (1 + |m|).
GTOL_FACTOR = 1e-8
#: Iteration cap per level.
MAX_ITERATIONS = 10_000


class LevelObjective:
    """Base class for per-level objectives.

    Subclasses must set ``level``, implement :meth:`value` and
    :meth:`gradient`, and may override the Hessian, feasibility, step
    acceptance, normalization, and strong-form residual hooks.  Gradients are
    full-length nodal arrays; entries at pinned dofs are ignored.
    """

    level: GridLevel
    has_hessian: bool = False

    def __init__(self, level: GridLevel) -> None:
        self.level = level
        self.fixed_mask = np.zeros(level.node_count, dtype=bool)
        self.fixed_values = np.zeros(level.node_count)

    # --- required -----------------------------------------------------
    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # --- optional hooks -------------------------------------------------
    def hessian(self, u: np.ndarray) -> sp.spmatrix:
        raise NotImplementedError

    def feasible(self, u: np.ndarray) -> bool:
        return True

    def accept_step(self, u_old: np.ndarray, u_new: np.ndarray) -> bool:
        return True

    def normalize(self, u: np.ndarray) -> np.ndarray:
        return u

    def strong_residual(self, u: np.ndarray) -> Optional[np.ndarray]:
        return None

    # --- helpers --------------------------------------------------------
    def pin(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float, copy=True).ravel()
        out[self.fixed_mask] = self.fixed_values[self.fixed_mask]
        return out

    @property
    def free_mask(self) -> np.ndarray:
        return ~self.fixed_mask

    def value_and_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value(u), self.gradient(u)


@dataclass(frozen=True)
class ProblemSpec:
    """A variational problem: objective factory plus initialization policy."""

    name: str
    domain: Domain
    build: Callable[[GridLevel], LevelObjective]
    initial_guesses: Callable[[GridLevel, np.random.Generator, Optional[np.ndarray]], list]
    random_start: Optional[Callable[[GridLevel, np.random.Generator], np.ndarray]] = None
    lower_bound: Optional[float] = None
    battery: tuple[TestFunction, ...] = ()
    diagnostics: Optional[Callable[[LevelObjective, np.ndarray], dict]] = None
    #: Whether per-level values minimize one nested family of energies, so
    #: that warm-started values must be non-increasing.  Problems whose
    #: quadrature changes meaning across levels (e.g. a singular potential
    #: term) opt out; their value net is classified instead of asserted.
    monotone_values: bool = True


@dataclass
class MinResult:
    """Outcome of one per-level minimization."""

    level: GridLevel
    u: GridFunction
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def _refine_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, 0)
    m = moved.shape[0]
    out = np.empty((2 * m - 1,) + moved.shape[1:], dtype=arr.dtype)
    out[::2] = moved
    out[1::2] = 0.5 * (moved[:-1] + moved[1:])
    return np.moveaxis(out, 0, axis)


def prolong(u: GridFunction, fine: GridLevel) -> GridFunction:
    """Dyadic linear interpolation of ``u`` onto a finer level."""
    if fine.domain != u.level.domain:
        raise ValueError("levels live on different domains")
    steps = round(np.log2(u.level.h / fine.h))
    if steps < 0 or abs(u.level.h - fine.h * 2**steps) > 1e-12 * u.level.h:
        raise ValueError("target level is not a dyadic refinement")
    grid = u.grid_values
    for _ in range(steps):
        for axis in range(u.level.dimension):
            grid = _refine_axis(grid, axis)
    return GridFunction(fine, grid.ravel())


def _run_optimizer(
    obj: LevelObjective, start: np.ndarray, iter_budget: int
) -> OptimizeResult:
    """Run the appropriate optimizer with the self-scaling tolerance.

    The tolerance target ``GTOL_FACTOR * (1 + |m|)`` depends on the unknown
    minimum, so the optimizer is re-entered with a tightened tolerance until
    the achieved gradient norm satisfies the bound at the achieved value.
    """
    weights = obj.level.weights
    free = obj.free_mask
    accept = obj.accept_step
    x = obj.pin(start)
    f = obj.value(x)
    total_iters = 0
    result = None
    for _round in range(4):
        gtol = GTOL_FACTOR * (1.0 + abs(f))
        budget = max(iter_budget - total_iters, 1)
        if obj.has_hessian:
            result = newton(
                obj.value_and_grad, obj.hessian, x, weights, free,
                gtol=gtol, max_iter=min(budget, 200), accept=accept,
            )
        else:
            result = lbfgs(
                obj.value_and_grad, x, weights, free,
                gtol=gtol, max_iter=budget, accept=accept,
            )
        total_iters += result.iterations
        x, f = result.x, result.value
        if result.grad_norm <= GTOL_FACTOR * (1.0 + abs(f)) or result.converged:
            return OptimizeResult(x, f, result.grad_norm, total_iters, True)
        if total_iters >= iter_budget or result.iterations == 0:
            break
    return OptimizeResult(
        x, f, result.grad_norm, total_iters,
        result.grad_norm <= GTOL_FACTOR * (1.0 + abs(f)),
    )


def minimize_level(
    problem: ProblemSpec,
    level: GridLevel,
    init: GridFunction | np.ndarray | None = None,
    seed: int = 0,
    multistart: int = 3,
) -> MinResult:
    """Minimize the problem on one level from one or more starts.

    ``init`` (a warm start) must satisfy the boundary condition and the
    feasibility predicate; an infeasible explicit ``init`` is a usage error.
    Additional starts come from the problem's initializers and, if provided,
    its random-start generator (seeded, so results are deterministic).
    """
    obj = problem.build(level)
    rng = np.random.default_rng([seed, level.n])

    starts: list[np.ndarray] = []
    warm = None
    if init is not None:
        warm = init.values if isinstance(init, GridFunction) else np.asarray(init, float)
        warm = obj.pin(warm)
        if not obj.feasible(warm):
            raise ValueError("initial guess violates the feasibility predicate")
        starts.append(warm)
    for guess in problem.initial_guesses(level, rng, warm):
        arr = obj.pin(np.asarray(guess, dtype=float))
        if obj.feasible(arr):
            starts.append(arr)
    if problem.random_start is not None:
        while len(starts) < multistart:
            arr = obj.pin(problem.random_start(level, rng))
            if obj.feasible(arr):
                starts.append(arr)
    if not starts:
        raise ValueError(f"problem {problem.name!r} produced no feasible start")

    best: OptimizeResult | None = None
    total_iters = 0
    for start in starts:
        res = _run_optimizer(obj, start, MAX_ITERATIONS)
        total_iters += res.iterations
        if best is None or res.value < best.value:
            best = res

    x = obj.normalize(best.x)
    diagnostics = problem.diagnostics(obj, x) if problem.diagnostics else {}
    return MinResult(
        level=level,
        u=GridFunction(level, x),
        value=best.value,
        grad_norm=best.grad_norm,
        iterations=total_iters,
        converged=best.converged,
        diagnostics=diagnostics,
    )


@dataclass
class SolutionNet:
    """Per-level minimization results with net views and health flags."""

    problem: ProblemSpec
    results: tuple[MinResult, ...]
    partial: bool
    monotone_violations: tuple[int, ...]

    def value_net(self) -> Net:
        return Net(tuple((r.level.n, r.value) for r in self.results))

    def minimizer_net(self) -> Net:
        return Net(tuple((r.level.n, r.u) for r in self.results))


def solve_net(
    problem: ProblemSpec,
    levels: Sequence[int],
    warm_start: bool = True,
    seed: int = 0,
    multistart: int = 3,
) -> SolutionNet:
    """Minimize over a chain of at least three levels with warm starting.

    Nested-space monotonicity (``m_{n+1} <= m_n + 1e-10`` with warm start) is
    asserted; a violating level is recorded in ``monotone_violations`` and
    flagged as non-converged rather than silently accepted.  If the problem
    declares a certified lower bound, every level value is checked against it.
    """
    level_list = sorted(int(n) for n in levels)
    if len(level_list) < 3:
        raise ValueError("solve_net needs at least three levels")

    results: list[MinResult] = []
    violations: list[int] = []
    init: GridFunction | None = None
    for n in level_list:
        level = build_level(problem.domain, n)
        if init is not None:
            # a warm start that lost feasibility in prolongation is dropped,
            # not an error (explicit user inits still are)
            obj = problem.build(level)
            if not obj.feasible(obj.pin(init.values)):
                init = None
        res = minimize_level(
            problem, level, init=init, seed=seed, multistart=multistart
        )
        if (
            problem.monotone_values
            and results
            and warm_start
            and res.value > results[-1].value + 1e-10
        ):
            violations.append(n)
            res.converged = False
        if problem.lower_bound is not None and res.value < problem.lower_bound - 1e-10:
            raise RuntimeError(
                f"level {n} value {res.value} violates the certified lower bound "
                f"{problem.lower_bound}"
            )
        results.append(res)
        if warm_start and len(results) < len(level_list):
            next_level = build_level(problem.domain, level_list[len(results)])
            init = prolong(res.u, next_level)
        else:
            init = None
    partial = any(not r.converged for r in results)
    return SolutionNet(
        problem=problem,
        results=tuple(results),
        partial=partial,
        monotone_violations=tuple(violations),
    )


@dataclass(frozen=True)
class PairingReport:
    """Pairings of the remainder net against one test function."""

    test_index: int
    values: tuple[float, ...]
    classification: Classification


@dataclass(frozen=True)
class Splitting:
    """Decomposition ``u_n = w + psi_n`` (exact at shared coarse nodes)."""

    w: GridFunction
    singular: NodeSet
    psi: Net
    psi_norms: tuple[tuple[int, float], ...]
    pairings: tuple[PairingReport, ...]


def split(
    solutions: SolutionNet | Net,
    battery: tuple[TestFunction, ...] | None = None,
    singular_scale: float = 1.0,
    singular_exponent: float = 0.5,
    **classify_kwargs,
) -> Splitting:
    """Split a minimizer net into its standard part and remainders.

    ``w`` and the singular set come from the pointwise standard part; a node
    is additionally marked singular when its values grow strictly in
    magnitude beyond ``singular_scale * h**-singular_exponent`` (the
    finite-level blow-up criterion).  ``psi_n = u_n - interp(w)`` with dyadic
    linear interpolation, so the reconstruction is exact at coarse nodes.
    """
    if isinstance(solutions, SolutionNet):
        u_net = solutions.minimizer_net()
        if battery is None:
            battery = solutions.problem.battery
    else:
        u_net = solutions
    battery = battery or ()

    w, singular = pointwise_standard_part(u_net, **classify_kwargs)
    coarse = w.level

    values = coarse_values(u_net)
    hs = np.array(u_net.spacings())
    mags = np.abs(values[-3:])
    blowup = (
        (mags[0] < mags[1])
        & (mags[1] < mags[2])
        & (mags[2] >= singular_scale * hs[-1] ** -singular_exponent)
    )
    if blowup.any():
        idx = np.union1d(singular.indices, np.flatnonzero(blowup))
        singular = NodeSet(coarse, idx)
        w_vals = w.values.copy()
        w_vals[singular.indices] = 0.0
        w = GridFunction(coarse, w_vals)

    psi_entries = []
    psi_norms = []
    for n, u in u_net.entries:
        w_fine = prolong(w, u.level)
        psi = GridFunction(u.level, u.values - w_fine.values)
        psi_entries.append((n, psi))
        psi_norms.append((n, norm(psi)))
    psi_net = Net(tuple(psi_entries))

    pairings = []
    for j, phi in enumerate(battery):
        vals = []
        for _n, psi in psi_net.entries:
            phi_grid = restrict(phi.fn, psi.level)
            vals.append(inner(psi, phi_grid))
        number_net = Net(tuple(zip(psi_net.levels, vals)))
        pairings.append(
            PairingReport(
                test_index=j,
                values=tuple(vals),
                classification=classify(number_net, **classify_kwargs),
            )
        )
    return Splitting(
        w=w,
        singular=singular,
        psi=psi_net,
        psi_norms=tuple(psi_norms),
        pairings=tuple(pairings),
    )


@dataclass(frozen=True)
class ELReport:
    """Strong- and weak-form residuals of a result."""

    max_residual: float
    l2_residual: float
    weak_residuals: tuple[float, ...]


def verify_euler_lagrange(problem: ProblemSpec, result: MinResult) -> ELReport:
    """Residual report at a per-level result.

    The strong-form residual is the problem's own (e.g. ``-lap u + W'(u)``)
    when available, else the Riesz residual ``grad / d``; both are evaluated
    at free nodes only.  Weak residuals pair the gradient with the battery.
    """
    obj = problem.build(result.level)
    u = result.u.values
    free = obj.free_mask
    d = result.level.weights

    strong = obj.strong_residual(u)
    if strong is None:
        strong = obj.gradient(u) / d
    r = strong[free]
    max_res = float(np.max(np.abs(r))) if r.size else 0.0
    l2_res = float(np.sqrt(np.sum(r**2 * d[free])))

    g = obj.gradient(u).copy()
    g[~free] = 0.0
    weak = []
    for phi in problem.battery:
        phi_grid = restrict(phi.fn, result.level)
        weak.append(float(g @ phi_grid.values))
    return ELReport(max_residual=max_res, l2_residual=l2_res, weak_residuals=tuple(weak))


def check_gradient(
    problem: ProblemSpec,
    level: GridLevel,
    seed: int = 0,
    directions: int = 5,
    eps: float = 1e-6,
) -> float:
    """Max relative error of the analytic gradient against central differences.

    Probes random directions supported on the free dofs around the problem's
    first initializer (nudged to stay feasible).  Used to enforce the
    gradient-consistency invariant of :class:`ProblemSpec`.
    """
    obj = problem.build(level)
    rng = np.random.default_rng([seed, 97, level.n])
    guesses = problem.initial_guesses(level, rng, None)
    u = obj.pin(np.asarray(guesses[-1], dtype=float))
    scale = max(1.0, float(np.max(np.abs(u))))
    # nudge off any symmetry point of the functional, staying feasible
    bumped = u.copy()
    bumped[obj.free_mask] += 0.05 * scale * rng.standard_normal(int(obj.free_mask.sum()))
    if obj.feasible(bumped):
        u = bumped

    worst = 0.0
    g = obj.gradient(u)
    for _ in range(directions):
        v = rng.standard_normal(u.size)
        v[obj.fixed_mask] = 0.0
        v /= max(np.linalg.norm(v), 1e-300)
        step = eps * scale
        up = u + step * v
        dn = u - step * v
        if not (obj.feasible(up) and obj.feasible(dn)):
            continue
        fd = (obj.value(up) - obj.value(dn)) / (2.0 * step)
        an = float(g @ v)
        denom = max(abs(fd), abs(an), 1e-10)
        worst = max(worst, abs(fd - an) / denom)
    return worst
