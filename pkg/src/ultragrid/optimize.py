"""Internal optimizers: weighted-metric L-BFGS and damped Newton.

Both optimizers work on the free degrees of freedom of a nodal vector (fixed
entries are pinned), measure convergence in the quadrature-weighted dual norm
``||g||_* = sqrt(sum g_i^2 / d_i)`` (the L2 norm of the Riesz residual
``g / d``), and support a step-acceptance predicate so that feasibility
constraints (for instance a frozen sign pattern) can reject trial points
during the line search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["OptimizeResult", "lbfgs", "newton"]


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def _dual_norm(g: np.ndarray, d: np.ndarray) -> float:
    return float(np.sqrt(np.sum(g * g / d)))


def lbfgs(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    weights: np.ndarray,
    free: np.ndarray,
    gtol: float,
    max_iter: int = 10_000,
    memory: int = 10,
    accept: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None,
    ftol: float = 1e-12,
    patience: int = 10,
) -> OptimizeResult:
    """Two-loop-recursion L-BFGS over the free dofs of ``x0``.

    The initial inverse-Hessian guess is ``gamma * diag(1/d)`` over the free
    weights ``d``, which preconditions the mesh-dependent scaling of nodal
    gradients.  ``accept(x_old, x_new)`` may veto a trial point; vetoed steps
    shrink the line-search parameter like an Armijo failure.

    Terminates early after ``patience`` consecutive iterations whose relative
    decrease falls below ``ftol`` (functionals with a flat direction, such as
    scale-invariant quotients, can otherwise grind at machine precision
    without the gradient norm ever reaching ``gtol``).
    """
    x = x0.copy()
    d = weights[free]
    f, g_full = value_and_grad(x)
    g = g_full[free]
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    gamma = 1.0

    gnorm = _dual_norm(g, d)
    it = 0
    stalled = 0
    while it < max_iter:
        if gnorm <= gtol:
            return OptimizeResult(x, f, gnorm, it, True)
        if stalled >= patience:
            # machine-precision stagnation counts as convergence
            return OptimizeResult(x, f, gnorm, it, True)

        # two-loop recursion with H0 = gamma * diag(1/d)
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_list), reversed(y_list)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            q -= a * y
            alphas.append((a, rho))
        r = gamma * (q / d)
        for (a, rho), (s, y) in zip(reversed(alphas), zip(s_list, y_list)):
            b = rho * (y @ r)
            r += (a - b) * s
        p = -r
        if p @ g >= 0.0:  # not a descent direction: reset memory
            s_list.clear()
            y_list.clear()
            p = -g / d

        # Armijo backtracking with feasibility veto
        slope = p @ g
        step = 1.0
        accepted = False
        for _bt in range(60):
            x_new = x.copy()
            x_new[free] = x[free] + step * p
            if accept is not None and not accept(x, x_new):
                step *= 0.5
                continue
            f_new, g_new_full = value_and_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return OptimizeResult(x, f, gnorm, it, gnorm <= gtol)

        g_new = g_new_full[free]
        s = step * p
        y = g_new - g
        sy = s @ y
        if sy > 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(y) + 1e-300):
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
            gamma = sy / (y @ (y / d))

        if f - f_new <= ftol * max(abs(f), abs(f_new), 1.0):
            stalled += 1
        else:
            stalled = 0
        x, f, g = x_new, f_new, g_new
        gnorm = _dual_norm(g, d)
        it += 1

    return OptimizeResult(x, f, gnorm, it, gnorm <= gtol)


def newton(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    hessian: Callable[[np.ndarray], sp.spmatrix],
    x0: np.ndarray,
    weights: np.ndarray,
    free: np.ndarray,
    gtol: float,
    max_iter: int = 200,
    accept: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None,
) -> OptimizeResult:
    """Damped Newton on the free dofs with a sparse Hessian.

    Falls back to a preconditioned gradient step whenever the Newton system
    fails to produce a descent direction.  Line search halves the step until
    the value decreases and the acceptance predicate (if any) passes.
    """
    x = x0.copy()
    d = weights[free]
    f, g_full = value_and_grad(x)
    g = g_full[free]
    gnorm = _dual_norm(g, d)
    free_idx = np.flatnonzero(free)

    for it in range(max_iter):
        if gnorm <= gtol:
            return OptimizeResult(x, f, gnorm, it, True)

        H = hessian(x).tocsr()[free_idx][:, free_idx].tocsc()
        try:
            p = spla.spsolve(H, -g)
            if not np.all(np.isfinite(p)) or p @ g >= 0.0:
                p = -g / d
        except RuntimeError:
            p = -g / d

        step = 1.0
        accepted = False
        for _bt in range(60):
            x_new = x.copy()
            x_new[free] = x[free] + step * p
            if accept is not None and not accept(x, x_new):
                step *= 0.5
                continue
            f_new, g_new_full = value_and_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * (p @ g):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return OptimizeResult(x, f, gnorm, it, gnorm <= gtol)

        x, f, g = x_new, f_new, g_new_full[free]
        gnorm = _dual_norm(g, d)

    return OptimizeResult(x, f, gnorm, max_iter, gnorm <= gtol)
