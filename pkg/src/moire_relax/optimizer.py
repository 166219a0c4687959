"""Limited-memory BFGS with Armijo or strong-Wolfe line search.

The minimizer is generic over an :class:`Objective` made of a value callback
and a gradient callback. Convergence is declared on the max-norm of the
gradient; the tolerance is absolute, so callers pass a dimensionally
consistent value.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

ARMIJO_C1 = 1e-4
WOLFE_C2 = 0.9
BACKTRACK_FACTOR = 0.5
MAX_LINE_SEARCH_STEPS = 60
CURVATURE_SKIP = 1e-12
STALL_ITERATIONS = 50
STALL_STEP = 1e-12
FLAT_TOLERANCE = 1e-12


class NonFiniteObjective(ArithmeticError):
    """The objective or its gradient is NaN/inf at a point that must be finite."""


class LineSearchFailure(RuntimeError):
    pass


class LineSearch(Enum):
    ARMIJO = "armijo"
    STRONG_WOLFE = "strong_wolfe"


@dataclass(frozen=True)
class MinimizeOptions:
    memory: int = 10
    tolerance: float = 1e-10
    max_iterations: int = 5000
    line_search: LineSearch = LineSearch.ARMIJO

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not isinstance(self.line_search, LineSearch):
            object.__setattr__(self, "line_search", LineSearch(self.line_search))


@dataclass(frozen=True)
class Objective:
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    dimension: int


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    converged: bool
    status: str
    history: list = field(default_factory=list, repr=False)

    @property
    def gradient_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def _value(objective, x):
    # NaN/inf at a trial point is treated as +inf so the step is rejected
    f = objective.eval(x)
    if not math.isfinite(f):
        return math.inf
    return float(f)


def _two_loop(g, pairs, gamma):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * s.dot(q)
        q -= alpha * y
        alphas.append(alpha)
    r = gamma * q
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * y.dot(r)
        r += (alpha - beta) * s
    return r


def _armijo(objective, x, f, g, d, step):
    slope = g.dot(d)
    for _ in range(MAX_LINE_SEARCH_STEPS):
        x_new = x + step * d
        f_new = _value(objective, x_new)
        if f_new <= f + ARMIJO_C1 * step * slope:
            return step, x_new, f_new, None
        step *= BACKTRACK_FACTOR
    raise LineSearchFailure("Armijo backtracking exhausted")


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db)."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _strong_wolfe(objective, x, f, g, d, step, max_step=1e10):
    slope0 = g.dot(d)

    def phi(t):
        xt = x + t * d
        ft = _value(objective, xt)
        if not math.isfinite(ft):
            return xt, ft, None, math.nan
        gt = objective.grad(xt)
        return xt, ft, gt, gt.dot(d)

    def flat_accept(ft, dt):
        # approximate Wolfe conditions once function values are lost in rounding
        if not (math.isfinite(ft) and ft <= f and f - ft <= FLAT_TOLERANCE * max(1.0, abs(f))):
            return False
        return WOLFE_C2 * slope0 <= dt <= (2 * ARMIJO_C1 - 1) * slope0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        for _ in range(MAX_LINE_SEARCH_STEPS):
            t = None
            if math.isfinite(f_hi) and math.isfinite(d_hi):
                t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if t is None or not (left + margin <= t <= right - margin):
                t = 0.5 * (lo + hi)
            xt, ft, gt, dt = phi(t)
            if flat_accept(ft, dt):
                return t, xt, ft, gt
            if not math.isfinite(ft) or ft > f + ARMIJO_C1 * t * slope0 or ft >= f_lo:
                hi, f_hi, d_hi = t, ft, dt
            else:
                if abs(dt) <= -WOLFE_C2 * slope0:
                    return t, xt, ft, gt
                if dt * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = t, ft, dt
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchFailure("strong Wolfe zoom did not terminate")

    t_prev, f_prev, d_prev = 0.0, f, slope0
    t = step
    for i in range(MAX_LINE_SEARCH_STEPS):
        xt, ft, gt, dt = phi(t)
        if flat_accept(ft, dt):
            return t, xt, ft, gt
        if not math.isfinite(ft) or ft > f + ARMIJO_C1 * t * slope0 or (i > 0 and ft >= f_prev):
            return zoom(t_prev, f_prev, d_prev, t, ft, dt)
        if abs(dt) <= -WOLFE_C2 * slope0:
            return t, xt, ft, gt
        if dt >= 0:
            return zoom(t, ft, dt, t_prev, f_prev, d_prev)
        t_prev, f_prev, d_prev = t, ft, dt
        t = min(2.0 * t, max_step)
    raise LineSearchFailure("strong Wolfe bracketing failed")


def minimize(objective: Objective, x0, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Minimize ``objective`` from ``x0`` by two-loop-recursion L-BFGS.

    Accepted iterates never increase the objective. If the line search
    fails or the iteration budget runs out, the best iterate is returned
    with ``converged=False`` and ``status`` naming the reason.
    """
    opts = opts or MinimizeOptions()
    x = np.array(x0, dtype=float)
    if x.shape != (objective.dimension,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({objective.dimension},)")
    f = objective.eval(x)
    if not math.isfinite(f):
        raise NonFiniteObjective(f"objective is {f} at the starting point")
    f = float(f)
    g = np.asarray(objective.grad(x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteObjective("gradient is not finite at the starting point")

    pairs: deque = deque(maxlen=opts.memory)
    gamma = 1.0
    history = [f]
    status = "max_iterations"
    converged = False
    iterations = 0
    stalled = 0
    for iterations in range(opts.max_iterations + 1):
        if np.max(np.abs(g)) <= opts.tolerance:
            converged = True
            status = "converged"
            break
        if iterations == opts.max_iterations:
            break
        d = -_two_loop(g, list(pairs), gamma)
        if not g.dot(d) < 0:
            pairs.clear()
            gamma = 1.0
            d = -g
        # without curvature history a unit step on -g has no scale; cap its length
        step = 1.0 if pairs else min(1.0, 1.0 / np.linalg.norm(g))
        try:
            if opts.line_search is LineSearch.ARMIJO:
                _, x_new, f_new, g_new = _armijo(objective, x, f, g, d, step)
            else:
                _, x_new, f_new, g_new = _strong_wolfe(objective, x, f, g, d, step)
        except LineSearchFailure:
            if pairs:
                # retry once along steepest descent before giving up
                pairs.clear()
                gamma = 1.0
                continue
            status = "line_search_failure"
            break
        if g_new is None:
            g_new = np.asarray(objective.grad(x_new), dtype=float)
        if not np.all(np.isfinite(g_new)):
            raise NonFiniteObjective("gradient is not finite at an accepted iterate")
        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > CURVATURE_SKIP * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
            gamma = sy / y.dot(y)
        # a run of vanishing steps means the iterate is pinned against a barrier
        tiny = np.max(np.abs(s)) <= STALL_STEP * max(1.0, np.max(np.abs(x)))
        stalled = stalled + 1 if tiny else 0
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if stalled >= STALL_ITERATIONS:
            iterations += 1
            status = "stalled"
            break
    return MinimizeResult(x=x, f=f, grad=g, iterations=iterations, converged=converged,
                          status=status, history=history)


def check_gradient(objective: Objective, x, step: float) -> float:
    """Max over coordinates of the relative error between the analytic gradient
    and central differences of step ``step``.

    Components with ``|grad_i| < 1e-12`` are compared in absolute terms. The
    arithmetic follows the dtype of ``x``, so passing ``np.longdouble`` runs
    the finite differences in extended precision.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.array(x, copy=True)
    g = np.asarray(objective.grad(x))
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = objective.eval(xp)
        fm = objective.eval(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteObjective(f"objective not finite near coordinate {i}")
        fd = (fp - fm) / (xp[i] - xm[i])
        err = abs(fd - g[i])
        if abs(g[i]) >= 1e-12:
            err /= abs(g[i])
        worst = max(worst, float(err))
    return worst
