"""Accelerated gradient descent with backtracking and adaptive restart.

Used for every smooth convex subproblem in the package: the fully corrective
refits, the single-column selection rules and the ridge baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import InputError, NumericalError

_EPS = np.finfo(np.float64).eps


@dataclass
class SmoothObjective:
    """Value and gradient oracle over a flat parameter vector.

    ``value_and_gradient`` is optional; when given it is used wherever both
    quantities are needed at the same point.
    """

    dimension: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    value_and_gradient: Callable | None = None

    def both(self, x):
        if self.value_and_gradient is not None:
            f, g = self.value_and_gradient(x)
        else:
            f, g = self.value(x), self.gradient(x)
        return float(f), np.asarray(g, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    shrink: float = 0.5
    initial_step: float = 1.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InputError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be at least 1")
        if not 0 < self.shrink < 1:
            raise InputError("shrink factor must lie in (0, 1)")
        if not self.initial_step > 0:
            raise InputError("initial step must be positive")


@dataclass
class SolverResult:
    point: np.ndarray
    value: float
    iterations: int
    final_gradient_norm: float
    converged: bool


def decrease_slack(f):
    """Rounding allowance for value comparisons, about 1e-13 relative.

    Objective values summed over many terms carry rounding errors of many
    ulps; a tighter allowance rejects valid steps near the optimum.
    """
    return 512 * _EPS * max(1.0, abs(f))


def sufficient_decrease(f_next, f_cur, g_cur, step_vec, step) -> bool:
    """``f_next <= f_cur + <g, d> + |d|^2 / (2 step)`` up to rounding."""
    bound = f_cur + g_cur @ step_vec + (step_vec @ step_vec) / (2.0 * step)
    return bool(f_next <= bound + decrease_slack(f_cur))


def curvature_ok(g_next, g_cur, step_vec, step) -> bool:
    """``<g_next - g_cur, d> <= |d|^2 / step``: the local curvature along the
    step is at most ``1 / step``. Unlike the value test this stays reliable
    when value differences are below rounding."""
    dd = float(step_vec @ step_vec)
    return bool(float((g_next - g_cur) @ step_vec) <= dd / step * (1.0 + 1e-12))


def _finite(f, g, x):
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalError("objective returned a non-finite value or gradient", x)


def minimize_smooth(obj: SmoothObjective, init, cfg: SolverConfig | None = None,
                    callback=None) -> SolverResult:
    """Minimize a smooth convex objective from ``init``.

    Nesterov momentum with a backtracking estimate of the step size. When a
    momentum step would raise the objective the momentum is discarded and a
    plain gradient step is taken from the last iterate instead, so the
    iterates' values never increase beyond rounding noise. Momentum is also
    reset when the gradient at the extrapolated point makes an acute angle
    with the step just taken. Stops once the gradient infinity-norm at the
    iterate is at most ``cfg.tolerance``.

    ``callback(x, f)`` is called after every accepted iterate.
    """
    cfg = cfg or SolverConfig()
    x = np.array(init, dtype=np.float64).reshape(-1)
    if x.size != obj.dimension:
        raise InputError(f"init has {x.size} entries, objective expects {obj.dimension}")
    fx, gx = obj.both(x)
    _finite(fx, gx, x)
    gnorm = float(np.max(np.abs(gx))) if gx.size else 0.0
    if gnorm <= cfg.tolerance:
        return SolverResult(x, fx, 0, gnorm, True)

    y, fy, gy = x, fx, gx
    t = 1.0
    step = cfg.initial_step
    grow = 1.0 / math.sqrt(cfg.shrink)
    it = 0
    while it < cfg.max_iterations:
        it += 1
        while True:
            z = y - step * gy
            fz, gz = obj.both(z)
            if not math.isfinite(fz):
                step *= cfg.shrink
            elif (sufficient_decrease(fz, fy, gy, z - y, step)
                  and curvature_ok(gz, gy, z - y, step)):
                break
            else:
                step *= cfg.shrink
            if step < 1e-300:
                raise NumericalError("line search failed to find a decreasing step", y)
        if fz > fx + decrease_slack(fx) and y is not x:
            # Momentum overshot; restart from the last iterate.
            y, fy, gy = x, fx, gx
            t = 1.0
            continue
        _finite(fz, gz, z)
        if y is not x and float(gy @ (z - x)) > 0:
            # First-order form of the same test; it still works once value
            # differences are lost to rounding near the optimum.
            t = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_next
        x_prev = x
        x, fx, gx = z, fz, gz
        t = t_next
        if callback is not None:
            callback(x, fx)
        gnorm = float(np.max(np.abs(gx)))
        if gnorm <= cfg.tolerance:
            return SolverResult(x, fx, it, gnorm, True)
        if momentum > 0:
            y = x + momentum * (x - x_prev)
            fy, gy = obj.both(y)
            if not math.isfinite(fy) or not np.all(np.isfinite(gy)):
                y, fy, gy, t = x, fx, gx, 1.0
        else:
            y, fy, gy = x, fx, gx
        step *= grow
    return SolverResult(x, fx, it, gnorm, False)
