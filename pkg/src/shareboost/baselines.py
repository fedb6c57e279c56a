"""Comparison methods: greedy one-vs-rest logistic regression and entrywise
l1 / squared-l2 regularized training of the full weight matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, NumericalError
from .model import Dataset, Regularizer, loss_avg, mixed_norm, zero_one_error
from .solver import (
    SmoothObjective,
    SolverConfig,
    SolverResult,
    decrease_slack,
    minimize_smooth,
    sufficient_decrease,
)
from .trainer import _collapse_rows, restricted_objective

# --------------------------------------------------------------------------
# One-vs-rest


def binary_logistic_objective(X, z) -> SmoothObjective:
    """Mean of ``log(1 + exp(-z_i <w, x_i>))`` over rows, ``z_i`` in {-1, +1}."""
    XU, zu, w = _collapse_rows(X, z)
    zu = zu.astype(np.float64)

    def value(theta):
        return float(w @ np.logaddexp(0.0, -zu * (XU @ theta)))

    def value_and_gradient(theta):
        margin = zu * (XU @ theta)
        f = float(w @ np.logaddexp(0.0, -margin))
        # sigma(-margin) without overflow
        sig = np.exp(-np.logaddexp(0.0, margin))
        g = -(w * zu * sig) @ XU
        return f, g

    return SmoothObjective(X.shape[1], value, lambda th: value_and_gradient(th)[1],
                           value_and_gradient)


def binary_gradient(X, z, theta) -> np.ndarray:
    margin = z * (X @ theta)
    sig = np.exp(-np.logaddexp(0.0, margin))
    return -(z * sig) @ X / X.shape[0]


@dataclass
class OneVsRestModel:
    """Row ``c`` of ``W`` scores class ``c`` against the rest."""

    W: np.ndarray
    supports: list

    @property
    def union_support(self) -> list:
        return sorted(set().union(*map(set, self.supports)))

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.atleast_2d(X) @ self.W.T, axis=1)

    def error(self, data: Dataset) -> float:
        return float(np.mean(self.predict(data.X) != data.y))


@dataclass
class OneVsRestRound:
    round: int
    union_support: int
    train_err: float


def one_vs_rest_train(data: Dataset, rounds_per_class: int, solver: SolverConfig | None = None,
                      early_stop_score=1e-10, target_error=None):
    """Greedy forward selection for each class-vs-rest logistic problem.

    Round ``t`` adds to every binary model the feature with the largest
    absolute gradient coordinate and refits that model on its support.
    Returns ``(OneVsRestModel, rounds)``, where ``rounds`` records the union
    support and multiclass training error after each round. With
    ``target_error`` set, training stops after the first round whose
    training error is at or below it.
    """
    if data.m == 0:
        raise InputError("dataset is empty")
    if rounds_per_class < 1:
        raise InputError("rounds_per_class must be at least 1")
    solver = solver or SolverConfig()
    k, d = data.k, data.d
    W = np.zeros((k, d))
    supports = [[] for _ in range(k)]
    labels = [np.where(data.y == c, 1.0, -1.0) for c in range(k)]
    history = []
    for t in range(1, rounds_per_class + 1):
        for c in range(k):
            g = binary_gradient(data.X, labels[c], W[c])
            j = int(np.argmax(np.abs(g)))
            if abs(g[j]) <= early_stop_score:
                continue
            if j not in supports[c]:
                supports[c].append(j)
            cols = supports[c]
            obj = binary_logistic_objective(data.X[:, cols], labels[c])
            res = minimize_smooth(obj, W[c, cols], solver)
            W[c, cols] = res.point
        model = OneVsRestModel(W.copy(), [list(s) for s in supports])
        history.append(OneVsRestRound(t, len(model.union_support), model.error(data)))
        if target_error is not None and history[-1].train_err <= target_error:
            break
    return OneVsRestModel(W, supports), history


# --------------------------------------------------------------------------
# Entrywise regularization path


@dataclass(frozen=True)
class EntrywiseRegConfig:
    """``p = 1`` penalizes ``sum |W_ij|``; ``p = 2`` penalizes ``sum W_ij**2``."""

    p: int
    lambdas: tuple

    def __post_init__(self):
        if self.p not in (1, 2):
            raise InputError("p must be 1 or 2")
        lams = tuple(float(v) for v in self.lambdas)
        if not lams:
            raise InputError("lambda grid is empty")
        if any(v < 0 for v in lams) or list(lams) != sorted(lams, reverse=True):
            raise InputError("lambda grid must be nonnegative and descending")
        object.__setattr__(self, "lambdas", lams)


@dataclass
class PathPoint:
    lam: float
    W: np.ndarray
    support_count: int
    loss: float
    train_err: float
    converged: bool
    extra: dict = field(default_factory=dict)


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_step(x, g, step, lam):
    """One proximal gradient step for ``f + lam * |.|_1``."""
    return soft_threshold(x - step * g, step * lam)


def minimize_l1(obj: SmoothObjective, init, lam, cfg: SolverConfig | None = None) -> SolverResult:
    """Accelerated proximal gradient for ``obj + lam * |x|_1``.

    Same backtracking and restart scheme as :func:`minimize_smooth`; the
    stopping test is on the infinity-norm of the gradient mapping
    ``(x - prox(x - step * g)) / step``.
    """
    cfg = cfg or SolverConfig()
    x = np.array(init, dtype=np.float64).reshape(-1)
    fx, gx = obj.both(x)

    def total(f, v):
        return f + lam * float(np.abs(v).sum())

    Fx = total(fx, x)
    y, fy, gy = x, fx, gx
    t = 1.0
    step = cfg.initial_step
    grow = 1.0 / math.sqrt(cfg.shrink)
    gnorm = math.inf
    it = 0
    while it < cfg.max_iterations:
        it += 1
        while True:
            z = prox_step(y, gy, step, lam)
            fz, gz = obj.both(z)
            if math.isfinite(fz) and sufficient_decrease(fz, fy, gy, z - y, step):
                break
            step *= cfg.shrink
            if step < 1e-300:
                raise NumericalError("line search failed to find a decreasing step", y)
        Fz = total(fz, z)
        if Fz > Fx + decrease_slack(Fx) and y is not x:
            y, fy, gy, t = x, fx, gx, 1.0
            continue
        x_prev = x
        x, fx, gx, Fx = z, fz, gz, Fz
        gnorm = float(np.max(np.abs(x - prox_step(x, gx, step, lam)))) / step
        if gnorm <= cfg.tolerance:
            return SolverResult(x, Fx, it, gnorm, True)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_next
        t = t_next
        if momentum > 0:
            y = x + momentum * (x - x_prev)
            fy, gy = obj.both(y)
        else:
            y, fy, gy = x, fx, gx
        step *= grow
    return SolverResult(x, Fx, it, gnorm, False)


def l1_lambda_max(data: Dataset) -> float:
    """Smallest l1 weight at which ``W = 0`` is optimal."""
    obj = restricted_objective(data, range(data.d))
    _, g = obj.both(np.zeros(data.k * data.d))
    return float(np.max(np.abs(g)))


def entrywise_reg_train(data: Dataset, cfg: EntrywiseRegConfig, solver: SolverConfig | None = None,
                        zero_threshold=1e-8) -> list:
    """Solve ``min L(W) + lam * penalty(W)`` along a descending grid.

    Each point warm-starts from the previous solution. ``support_count`` is
    the number of columns whose largest magnitude exceeds ``zero_threshold``.
    """
    if data.m == 0:
        raise InputError("dataset is empty")
    solver = solver or SolverConfig()
    k, d = data.k, data.d
    theta = np.zeros(k * d)
    path = []
    for lam in cfg.lambdas:
        if cfg.p == 2:
            obj = restricted_objective(data, range(d), Regularizer("frobenius", lam))
            res = minimize_smooth(obj, theta, solver)
        else:
            obj = restricted_objective(data, range(d))
            res = minimize_l1(obj, theta, lam, solver)
        theta = res.point
        W = theta.reshape(k, d).copy()
        count = int(np.count_nonzero(np.abs(W).max(axis=0) > zero_threshold))
        path.append(PathPoint(
            lam=lam, W=W, support_count=count, loss=loss_avg(W, data),
            train_err=zero_one_error(W, data), converged=res.converged,
            extra={"objective": res.value, "l1": mixed_norm(W, 1, 1)},
        ))
    return path
