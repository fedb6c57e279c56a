"""Multiclass linear predictors, the soft-max loss and its gradient.

A predictor is a ``k x d`` matrix ``W``; an input ``x`` is scored by ``W @ x``
and classified by the arg-max of the scores. Training minimizes the average of

    loss(W, (x, y)) = log sum_c exp(1[c != y] - (Wx)_y + (Wx)_c)

which upper-bounds the 0-1 loss. Labels are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import InputError

REG_KINDS = ("none", "frobenius", "smooth_mixed_norm")


class LabeledExample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """``m`` examples stored row-wise in ``X`` with integer labels ``y``.

    ``k`` defaults to ``max(y) + 1``. ``classes`` optionally names each
    internal label with the token used in external files.
    """

    X: np.ndarray
    y: np.ndarray
    k: int | None = None
    classes: list[str] | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise InputError(
                f"{self.X.shape[0]} feature rows but {self.y.shape[0]} labels"
            )
        if self.k is None:
            self.k = int(self.y.max()) + 1 if self.y.size else 0
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.k):
            raise InputError(f"labels must lie in [0, {self.k})")
        if self.classes is not None and len(self.classes) != self.k:
            raise InputError("classes must name every label")

    @classmethod
    def from_examples(cls, examples, k=None):
        examples = list(examples)
        if not examples:
            raise InputError("no examples")
        d = len(examples[0].features)
        if any(len(e.features) != d for e in examples):
            raise InputError("examples disagree on the feature count")
        X = np.array([e.features for e in examples], dtype=np.float64)
        y = np.array([e.label for e in examples], dtype=np.int64)
        return cls(X, y, k)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def bounded(self) -> bool:
        """True when every feature value lies in ``[-1, 1]``."""
        return bool(np.all(np.abs(self.X) <= 1.0))

    def examples(self):
        for x, y in zip(self.X, self.y):
            yield LabeledExample(x, int(y))

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.k, self.classes)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.y, self.k, self.classes)


@dataclass(frozen=True)
class Regularizer:
    """Smooth penalty added to the average loss.

    ``frobenius`` is ``lam * sum W_ij**2``. ``smooth_mixed_norm`` replaces
    each column max in ``||W||_{inf,1}`` by a soft-max with sharpness ``beta``:
    ``lam / beta * sum_j log sum_i (exp(beta W_ij) + exp(-beta W_ij))``.
    """

    kind: str = "none"
    lam: float = 0.0
    beta: float = 100.0

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise InputError(f"unknown regularizer {self.kind!r}")
        if self.lam < 0:
            raise InputError("lambda must be nonnegative")
        if self.kind == "smooth_mixed_norm" and self.beta < 1:
            raise InputError("beta must be >= 1")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.lam > 0

    def value(self, W) -> float:
        if not self.active:
            return 0.0
        W = np.asarray(W, dtype=np.float64)
        if self.kind == "frobenius":
            return self.lam * float(np.sum(W * W))
        return self.lam * float(np.sum(smooth_column_max(W, self.beta)))

    def gradient(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=np.float64)
        if not self.active:
            return np.zeros_like(W)
        if self.kind == "frobenius":
            return 2.0 * self.lam * W
        # Entries of +-W, shifted by the column max for overflow safety.
        a = self.beta * np.abs(W)
        top = a.max(axis=0, keepdims=True)
        ep = np.exp(self.beta * W - top)
        en = np.exp(-self.beta * W - top)
        return self.lam * (ep - en) / (ep + en).sum(axis=0, keepdims=True)


def smooth_column_max(W, beta) -> np.ndarray:
    """Per-column ``(1/beta) log sum_i (e^{beta W_ij} + e^{-beta W_ij})``."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    a = beta * np.abs(W)
    top = a.max(axis=0)
    s = np.exp(beta * W - top).sum(axis=0) + np.exp(-beta * W - top).sum(axis=0)
    return (top + np.log(s)) / beta


def _check_dims(W, X):
    if W.ndim != 2:
        raise InputError("weight matrix must be two-dimensional")
    if X.shape[-1] != W.shape[1]:
        raise InputError(
            f"feature vector has length {X.shape[-1]}, model expects {W.shape[1]}"
        )


def scores_loss(scores, y, *, with_grad=True):
    """Soft-max loss of score vectors and its gradient with respect to them.

    ``scores`` is ``(m, k)`` (or a single ``k``-vector), ``y`` the labels.
    Returns ``(losses, R)`` where ``R = rho - onehot(y)`` is the gradient of
    each loss with respect to its score vector; ``R`` is None when
    ``with_grad`` is false.
    """
    single = np.ndim(scores) == 1
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    rows = np.arange(S.shape[0])
    Z = S - S[rows, y][:, None]
    Z += 1.0
    Z[rows, y] = 0.0
    top = Z.max(axis=1)
    E = np.exp(Z - top[:, None])
    # The y term is exp(-top); keeping it out of ``rest`` lets log1p and
    # rho_y - 1 stay accurate when the loss is tiny.
    E[rows, y] = 0.0
    rest = E.sum(axis=1)
    losses = top + np.log1p(np.expm1(-top) + rest)
    R = None
    if with_grad:
        total = np.exp(-top) + rest
        R = E / total[:, None]
        R[rows, y] = -rest / total
    if single:
        return losses[0], (None if R is None else R[0])
    return losses, R


def decision_scores(W, X) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    _check_dims(W, X)
    return X @ W.T


def predict(W, x):
    """Arg-max class of ``W @ x``; ties go to the lowest class index.

    ``x`` may be a single vector (returns an int) or a matrix of row vectors.
    """
    S = decision_scores(W, x)
    if S.ndim == 1:
        return int(np.argmax(S))
    return np.argmax(S, axis=1)


def loss_example(W, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("loss_example takes a single feature vector")
    _check_labels(y, np.shape(W)[0])
    loss, _ = scores_loss(decision_scores(W, x), y, with_grad=False)
    return float(loss)


def rho(W, x, y) -> np.ndarray:
    """Class posteriors ``rho_c`` of the soft-max loss at ``(x, y)``.

    Rows of ``x`` give rows of the result; every row sums to one.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_labels(y, np.shape(W)[0])
    S = np.atleast_2d(decision_scores(W, x))
    yy = np.broadcast_to(np.atleast_1d(np.asarray(y, dtype=np.int64)), (S.shape[0],))
    rows = np.arange(S.shape[0])
    Z = S - S[rows, yy][:, None] + 1.0
    Z[rows, yy] = 0.0
    E = np.exp(Z - Z.max(axis=1, keepdims=True))
    P = E / E.sum(axis=1, keepdims=True)
    return P[0] if x.ndim == 1 else P


def _check_labels(y, k):
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= k):
        raise InputError(f"labels must lie in [0, {k})")


def _nonempty(data: Dataset):
    if data.m == 0:
        raise InputError("dataset is empty")


def loss_avg(W, data: Dataset, reg: Regularizer | None = None) -> float:
    """Average soft-max loss over ``data`` plus the regularizer value."""
    _nonempty(data)
    W = np.asarray(W, dtype=np.float64)
    _check_labels(data.y, W.shape[0])
    losses, _ = scores_loss(decision_scores(W, data.X), data.y, with_grad=False)
    value = float(np.mean(losses))
    if reg is not None:
        value += reg.value(W)
    return value


def loss_and_gradient(W, data: Dataset, reg: Regularizer | None = None):
    """``(loss_avg, gradient)`` computed from one pass over the data."""
    _nonempty(data)
    W = np.asarray(W, dtype=np.float64)
    _check_labels(data.y, W.shape[0])
    losses, R = scores_loss(decision_scores(W, data.X), data.y)
    value = float(np.mean(losses))
    G = R.T @ data.X / data.m
    if reg is not None and reg.active:
        value += reg.value(W)
        G += reg.gradient(W)
    return value, G


def gradient(W, data: Dataset, reg: Regularizer | None = None) -> np.ndarray:
    """``k x d`` matrix of partial derivatives of :func:`loss_avg`.

    Entry ``(q, r)`` is ``mean over examples of x_r (rho_q - 1[q = y])``
    plus the regularizer gradient.
    """
    return loss_and_gradient(W, data, reg)[1]


def column_scores(G) -> np.ndarray:
    """l1 norm of every gradient column; the greedy selection criterion."""
    return np.abs(np.atleast_2d(G)).sum(axis=0)


def zero_one_error(W, data: Dataset) -> float:
    _nonempty(data)
    return float(np.mean(predict(W, data.X) != data.y))


_P_TAGS = {1: 1, 2: 2, np.inf: np.inf, "inf": np.inf}
_R_TAGS = {0: 0, 1: 1, 2: 2, np.inf: np.inf, "inf": np.inf}


def mixed_norm(W, p, r) -> float:
    """``||W||_{p,r}``: the p-norm of each column, then the r-norm across them.

    ``r = 0`` counts columns whose p-norm is exactly nonzero.
    """
    if p not in _P_TAGS or r not in _R_TAGS:
        raise InputError(f"unsupported norm pair ({p}, {r})")
    p, r = _P_TAGS[p], _R_TAGS[r]
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    cols = np.linalg.norm(W, ord=p, axis=0) if W.size else np.zeros(0)
    if r == 0:
        return float(np.count_nonzero(cols))
    if r == 1:
        return math.fsum(cols)
    if r == 2:
        return math.sqrt(math.fsum(cols * cols))
    return float(cols.max()) if cols.size else 0.0


def support_of(W) -> list[int]:
    """Indices of the nonzero columns of ``W``."""
    return np.flatnonzero(np.any(np.asarray(W) != 0, axis=0)).tolist()


@dataclass
class WeightModel:
    """A trained predictor together with what it needs to read raw inputs.

    ``W`` is ``k x d`` over mapped features; ``support`` lists the selected
    columns in selection order. ``feature_map`` turns a raw vector into the
    ``d`` mapped features and ``scaling`` is applied to raw vectors first.
    """

    W: np.ndarray
    support: list[int]
    feature_map: object = None
    scaling: object = None
    classes: list[str] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def raw_dimension(self) -> int:
        if self.feature_map is None:
            return self.d
        return self.feature_map.raw_dimension

    def transform(self, V) -> np.ndarray:
        """Scale and map raw row vectors into the model's feature space."""
        V = np.atleast_2d(np.asarray(V, dtype=np.float64))
        if V.shape[1] != self.raw_dimension:
            raise InputError(
                f"inputs have {V.shape[1]} features, model expects {self.raw_dimension}"
            )
        if self.scaling is not None:
            V = self.scaling.apply(V)
        if self.feature_map is not None:
            V = self.feature_map.transform(V)
        return V

    def decision_function(self, V) -> np.ndarray:
        X = self.transform(V)
        cols = list(self.support)
        return X[:, cols] @ self.W[:, cols].T

    def predict(self, V) -> np.ndarray:
        return np.argmax(self.decision_function(V), axis=1)
