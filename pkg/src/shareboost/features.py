"""Non-linear feature constructions.

Each map turns raw vectors ``v`` of dimension ``p`` into the features ``x``
seen by the linear model:

* identity: ``x = v``
* stumps: ``x_j = 1[v_i <= theta]`` for a list of (i, theta) pairs
* quadratic: ``v`` followed by every product ``v_i v_j`` with ``i <= j``
* anchors: for every (center, radius) piece, ``1[|v - c| < r] * [v, 1]``;
  the ``p + 1`` columns of a piece form one selection group.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .model import Dataset, scores_loss


def _as_rows(V, p):
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if V.shape[1] != p:
        raise InputError(f"raw vectors have {V.shape[1]} entries, map expects {p}")
    return V


@dataclass(frozen=True)
class IdentityMap:
    raw_dimension: int
    kind = "identity"

    @property
    def output_dimension(self) -> int:
        return self.raw_dimension

    @property
    def groups(self):
        return None

    def transform(self, V):
        return _as_rows(V, self.raw_dimension)

    def to_dict(self):
        return {"kind": self.kind, "raw_dimension": self.raw_dimension}


@dataclass(frozen=True)
class QuadraticMap:
    raw_dimension: int
    kind = "quadratic"

    @property
    def output_dimension(self) -> int:
        p = self.raw_dimension
        return p + p * (p + 1) // 2

    @property
    def groups(self):
        return None

    def transform(self, V):
        V = _as_rows(V, self.raw_dimension)
        i, j = np.triu_indices(self.raw_dimension)
        return np.hstack([V, V[:, i] * V[:, j]])

    def to_dict(self):
        return {"kind": self.kind, "raw_dimension": self.raw_dimension}


@dataclass(frozen=True)
class Stump:
    raw_feature: int
    threshold: float

    def __call__(self, V):
        return (np.asarray(V)[:, self.raw_feature] <= self.threshold).astype(np.float64)


@dataclass(frozen=True)
class StumpMap:
    raw_dimension: int
    stumps: tuple = ()
    kind = "stumps"

    @property
    def output_dimension(self) -> int:
        return len(self.stumps)

    @property
    def groups(self):
        return None

    def transform(self, V):
        V = _as_rows(V, self.raw_dimension)
        if not self.stumps:
            return np.zeros((V.shape[0], 0))
        return np.column_stack([s(V) for s in self.stumps])

    def append(self, stump: Stump) -> "StumpMap":
        return StumpMap(self.raw_dimension, self.stumps + (stump,))

    def to_dict(self):
        return {
            "kind": self.kind,
            "raw_dimension": self.raw_dimension,
            "stumps": [[s.raw_feature, s.threshold] for s in self.stumps],
        }


@dataclass(frozen=True)
class AnchorSet:
    """Piece centers (``q x p``) and their radii (``q``)."""

    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        r = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        if c.shape[0] < 1 or c.shape[0] != r.shape[0]:
            raise InputError("need one radius per center and at least one center")
        if np.any(~(r > 0)):
            raise InputError("radii must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    @property
    def q(self) -> int:
        return self.centers.shape[0]

    @property
    def p(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class AnchorMap:
    anchors: AnchorSet
    kind = "anchors"

    @property
    def raw_dimension(self) -> int:
        return self.anchors.p

    @property
    def output_dimension(self) -> int:
        return self.anchors.q * (self.anchors.p + 1)

    @property
    def groups(self):
        w = self.anchors.p + 1
        return [list(range(j * w, (j + 1) * w)) for j in range(self.anchors.q)]

    def active(self, V):
        """``(n, q)`` boolean matrix of which pieces contain each row."""
        V = _as_rows(V, self.raw_dimension)
        dist = np.linalg.norm(V[:, None, :] - self.anchors.centers[None], axis=2)
        return dist < self.anchors.radii[None]

    def transform(self, V):
        V = _as_rows(V, self.raw_dimension)
        mask = self.active(V).astype(np.float64)
        block = np.hstack([V, np.ones((V.shape[0], 1))])
        return (mask[:, :, None] * block[:, None, :]).reshape(V.shape[0], -1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "centers": self.anchors.centers.tolist(),
            "radii": self.anchors.radii.tolist(),
        }


def map_from_dict(spec):
    kind = spec.get("kind")
    if kind == "identity":
        return IdentityMap(int(spec["raw_dimension"]))
    if kind == "quadratic":
        return QuadraticMap(int(spec["raw_dimension"]))
    if kind == "stumps":
        stumps = tuple(Stump(int(i), float(t)) for i, t in spec["stumps"])
        return StumpMap(int(spec["raw_dimension"]), stumps)
    if kind == "anchors":
        return AnchorMap(AnchorSet(np.array(spec["centers"]), np.array(spec["radii"])))
    raise InputError(f"unknown feature map {kind!r}")


def apply_map(desc, v) -> np.ndarray:
    """Map a single raw vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InputError("apply_map takes a single raw vector")
    return desc.transform(v[None, :])[0]


# --------------------------------------------------------------------------
# Decision stumps


def stump_thresholds(values) -> np.ndarray:
    """Candidate thresholds for one raw feature, in ascending order.

    One below the minimum, the midpoints between consecutive distinct
    values, and one above the maximum.
    """
    u = np.unique(values)
    return np.concatenate([[u[0] - 1.0], (u[:-1] + u[1:]) / 2.0, [u[-1] + 1.0]])


def stump_scan(values, residuals):
    """Column score of every candidate stump on one raw feature.

    ``residuals`` is the ``(m, k)`` matrix ``rho - onehot(y)``. Returns
    ``(thresholds, scores)``. The data is sorted once; each threshold's
    gradient column is then a prefix sum of the sorted residual rows.
    """
    values = np.asarray(values, dtype=np.float64)
    m, k = residuals.shape
    order = np.argsort(values, kind="stable")
    sv = values[order]
    csum = np.cumsum(residuals[order], axis=0)
    # Last sorted position of each distinct value.
    last = np.flatnonzero(np.append(sv[1:] != sv[:-1], True))
    prefix = np.vstack([np.zeros((1, k)), csum[last]])
    scores = np.abs(prefix).sum(axis=1) / m
    thresholds = np.concatenate(
        [[sv[0] - 1.0], (sv[last[:-1]] + sv[last[:-1] + 1]) / 2.0, [sv[-1] + 1.0]]
    )
    return thresholds, scores


def best_stump(raw: Dataset, scores=None):
    """Highest-scoring stump ``1[v_i <= theta]`` at the current model.

    ``scores`` is the ``(m, k)`` matrix of current model scores on ``raw``
    (zeros when omitted). Returns ``(i, theta, score)``; ties go to the
    lowest feature, then the lowest threshold.
    """
    if raw.m == 0:
        raise InputError("dataset is empty")
    if scores is None:
        scores = np.zeros((raw.m, raw.k))
    _, R = scores_loss(np.asarray(scores, dtype=np.float64), raw.y)
    best = (0, -np.inf, -1.0)
    for i in range(raw.d):
        thresholds, s = stump_scan(raw.X[:, i], R)
        j = int(np.argmax(s))
        if s[j] > best[2]:
            best = (i, float(thresholds[j]), float(s[j]))
    return best


# --------------------------------------------------------------------------
# k-means and anchor construction


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia_history: list
    iterations: int

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dist(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans(points, q, seed=0, max_iter=100, tol=1e-6) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations.

    Stops when no center moves by ``tol`` or more, or after ``max_iter``
    iterations. A cluster that empties is re-seeded at the point farthest
    from its assigned center.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = X.shape[0]
    if q < 1:
        raise InputError("need at least one cluster")
    if q > np.unique(X, axis=0).shape[0]:
        raise InputError(f"{q} clusters requested but fewer distinct points")
    rng = np.random.default_rng(seed)

    centers = np.empty((q, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, q):
        idx = rng.choice(n, p=closest / closest.sum())
        centers[c] = X[idx]
        closest = np.minimum(closest, ((X - centers[c]) ** 2).sum(axis=1))

    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(X, centers)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
        new = centers.copy()
        for c in range(q):
            members = labels == c
            if members.any():
                new[c] = X[members].mean(axis=0)
        for c in range(q):
            if not np.any(labels == c):
                far = int(np.argmax(((X - new[labels]) ** 2).sum(axis=1)))
                new[c] = X[far]
                labels[far] = c
        moved = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if moved < tol:
            break
    d2 = _sq_dist(X, centers)
    labels = d2.argmin(axis=1)
    final = float(d2[np.arange(n), labels].sum())
    if final < history[-1]:
        history.append(final)
    return KMeansResult(centers, labels, history, it)


def build_anchor_map(raw: Dataset, q, radius_quantiles=(0.3, 0.5, 0.8), seed=0) -> AnchorMap:
    """Anchor pieces from k-means centers and distance quantiles.

    Each of the ``q`` centers is paired with every requested quantile of the
    distances from it to the training points, giving ``q * len(quantiles)``
    pieces.
    """
    quantiles = np.asarray(list(radius_quantiles), dtype=np.float64)
    if q < 1:
        raise InputError("need at least one anchor")
    if quantiles.size == 0 or np.any((quantiles <= 0) | (quantiles >= 1)):
        raise InputError("radius quantiles must lie in (0, 1)")
    centers = kmeans(raw.X, q, seed).centers
    tiny = np.nextafter(0.0, 1.0)
    all_centers, all_radii = [], []
    for c in centers:
        dist = np.linalg.norm(raw.X - c, axis=1)
        if np.all(dist == dist[0]):
            warnings.warn("all points are equidistant from an anchor; using one radius")
            radii = [np.nextafter(dist[0], np.inf)]
        else:
            radii = np.maximum(np.quantile(dist, quantiles), tiny)
        for r in radii:
            all_centers.append(c)
            all_radii.append(r)
    return AnchorMap(AnchorSet(np.array(all_centers), np.array(all_radii)))
