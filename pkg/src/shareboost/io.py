"""Dataset files, feature scaling and model files.

Two dataset formats are read:

* ``csv``: comma-separated rows with an optional header. The label column
  is chosen by header name or by index (default: last column).
* ``sparse``: one example per line, ``label idx:value idx:value ...`` with
  1-based integer labels and 1-based feature indices.

Models are stored as JSON with sorted keys and round-trip float repr, so
identical models produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .features import map_from_dict
from .model import Dataset, WeightModel

FORMATS = ("csv", "sparse")
MODEL_FORMAT = "shareboost-model"
MODEL_VERSION = 1


# --------------------------------------------------------------------------
# Scaling


@dataclass
class ScalingTransform:
    """Affine map ``(v - shift) * scale`` applied to raw feature vectors."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=np.float64).reshape(-1)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(-1)
        if self.shift.shape != self.scale.shape:
            raise InputError("shift and scale must have the same length")

    @classmethod
    def identity(cls, d) -> "ScalingTransform":
        return cls(np.zeros(d), np.ones(d))

    @property
    def dimension(self) -> int:
        return self.shift.shape[0]

    def apply(self, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=np.float64))
        if V.shape[1] != self.dimension:
            raise InputError(f"inputs have {V.shape[1]} features, scaling expects {self.dimension}")
        return (V - self.shift) * self.scale

    def to_dict(self):
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, spec) -> "ScalingTransform":
        try:
            return cls(np.array(spec["shift"], dtype=np.float64),
                       np.array(spec["scale"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad scaling record: {exc}") from None


def scale_features(data: Dataset, keep_bounded=False):
    """Map every feature's training range onto ``[-1, 1]``.

    The midpoint of the range goes to 0. A constant feature gets scale 0
    and maps to 0. With ``keep_bounded`` and data already inside ``[-1, 1]``
    the identity transform is used. Returns ``(scaled_dataset, transform)``.
    """
    if data.m == 0:
        raise InputError("dataset is empty")
    if keep_bounded and data.bounded:
        tr = ScalingTransform.identity(data.d)
        return data.with_features(data.X.copy()), tr
    lo = data.X.min(axis=0)
    hi = data.X.max(axis=0)
    width = hi - lo
    scale = np.zeros(data.d)
    nz = width > 0
    scale[nz] = 2.0 / width[nz]
    shift = lo + width / 2.0
    tr = ScalingTransform(shift, scale)
    return data.with_features(np.clip(tr.apply(data.X), -1.0, 1.0)), tr


# --------------------------------------------------------------------------
# Dataset files


def _parse_float(tok, where):
    try:
        v = float(tok)
    except ValueError:
        raise InputError(f"{where}: cannot parse {tok!r} as a number") from None
    if not np.isfinite(v):
        raise InputError(f"{where}: non-finite value {tok!r}")
    return v


def _is_int(tok):
    try:
        int(tok)
    except ValueError:
        return False
    return True


def _normalize_label(tok):
    tok = tok.strip()
    return str(int(tok)) if _is_int(tok) else tok


def _read_csv(path, label_col):
    with open(path, newline="") as fh:
        rows = [(n, r) for n, r in enumerate(csv.reader(fh), start=1)
                if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no data rows")
    n0, first = rows[0]
    ncol = len(first)
    if ncol < 2:
        raise InputError(f"{path}:{n0}: need at least one feature and a label")

    header = None
    if isinstance(label_col, str) and not _is_int(label_col):
        header = [c.strip() for c in first]
        if label_col not in header:
            raise InputError(f"{path}:{n0}: no column named {label_col!r}")
        li = header.index(label_col)
    else:
        li = int(label_col) if label_col is not None else -1
        if not -ncol <= li < ncol:
            raise InputError(f"label column {li} out of range for {ncol} columns")
        li %= ncol
        try:
            [float(c) for i, c in enumerate(first) if i != li]
        except ValueError:
            header = [c.strip() for c in first]
    body = rows[1:] if header is not None else rows
    if not body:
        raise InputError(f"{path}: no data rows")

    X, labels, lines = [], [], []
    for n, r in body:
        where = f"{path}:{n}"
        if len(r) != ncol:
            raise InputError(f"{where}: expected {ncol} fields, found {len(r)}")
        X.append([_parse_float(c, where) for i, c in enumerate(r) if i != li])
        labels.append(_normalize_label(r[li]))
        lines.append(n)
    return np.array(X, dtype=np.float64), labels, lines


def _read_sparse(path, d=None):
    entries, labels, lines = [], [], []
    max_idx = 0
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            toks = line.split()
            if not toks:
                continue
            where = f"{path}:{n}"
            label = toks[0]
            if not _is_int(label) or int(label) < 1:
                raise InputError(f"{where}: label {label!r} is not a positive integer")
            row = {}
            for tok in toks[1:]:
                idx, sep, val = tok.partition(":")
                if not sep or not _is_int(idx) or int(idx) < 1:
                    raise InputError(f"{where}: malformed entry {tok!r}")
                i = int(idx)
                if i in row:
                    raise InputError(f"{where}: feature {i} given twice")
                row[i] = _parse_float(val, where)
                max_idx = max(max_idx, i)
            entries.append(row)
            labels.append(str(int(label)))
            lines.append(n)
    if not entries:
        raise InputError(f"{path}: no data rows")
    if d is None:
        d = max_idx
    elif max_idx > d:
        raise InputError(f"{path}: feature index {max_idx} exceeds declared dimension {d}")
    if d < 1:
        raise InputError(f"{path}: no features")
    X = np.zeros((len(entries), d))
    for r, row in enumerate(entries):
        for i, v in row.items():
            X[r, i - 1] = v
    return X, labels, lines


def read_rows(path, fmt="csv", label_col=None, d=None):
    """Parse a dataset file into ``(X, label_tokens, line_numbers)``."""
    if fmt not in FORMATS:
        raise InputError(f"unknown format {fmt!r}")
    if fmt == "csv":
        X, labels, lines = _read_csv(path, label_col)
        if d is not None and X.shape[1] != d:
            raise InputError(f"{path}: {X.shape[1]} features, expected {d}")
        return X, labels, lines
    return _read_sparse(path, d)


def _vocabulary(fmt, tokens):
    if fmt == "sparse":
        return [str(i) for i in range(1, max(int(t) for t in tokens) + 1)]
    uniq = set(tokens)
    if all(_is_int(t) for t in uniq):
        return [str(v) for v in sorted(int(t) for t in uniq)]
    return sorted(uniq)


def load_dataset(path, fmt="csv", label_col=None, classes=None, d=None) -> Dataset:
    """Read a dataset file with 0-based internal labels.

    Labels are matched against ``classes`` when given (e.g. those stored in a
    model). Otherwise sparse files use classes ``1..max label`` and csv files
    use their sorted distinct label tokens, numerically when all are integers.
    """
    X, tokens, lines = read_rows(path, fmt, label_col, d)
    if classes is None:
        classes = _vocabulary(fmt, tokens)
    classes = [str(c) for c in classes]
    index = {c: i for i, c in enumerate(classes)}
    y = np.empty(len(tokens), dtype=np.int64)
    for r, (tok, n) in enumerate(zip(tokens, lines)):
        if tok not in index:
            raise InputError(f"{path}:{n}: unknown label {tok!r}")
        y[r] = index[tok]
    return Dataset(X, y, len(classes), classes)


def _label_tokens(data: Dataset):
    if data.classes is not None:
        return [data.classes[c] for c in data.y]
    return [str(c + 1) for c in data.y]


def write_dataset(path, data: Dataset, fmt="csv"):
    """Write ``data`` so that :func:`load_dataset` reads it back exactly.

    Without class names, labels are written 1-based.
    """
    tokens = _label_tokens(data)
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"f{j + 1}" for j in range(data.d)] + ["label"])
            for x, t in zip(data.X, tokens):
                w.writerow([repr(float(v)) for v in x] + [t])
        elif fmt == "sparse":
            for x, t in zip(data.X, tokens):
                parts = [f"{j + 1}:{float(x[j])!r}" for j in np.flatnonzero(x)]
                fh.write(" ".join([t] + parts) + "\n")
        else:
            raise InputError(f"unknown format {fmt!r}")


# --------------------------------------------------------------------------
# Model files


def model_to_dict(model: WeightModel) -> dict:
    support = [int(j) for j in model.support]
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "k": model.k,
        "d": model.d,
        "support": support,
        "weights": model.W[:, support].tolist(),
        "feature_map": None if model.feature_map is None else model.feature_map.to_dict(),
        "scaling": None if model.scaling is None else model.scaling.to_dict(),
        "classes": model.classes,
        "meta": model.meta,
    }


def model_from_dict(doc) -> WeightModel:
    try:
        if doc.get("format") != MODEL_FORMAT:
            raise InputError("not a model file")
        if doc.get("version") != MODEL_VERSION:
            raise InputError(f"unsupported model version {doc.get('version')!r}")
        k, d = int(doc["k"]), int(doc["d"])
        support = [int(j) for j in doc["support"]]
        block = np.array(doc["weights"], dtype=np.float64).reshape(k, len(support))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"malformed model file: {exc}") from None
    if len(set(support)) != len(support) or any(not 0 <= j < d for j in support):
        raise InputError("model support indices are invalid")
    W = np.zeros((k, d))
    W[:, support] = block
    fmap = None if doc.get("feature_map") is None else map_from_dict(doc["feature_map"])
    if fmap is not None and fmap.output_dimension != d:
        raise InputError("feature map output does not match the weight matrix")
    scaling = None if doc.get("scaling") is None else ScalingTransform.from_dict(doc["scaling"])
    classes = doc.get("classes")
    if classes is not None and len(classes) != k:
        raise InputError("model class list does not match k")
    return WeightModel(W, support, fmap, scaling, classes, dict(doc.get("meta") or {}))


def dumps_model(model: WeightModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n"


def save_model(path, model: WeightModel):
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> WeightModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: not a model file")
    return model_from_dict(doc)
