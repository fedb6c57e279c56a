"""Synthetic datasets where a few shared features suffice.

The code dataset appends to a short +-1 binary code of the label a one-hot
block scaled by ``2 ln k``; both a ``log2 k``-column shared matrix and a
``k``-column per-class matrix classify it perfectly. The block dataset
repeats the code ``s`` times and zeroes one copy in a fraction of examples.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .model import Dataset


def _check_power_of_two(k):
    if not isinstance(k, (int, np.integer)) or k < 2 or k & (k - 1):
        raise InputError(f"class count must be a power of two >= 2, got {k}")


def code_length(k) -> int:
    _check_power_of_two(k)
    return int(k).bit_length() - 1


def binary_code(label, k) -> np.ndarray:
    """+-1 code of a 0-based label, most significant bit first.

    Label ``c`` encodes ``(c + 1) mod k`` with bit 0 written as -1, so for
    ``k = 4`` labels 0..3 get [-1, 1], [1, -1], [1, 1], [-1, -1].
    """
    n = code_length(k)
    value = (int(label) + 1) % k
    bits = [(value >> (n - 1 - b)) & 1 for b in range(n)]
    return np.array([1.0 if bit else -1.0 for bit in bits])


def code_matrix(k) -> np.ndarray:
    """``k x log2 k`` matrix whose row ``c`` is the code of label ``c``."""
    return np.array([binary_code(c, k) for c in range(k)])


@dataclass(frozen=True)
class CodeDatasetSpec:
    k: int
    m: int

    def __post_init__(self):
        _check_power_of_two(self.k)
        if self.m < 1:
            raise InputError("m must be positive")

    @property
    def code_length(self) -> int:
        return code_length(self.k)

    @property
    def multiplier(self) -> float:
        return 2.0 * math.log(self.k)

    @property
    def d(self) -> int:
        return self.code_length + self.k


@dataclass(frozen=True)
class BlockDatasetSpec:
    k: int
    s: int
    m: int
    eps: float

    def __post_init__(self):
        _check_power_of_two(self.k)
        if self.s < 2:
            raise InputError("need at least two blocks")
        if not 0 <= self.eps < 1:
            raise InputError("eps must lie in [0, 1)")
        if self.m < 1:
            raise InputError("m must be positive")

    @property
    def code_length(self) -> int:
        return code_length(self.k)

    @property
    def d(self) -> int:
        return self.s * self.code_length

    def block(self, b) -> range:
        n = self.code_length
        return range(b * n, (b + 1) * n)


@dataclass
class ReferencePair:
    W_shared: np.ndarray
    W_flat: np.ndarray


def code_features(labels, spec: CodeDatasetSpec) -> np.ndarray:
    codes = code_matrix(spec.k)[labels]
    onehot = np.zeros((len(labels), spec.k))
    onehot[np.arange(len(labels)), labels] = spec.multiplier
    return np.hstack([codes, onehot])


def gen_code_dataset(spec: CodeDatasetSpec, label_noise=0.0, seed=0) -> Dataset:
    """Rows ``[code(y), 2 ln(k) e_y]`` with uniformly drawn labels.

    With ``label_noise > 0`` each label is replaced, with that probability,
    by a uniformly chosen different class after the features are built.
    """
    if not 0 <= label_noise < 0.5:
        raise InputError("label noise must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    y = rng.integers(spec.k, size=spec.m)
    X = code_features(y, spec)
    if label_noise > 0:
        flip = rng.random(spec.m) < label_noise
        shift = rng.integers(1, spec.k, size=spec.m)
        y = np.where(flip, (y + shift) % spec.k, y)
    return Dataset(X, y, spec.k)


def gen_block_dataset(spec: BlockDatasetSpec, seed=0) -> Dataset:
    """``s`` copies of the label code; the last ``eps * m`` rows each have one
    copy zeroed, cycling through the blocks in order."""
    n_zeroed = spec.eps * spec.m
    n2 = int(round(n_zeroed))
    if n2 != n_zeroed:
        warnings.warn(f"eps * m = {n_zeroed} is not integral; zeroing {n2} examples")
    rng = np.random.default_rng(seed)
    y = rng.integers(spec.k, size=spec.m)
    X = np.tile(code_matrix(spec.k)[y], (1, spec.s))
    first_zeroed = spec.m - n2
    for j in range(n2):
        X[first_zeroed + j, list(spec.block(j % spec.s))] = 0.0
    return Dataset(X, y, spec.k)


def reference_matrices(spec) -> ReferencePair:
    """The shared (``log2 k`` columns) and flat reference matrices."""
    codes = code_matrix(spec.k)
    n = spec.code_length
    W_shared = np.zeros((spec.k, spec.d))
    W_shared[:, :n] = codes
    if isinstance(spec, CodeDatasetSpec):
        W_flat = np.zeros((spec.k, spec.d))
        W_flat[:, n:] = np.eye(spec.k)
    elif isinstance(spec, BlockDatasetSpec):
        W_flat = np.tile(codes, (1, spec.s)) / spec.s
    else:
        raise InputError(f"unknown dataset spec {type(spec).__name__}")
    return ReferencePair(W_shared, W_flat)


def flat_loss_closed_form(k, c) -> float:
    """Average loss of ``c * W_flat`` on the noiseless code dataset."""
    return math.log1p((k - 1) * math.exp(1.0 - 2.0 * c * math.log(k)))
