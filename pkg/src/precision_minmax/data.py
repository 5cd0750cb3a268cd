"""LIBSVM ingestion, equal partitioning across agents, synthetic data."""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np


class DataFormatError(ValueError):
    """Malformed dataset input."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d), dense
    labels: np.ndarray  # (N,), values in {-1, +1}

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataFormatError(f"shape mismatch: features {X.shape}, labels {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataFormatError("features contain NaN or Inf")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataFormatError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]


def _parse_label(token: str, lineno: int) -> tuple[float, bool]:
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric label {token!r}") from None
    if value == 0.0:
        return -1.0, True
    if value in (-1.0, 1.0):
        return value, False
    raise DataFormatError(f"line {lineno}: label {token!r} is not in {{-1, 0, +1}}")


def parse_libsvm(stream: TextIO | Iterable[str]) -> Dataset:
    """Parse LIBSVM text (``<label> <idx>:<val> ...``, 1-based ascending indices).

    Labels ``0`` are mapped to ``-1``. The feature dimension is the largest
    index seen; absent entries are zero.
    """
    labels: list[float] = []
    rows: list[tuple[list[int], list[float]]] = []
    remapped = 0
    d = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label, was_zero = _parse_label(tokens[0], lineno)
        remapped += was_zero
        idx: list[int] = []
        vals: list[float] = []
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise DataFormatError(f"line {lineno}: expected idx:val, got {tok!r}")
            try:
                k = int(key)
            except ValueError:
                raise DataFormatError(f"line {lineno}: bad feature index {key!r}") from None
            try:
                v = float(val)
            except ValueError:
                raise DataFormatError(f"line {lineno}: non-numeric value {val!r}") from None
            if k < 1 or (idx and k <= idx[-1]):
                raise DataFormatError(f"line {lineno}: indices must be 1-based and ascending")
            idx.append(k)
            vals.append(v)
        if idx:
            d = max(d, idx[-1])
        labels.append(label)
        rows.append((idx, vals))
    if remapped:
        warnings.warn(f"remapped {remapped} labels from 0 to -1", stacklevel=2)
    X = np.zeros((len(rows), d))
    for r, (idx, vals) in enumerate(rows):
        if idx:
            X[r, np.asarray(idx) - 1] = vals
    return Dataset(X, np.asarray(labels))


def load_libsvm(path: str | Path) -> Dataset:
    with open(path) as fh:
        return parse_libsvm(fh)


def serialize_libsvm(ds: Dataset) -> str:
    """Inverse of :func:`parse_libsvm` (zeros omitted, full float precision)."""
    out = io.StringIO()
    for row, label in zip(ds.features, ds.labels):
        items = " ".join(f"{k + 1}:{float(row[k])!r}" for k in np.flatnonzero(row))
        out.write(f"{int(label):+d} {items}".rstrip() + "\n")
    return out.getvalue()


def partition_equal(ds: Dataset, m: int, seed: int) -> list[Dataset]:
    """Shuffle, drop the remainder, and give each of ``m`` agents ``N // m`` samples."""
    N = len(ds)
    if m < 1:
        raise ValueError("need at least one agent")
    if N < m:
        raise ValueError(f"cannot give {m} agents a sample each from {N} samples")
    n = N // m
    perm = np.random.default_rng(seed).permutation(N)[: m * n]
    return [
        Dataset(ds.features[perm[i * n:(i + 1) * n]], ds.labels[perm[i * n:(i + 1) * n]])
        for i in range(m)
    ]


def generate_synthetic_classification(N: int, d: int, seed: int, flip: float = 0.1,
                                      return_coef: bool = False):
    """Gaussian features labelled by a random hyperplane through the origin.

    Each label is flipped independently with probability ``flip``. With
    ``return_coef=True`` the generating hyperplane is returned as well.
    """
    if N < 1 or d < 1:
        raise ValueError("N and d must be positive")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    X = rng.standard_normal((N, d))
    y = np.where(X @ w >= 0.0, 1.0, -1.0)
    y[rng.random(N) < flip] *= -1.0
    ds = Dataset(X, y)
    return (ds, w) if return_coef else ds
