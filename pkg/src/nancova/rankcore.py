"""Normalized empirical CDFs, mid/pseudo ranks and rank transforms.

Ties are resolved by exact equality of the stored floats. Ranks come from a
sort followed by two binary searches per value, which gives the left- and
right-continuous ECDF counts at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput


class WeightingMode(str, enum.Enum):
    """How group CDFs are averaged into the reference distribution."""

    WEIGHTED = "weighted"  # nu_i = n_i / N  -> mid ranks
    UNWEIGHTED = "unweighted"  # nu_i = 1 / a  -> pseudo ranks

    def weights(self, sizes: Sequence[int]) -> np.ndarray:
        sizes = np.asarray(sizes, dtype=float)
        if self is WeightingMode.WEIGHTED:
            return sizes / sizes.sum()
        return np.full(len(sizes), 1.0 / len(sizes))


@dataclass(frozen=True)
class Dataset:
    """Grouped observations; column 0 is the outcome, 1..d are covariates.

    ``groups[i]`` is an ``(n_i, d + 1)`` float array.
    """

    groups: tuple
    labels: tuple = None

    def __post_init__(self):
        groups = tuple(np.array(g, dtype=float, ndmin=2) for g in self.groups)
        if len(groups) < 2:
            raise InvalidInput(f"need at least 2 groups, got {len(groups)}")
        width = groups[0].shape[1]
        for i, g in enumerate(groups):
            if g.ndim != 2 or g.shape[1] != width:
                raise InvalidInput(
                    f"group {i} has shape {g.shape}; every row needs {width} values"
                )
            if g.shape[0] < 2:
                raise InvalidInput(f"group {i} has {g.shape[0]} rows; need at least 2")
            if not np.all(np.isfinite(g)):
                raise InvalidInput(f"group {i} contains non-finite values")
        for g in groups:
            g.setflags(write=False)
        labels = self.labels
        if labels is None:
            labels = tuple(str(i + 1) for i in range(len(groups)))
        labels = tuple(str(x) for x in labels)
        if len(labels) != len(groups):
            raise InvalidInput("one label per group is required")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_columns(cls, group_labels, outcome, covariates=()):
        """Build a dataset from long-format columns; groups ordered by sorted label.

        Sorting keeps every statistic, bootstrap draws included, independent
        of the row order of the input.
        """
        group_labels = [str(g) for g in group_labels]
        outcome = np.asarray(outcome, dtype=float)
        cols = [outcome] + [np.asarray(c, dtype=float) for c in covariates]
        table = np.column_stack(cols)
        order = sorted(set(group_labels))
        idx = np.array([order.index(g) for g in group_labels])
        return cls(tuple(table[idx == i] for i in range(len(order))), tuple(order))

    @property
    def a(self) -> int:
        return len(self.groups)

    @property
    def d(self) -> int:
        return self.groups[0].shape[1] - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.shape[0] for g in self.groups])

    @property
    def N(self) -> int:
        return int(self.sizes.sum())

    @property
    def values(self) -> np.ndarray:
        """All rows stacked group by group, shape ``(N, d + 1)``."""
        return np.vstack(self.groups)

    @property
    def group_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.a), self.sizes)

    def drop_covariates(self) -> "Dataset":
        return Dataset(tuple(g[:, :1] for g in self.groups), self.labels)

    def map_column(self, r: int, func) -> "Dataset":
        """Apply ``func`` to column ``r`` of every group."""
        out = []
        for g in self.groups:
            g = g.copy()
            g[:, r] = func(g[:, r])
            out.append(g)
        return Dataset(tuple(out), self.labels)


@dataclass(frozen=True)
class RankFrame:
    yhat: np.ndarray  # (N, d + 1), rows group-major
    sizes: np.ndarray
    mode: WeightingMode = WeightingMode.WEIGHTED
    group_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "group_index", np.repeat(np.arange(len(self.sizes)), self.sizes))

    @property
    def N(self) -> int:
        return int(self.yhat.shape[0])

    @property
    def a(self) -> int:
        return len(self.sizes)

    @property
    def d(self) -> int:
        return self.yhat.shape[1] - 1

    def group(self, i: int) -> np.ndarray:
        start = int(self.sizes[:i].sum())
        return self.yhat[start : start + int(self.sizes[i])]


def _as_finite(values, name="values") -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if np.isnan(arr).any():
        raise InvalidInput(f"{name} contain NaN")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contain infinite entries")
    return arr


def _ecdf_counts(sample_sorted: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``#{s < x} + #{s <= x}`` for every x, i.e. twice the normalized count."""
    left = np.searchsorted(sample_sorted, x, side="left")
    right = np.searchsorted(sample_sorted, x, side="right")
    return left + right


def normalized_ecdf(sample, x):
    """Average of the left- and right-continuous empirical CDFs at ``x``.

    >>> normalized_ecdf([1, 2, 2], 2)
    0.6666666666666666
    """
    s = np.sort(_as_finite(sample, "sample"))
    if s.size == 0:
        raise InvalidInput("sample must be nonempty")
    xs = np.asarray(x, dtype=float)
    out = _ecdf_counts(s, xs) / (2.0 * s.size)
    return float(out) if out.ndim == 0 else out


def mid_ranks(values) -> np.ndarray:
    v = _as_finite(values)
    if v.size == 0:
        raise InvalidInput("values must be nonempty")
    twice = _ecdf_counts(np.sort(v), v)
    return (twice + 1) / 2.0


def _group_slices(group_index, sizes):
    group_index = np.asarray(group_index)
    sizes = np.asarray(sizes, dtype=int)
    if np.any(sizes <= 0):
        raise InvalidInput("every group needs at least one member")
    if group_index.size != sizes.sum():
        raise InvalidInput("group_index length does not match the sum of sizes")
    counts = np.bincount(group_index, minlength=len(sizes))
    if len(counts) != len(sizes) or not np.array_equal(counts, sizes):
        raise InvalidInput("sizes are inconsistent with group_index")
    return group_index, sizes


def average_cdf(values, group_index, sizes, mode=WeightingMode.WEIGHTED) -> np.ndarray:
    """Evaluate the weighted average of group ECDFs at every observation."""
    v = _as_finite(values)
    group_index, sizes = _group_slices(group_index, sizes)
    mode = WeightingMode(mode)
    if mode is WeightingMode.WEIGHTED:
        # pooled form; keeps (R - 1/2) / N exact
        return _ecdf_counts(np.sort(v), v) / (2.0 * v.size)
    nu = mode.weights(sizes)
    h = np.zeros_like(v)
    for i, n_i in enumerate(sizes):
        s = np.sort(v[group_index == i])
        h += nu[i] * _ecdf_counts(s, v) / (2.0 * n_i)
    return h


def pseudo_ranks(values, group_index, sizes) -> np.ndarray:
    """``N * H(x) + 1/2`` with H the unweighted mean of the group ECDFs."""
    v = _as_finite(values)
    h = average_cdf(v, group_index, sizes, WeightingMode.UNWEIGHTED)
    return v.size * h + 0.5


def rank_transforms(data: Dataset, mode=WeightingMode.WEIGHTED) -> RankFrame:
    mode = WeightingMode(mode)
    x = data.values
    gi = data.group_index
    sizes = data.sizes
    yhat = np.column_stack([average_cdf(x[:, r], gi, sizes, mode) for r in range(x.shape[1])])
    yhat.setflags(write=False)
    return RankFrame(yhat=yhat, sizes=sizes, mode=mode)
