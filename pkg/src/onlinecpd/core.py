"""Time series containers and the autoregressive embedding.

Time indices are 1-based throughout: the first observation of a series
with the default ``start_index`` is ``x(1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TimeSeries:
    """T observations of dimension d, indexed from ``start_index``."""

    values: np.ndarray
    start_index: int = 1

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("series values must be a T x d matrix")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("series must have T >= 1 and d >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_index", int(self.start_index))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start_index, self.start_index + self.T)

    def __len__(self) -> int:
        return self.T


@dataclass(frozen=True)
class CombinedVector:
    data: np.ndarray
    time_index: int


@dataclass(frozen=True)
class MiniBatch:
    """``n`` consecutive combined vectors; row 0 is X(t), row i is X(t-i)."""

    data: np.ndarray
    time_index: int

    @property
    def batch_size(self) -> int:
        return self.data.shape[0]

    @property
    def time_indices(self) -> np.ndarray:
        return self.time_index - np.arange(self.batch_size)

    @property
    def vectors(self) -> list[CombinedVector]:
        return [CombinedVector(row, int(t)) for row, t in zip(self.data, self.time_indices)]


@dataclass(frozen=True)
class Annotation:
    """Sorted true change-point positions within ``[1, T]``."""

    true_cps: tuple[int, ...] = field(default_factory=tuple)
    T: int | None = None

    def __post_init__(self):
        cps = tuple(int(c) for c in self.true_cps)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("change points must be strictly increasing")
        if self.T is not None and cps and (cps[0] < 1 or cps[-1] > self.T):
            raise ValueError("change point out of range [1, T]")
        object.__setattr__(self, "true_cps", cps)

    @property
    def n_true(self) -> int:
        return len(self.true_cps)

    def __iter__(self):
        return iter(self.true_cps)

    def __len__(self) -> int:
        return len(self.true_cps)


class EmbeddedSeries:
    """Lazy view of X(t) = [x(t); x(t-1); ...; x(t-k+1)] over a TimeSeries.

    Only the raw series is stored. Rows are stacked on demand, so memory
    stays O(T*d) regardless of ``k``.
    """

    def __init__(self, series: TimeSeries, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        if series.T < k:
            raise ValueError("series too short for embedding")
        self.series = series
        self.k = int(k)

    @property
    def dim(self) -> int:
        return self.k * self.series.d

    @property
    def first_index(self) -> int:
        return self.series.start_index + self.k - 1

    @property
    def last_index(self) -> int:
        return self.series.start_index + self.series.T - 1

    def __len__(self) -> int:
        return self.series.T - self.k + 1

    def rows(self, last: int, count: int) -> np.ndarray:
        """X(last), X(last-1), ..., X(last-count+1) as a (count, k*d) array."""
        first = last - count + 1
        if count < 1 or first < self.first_index or last > self.last_index:
            raise IndexError("batch window out of range")
        values = self.series.values
        # position of x(t) in ``values``
        pos = np.arange(last, first - 1, -1) - self.series.start_index
        if self.k == 1:
            return values[pos]
        lags = pos[:, None] - np.arange(self.k)[None, :]
        return values[lags].reshape(count, self.dim)

    def __getitem__(self, t: int) -> CombinedVector:
        return CombinedVector(self.rows(int(t), 1)[0], int(t))

    def to_array(self) -> np.ndarray:
        """All embedded vectors in increasing time order."""
        return self.rows(self.last_index, len(self))[::-1]


def embed(series: TimeSeries, k: int) -> EmbeddedSeries:
    """Autoregressive embedding of depth ``k``; valid for t >= start_index + k - 1."""
    return EmbeddedSeries(series, k)


def mini_batch(embedded: EmbeddedSeries, t: int, n: int) -> MiniBatch:
    """The mini-batch {X(t), X(t-1), ..., X(t-n+1)}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    try:
        data = embedded.rows(int(t), int(n))
    except IndexError:
        raise IndexError("batch window out of range") from None
    return MiniBatch(data, int(t))


def as_series(X, start_index: int = 1) -> TimeSeries:
    """Coerce array-like or TimeSeries input into a TimeSeries."""
    if isinstance(X, TimeSeries):
        return X
    return TimeSeries(np.asarray(X, dtype=float), start_index=start_index)


def check_positions(positions: Sequence[int], name: str = "positions") -> np.ndarray:
    arr = np.asarray(list(positions), dtype=np.int64).ravel()
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr
