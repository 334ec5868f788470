"""Uniformly sampled functions of time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPACING_RTOL = 1e-12


@dataclass(frozen=True)
class GridFunction:
    """A (vector- or matrix-valued) function sampled on a uniform time grid.

    ``values`` has shape ``(n, *value_shape)``; scalar functions are stored
    with a trailing singleton axis so that ``values.ndim >= 2`` always holds.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("times must be a 1-d array with at least two nodes")
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != times.size:
            raise ValueError(
                f"values has {values.shape[0]} rows but there are {times.size} times"
            )
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("times must be strictly increasing")
        span = times[-1] - times[0]
        if np.max(np.abs(steps - steps.mean())) > SPACING_RTOL * max(span, 1.0):
            raise ValueError("times are not uniformly spaced")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, t0: float, t1: float, values) -> GridFunction:
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(t0, t1, values.shape[0]), values)

    @classmethod
    def from_callable(cls, fn, t0: float, t1: float, n: int) -> GridFunction:
        times = np.linspace(t0, t1, n)
        return cls(times, np.array([np.atleast_1d(fn(t)) for t in times]))

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def step(self) -> float:
        return (self.times[-1] - self.times[0]) / (self.n - 1)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def index_of(self, t: float) -> int:
        """Index of the grid node at time ``t``; raises if ``t`` is off-grid."""
        pos = (t - self.times[0]) / self.step
        idx = int(round(pos))
        if abs(pos - idx) > 1e-8 or not 0 <= idx < self.n:
            raise ValueError(f"time {t!r} is not a node of the grid")
        return idx

    def window(self, t: float, T: float) -> GridFunction:
        """Restriction to the nodes in ``[t, T]`` (both must be nodes)."""
        i, j = self.index_of(t), self.index_of(T)
        if j <= i:
            raise ValueError("window must contain at least two nodes")
        return GridFunction(self.times[i : j + 1], self.values[i : j + 1])

    def with_values(self, values) -> GridFunction:
        return GridFunction(self.times, values)

    def same_grid(self, other: GridFunction) -> bool:
        return self.n == other.n and np.allclose(
            self.times, other.times, rtol=0, atol=SPACING_RTOL * max(1.0, self.t1)
        )


def require_same_grid(*fns: GridFunction) -> None:
    first = fns[0]
    for other in fns[1:]:
        if not first.same_grid(other):
            raise ValueError("grid functions are sampled on different grids")
