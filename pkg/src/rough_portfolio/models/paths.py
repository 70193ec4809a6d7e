from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rough_portfolio.utils.constants import TIME_TOLERANCE
from rough_portfolio.utils.errors import RoughPortfolioError
from rough_portfolio.utils.scheme_parser import parse_scheme


class GridPathError(RoughPortfolioError):
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SampledPath:
    """A d-dimensional path known on a finite increasing grid of [0, T].

    ``values`` is stored as an ``(N+1, d)`` array; a 1-D input is read as a
    scalar path. Both arrays are copied and made read-only.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]

        if times.ndim != 1 or times.size == 0:
            raise GridPathError("times must be a non-empty 1-D array")
        if times[0] != 0.0:
            raise GridPathError(f"grid must start at 0, got {times[0]!r}")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise GridPathError("times must be strictly increasing")
        if values.ndim != 2 or values.shape[0] != times.size:
            raise GridPathError(
                f"values shape {values.shape} does not match {times.size} grid points"
            )
        if values.shape[1] < 1:
            raise GridPathError("path dimension must be at least 1")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise GridPathError("path contains non-finite entries")

        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def size(self) -> int:
        return self.times.size

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def same_grid(self, other: SampledPath) -> bool:
        return self.size == other.size and np.array_equal(self.times, other.times)

    def index_of(self, t: float | np.ndarray) -> np.ndarray:
        """Grid indices of the given times; every time must lie on the grid."""
        query = np.atleast_1d(np.asarray(t, dtype=float))
        tol = TIME_TOLERANCE * max(1.0, self.horizon)
        idx = np.clip(np.searchsorted(self.times, query - tol), 0, self.size - 1)
        off_grid = np.abs(self.times[idx] - query) > tol
        if np.any(off_grid):
            bad = query[np.argmax(off_grid)]
            raise GridPathError(f"time {bad!r} is not a grid point")
        return idx


@dataclass(frozen=True)
class PartitionScheme:
    """Nested partition family: uniform width T/n or dyadic width 2^-n T."""

    kind: str
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "dyadic"):
            raise GridPathError(f"Unknown partition kind: {self.kind!r}")
        if not self.horizon > 0:
            raise GridPathError(f"horizon must be positive, got {self.horizon!r}")

    @classmethod
    def parse(cls, text: str, horizon: float = 1.0) -> tuple[PartitionScheme, int | None]:
        """Build a scheme from ``uniform:n`` / ``dyadic:level`` config text."""
        try:
            kind, level = parse_scheme(text)
        except ValueError as e:
            raise GridPathError(str(e)) from e
        return cls(kind, horizon), level

    def size(self, n: int) -> int:
        """Number of intervals of the n-th partition."""
        if self.kind == "uniform":
            if n < 1:
                raise GridPathError(f"uniform partitions need n >= 1, got {n}")
            return int(n)
        if n < 0:
            raise GridPathError(f"dyadic level must be >= 0, got {n}")
        return 2 ** int(n)

    def points(self, n: int) -> np.ndarray:
        count = self.size(n)
        pts = np.arange(count + 1, dtype=float) * (self.horizon / count)
        pts[-1] = self.horizon
        return pts

    def mesh(self, n: int) -> float:
        return self.horizon / self.size(n)

    def indices_on(self, times: np.ndarray, n: int) -> np.ndarray:
        """Indices of the n-th partition points inside a master grid."""
        times = np.asarray(times, dtype=float)
        if abs(times[-1] - self.horizon) > TIME_TOLERANCE * max(1.0, self.horizon):
            raise GridPathError(
                f"master grid ends at {times[-1]!r}, scheme horizon is {self.horizon!r}"
            )
        pts = self.points(n)
        tol = TIME_TOLERANCE * max(1.0, self.horizon)
        idx = np.clip(np.searchsorted(times, pts - tol), 0, times.size - 1)
        if np.any(np.abs(times[idx] - pts) > tol):
            raise GridPathError(
                f"{self.kind} partition n={n} is not contained in the master grid"
            )
        return idx


@dataclass(frozen=True, eq=False)
class ConsumptionClock:
    """Non-decreasing deterministic consumption clock K with declared jumps."""

    path: SampledPath
    jump_times: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.path.dim != 1:
            raise GridPathError("consumption clock must be scalar")
        k = self.path.values[:, 0]
        if np.any(np.diff(k) < 0):
            raise GridPathError("consumption clock must be non-decreasing")
        if k[0] < 0:
            raise GridPathError(f"K_0 must be non-negative, got {k[0]!r}")
        if not k[-1] > k[0]:
            raise GridPathError("total consumption mass K_T - K_0 must be positive")
        object.__setattr__(self, "jump_times", tuple(float(t) for t in self.jump_times))
        self.path.index_of(np.asarray(self.jump_times))

    @classmethod
    def terminal(cls, times: np.ndarray) -> ConsumptionClock:
        """K = 1_{T}: all consumption at the horizon."""
        times = np.asarray(times, dtype=float)
        values = np.zeros(times.size)
        values[-1] = 1.0
        return cls(SampledPath(times, values), (float(times[-1]),))

    @classmethod
    def linear(cls, times: np.ndarray) -> ConsumptionClock:
        """K_t = t: consumption at a constant rate."""
        times = np.asarray(times, dtype=float)
        return cls(SampledPath(times, times.copy()))

    @classmethod
    def periodic(cls, times: np.ndarray, count: int) -> ConsumptionClock:
        """Unit jumps at k T / count, k = 1..count."""
        times = np.asarray(times, dtype=float)
        if count < 1:
            raise GridPathError(f"periodic clock needs count >= 1, got {count}")
        horizon = times[-1]
        jumps = np.arange(1, count + 1) * (horizon / count)
        jumps[-1] = horizon
        values = np.searchsorted(jumps, times + TIME_TOLERANCE * max(1.0, horizon)).astype(float)
        return cls(SampledPath(times, values), tuple(jumps))

    @property
    def values(self) -> np.ndarray:
        return self.path.values[:, 0]

    @property
    def total(self) -> float:
        return float(self.values[-1])

    @property
    def jump_indices(self) -> np.ndarray:
        return self.path.index_of(np.asarray(self.jump_times))

    def check_exhausted(self, scheme: PartitionScheme, n: int) -> None:
        """Require every jump of K to be a point of the n-th partition."""
        pts = scheme.points(n)
        tol = TIME_TOLERANCE * max(1.0, scheme.horizon)
        for t in self.jump_times:
            if not np.any(np.abs(pts - t) <= tol):
                raise GridPathError(
                    f"jump of K at t={t!r} is not a point of the {scheme.kind} partition n={n}"
                )
