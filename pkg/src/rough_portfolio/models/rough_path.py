from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rough_portfolio.models.paths import SampledPath
from rough_portfolio.utils.errors import RoughPortfolioError


class RoughLiftError(RoughPortfolioError):
    pass


@dataclass(frozen=True, eq=False)
class RoughPath:
    """A sampled path X with its cumulative iterated integral I_t = ∫ X ⊗ dX.

    Only I is stored; the second level is rebuilt on demand through
    ``second_level(s, t) = I_t - I_s - X_s ⊗ X_{s,t}``, which satisfies
    Chen's relation identically. Indices are master grid positions.
    """

    base: SampledPath
    iterated: np.ndarray

    def __post_init__(self) -> None:
        iterated = np.array(self.iterated, dtype=float)
        d = self.base.dim
        if iterated.shape != (self.base.size, d, d):
            raise RoughLiftError(
                f"iterated integral shape {iterated.shape} does not match "
                f"({self.base.size}, {d}, {d})"
            )
        if not np.all(np.isfinite(iterated)):
            raise RoughLiftError("iterated integral has non-finite entries")
        if np.any(iterated[0] != 0.0):
            raise RoughLiftError("iterated integral must vanish at time 0")
        iterated.setflags(write=False)
        object.__setattr__(self, "iterated", iterated)

    @property
    def times(self) -> np.ndarray:
        return self.base.times

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def size(self) -> int:
        return self.base.size

    def increment(self, s: np.ndarray | int, t: np.ndarray | int) -> np.ndarray:
        return self.values[t] - self.values[s]

    def second_level(self, s: np.ndarray | int, t: np.ndarray | int) -> np.ndarray:
        xs = self.values[s]
        return self.iterated[t] - self.iterated[s] - np.einsum("...i,...j->...ij", xs, self.values[t] - xs)

    def cell_second_levels(self) -> np.ndarray:
        """Second level over every master cell, shape (N, d, d)."""
        cells = np.arange(self.size - 1)
        return self.second_level(cells, cells + 1)


@dataclass(frozen=True, eq=False)
class TimeAugmentedRoughPath(RoughPath):
    """Rough path over R^{1+d} whose first coordinate is the clock t itself."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.dim < 1 or not np.array_equal(self.values[:, 0], self.times):
            raise RoughLiftError("first coordinate of a time-augmented path must equal t")

    @property
    def noise_dim(self) -> int:
        return self.dim - 1

    @property
    def noise(self) -> SampledPath:
        """The driving path W without its time coordinate (time itself when d=0)."""
        if self.noise_dim == 0:
            return SampledPath(self.times, self.values[:, :1])
        return SampledPath(self.times, self.values[:, 1:])
