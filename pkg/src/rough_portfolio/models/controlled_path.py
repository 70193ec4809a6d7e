from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from rough_portfolio.models.paths import SampledPath
from rough_portfolio.models.rough_path import RoughPath
from rough_portfolio.utils.errors import RoughPortfolioError


class ControlledPathError(RoughPortfolioError):
    pass


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """A path Y controlled by a reference rough path X, with derivative Y'.

    ``values`` has shape ``(N+1, *shape)`` where ``shape`` is the codomain
    (``()`` for scalars, ``(m,)`` for vectors, ``(m, d)`` for matrices).
    ``derivative`` has shape ``(N+1, *shape, e)`` with e the reference
    dimension. ``diagnostics`` carries solver residuals and similar scalars.
    """

    reference: RoughPath
    values: np.ndarray
    derivative: np.ndarray
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        derivative = np.array(self.derivative, dtype=float)
        n_points, e = self.reference.size, self.reference.dim
        if values.shape[:1] != (n_points,):
            raise ControlledPathError(
                f"values have {values.shape[:1]} samples, reference has {n_points}"
            )
        if derivative.shape != values.shape + (e,):
            raise ControlledPathError(
                f"derivative shape {derivative.shape} does not match {values.shape + (e,)}"
            )
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(derivative))):
            raise ControlledPathError("controlled path has non-finite entries")
        values.setflags(write=False)
        derivative.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "derivative", derivative)
        object.__setattr__(self, "diagnostics", MappingProxyType(dict(self.diagnostics)))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def times(self) -> np.ndarray:
        return self.reference.times

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def value_path(self) -> SampledPath:
        """Values as a SampledPath, codomain flattened row-major."""
        return SampledPath(self.times, self.values.reshape(self.size, -1))

    def derivative_path(self) -> SampledPath:
        return SampledPath(self.times, self.derivative.reshape(self.size, -1))

    def remainder(self, s: np.ndarray | int, t: np.ndarray | int) -> np.ndarray:
        """R_{s,t} = Y_{s,t} - Y'_s X_{s,t}."""
        dx = np.asarray(self.reference.increment(s, t))
        dx = dx.reshape(dx.shape[:-1] + (1,) * len(self.shape) + dx.shape[-1:])
        return self.values[t] - self.values[s] - np.sum(self.derivative[s] * dx, axis=-1)

    def with_diagnostics(self, **extra: float) -> ControlledPath:
        merged = {**self.diagnostics, **extra}
        return ControlledPath(self.reference, self.values, self.derivative, merged)
