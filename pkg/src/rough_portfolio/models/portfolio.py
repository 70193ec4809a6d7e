from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from rough_portfolio.models.controlled_path import ControlledPath
from rough_portfolio.utils.errors import RoughPortfolioError


class PortfolioError(RoughPortfolioError):
    pass


WEALTH_MODES = ("optimal", "realized")


@dataclass(frozen=True, eq=False)
class PortfolioPath:
    """Bank account phi0, risky holdings phi and consumption rate kappa.

    All three are controlled paths over one reference. ``intermediates``
    keeps the building blocks (H or h, vartheta, theta, U, Z) by name.
    """

    phi0: ControlledPath
    phi: ControlledPath
    kappa: ControlledPath
    intermediates: Mapping[str, ControlledPath] = field(default_factory=dict)
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.phi0.shape != () or self.kappa.shape != () or len(self.phi.shape) != 1:
            raise PortfolioError(
                f"expected scalar phi0 and kappa and vector phi, got "
                f"{self.phi0.shape}, {self.kappa.shape}, {self.phi.shape}"
            )
        if not (self.phi0.reference is self.phi.reference is self.kappa.reference):
            raise PortfolioError("portfolio components must share one reference")
        bad = np.flatnonzero(~(self.kappa.values > 0))
        if bad.size:
            k = int(bad[0])
            raise PortfolioError(f"consumption rate {self.kappa.values[k]!r} is not positive at t={self.times[k]:.6g}")
        object.__setattr__(self, "intermediates", MappingProxyType(dict(self.intermediates)))
        object.__setattr__(self, "diagnostics", MappingProxyType(dict(self.diagnostics)))

    @property
    def times(self) -> np.ndarray:
        return self.kappa.times

    @property
    def assets(self) -> int:
        return self.phi.shape[0]

    def holdings(self) -> np.ndarray:
        """(phi0, phi) side by side, shape (N+1, 1+m)."""
        return np.column_stack([self.phi0.values, self.phi.values])


@dataclass(frozen=True, eq=False)
class WealthPath:
    """Wealth V = kappa (K_T - K) (``optimal``) or the realized V-hat (``realized``)."""

    path: ControlledPath
    mode: str = "optimal"

    def __post_init__(self) -> None:
        if self.mode not in WEALTH_MODES:
            raise PortfolioError(f"Unknown wealth mode: {self.mode!r}")
        if self.path.shape != ():
            raise PortfolioError(f"wealth must be scalar, got shape {self.path.shape}")
        if self.mode == "optimal" and np.any(self.path.values < 0):
            raise PortfolioError("optimal wealth must be non-negative")

    @property
    def values(self) -> np.ndarray:
        return self.path.values

    @property
    def times(self) -> np.ndarray:
        return self.path.times
