from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from rough_portfolio.models.controlled_path import ControlledPath
from rough_portfolio.utils.constants import DEFAULT_DET_FLOOR
from rough_portfolio.utils.errors import RoughPortfolioError


class CoefficientError(RoughPortfolioError):
    pass


# (t, x) -> array; t has shape (...), x has shape (..., m)
FieldFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientField:
    """Local-volatility coefficients b(t, x) and sigma(t, x) with Jacobians.

    Callables broadcast over leading axes: ``b`` returns ``(..., m)``,
    ``sigma`` ``(..., m, d)``; ``db`` and ``dsigma`` append a trailing axis
    of length 1+m holding the partial derivatives in (t, x).
    ``bound`` is the declared C^3_b bound M of the family.
    """

    b: FieldFunction
    sigma: FieldFunction
    db: FieldFunction
    dsigma: FieldFunction
    state_dim: int
    noise_dim: int
    bound: float = math.inf
    det_floor: float = DEFAULT_DET_FLOOR
    name: str = "field"

    def covariance(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        vol = self.sigma(t, x)
        return vol @ np.swapaxes(vol, -1, -2)

    def jet(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """(b, sigma) side by side, shape (..., m, 1+d)."""
        return np.concatenate([self.b(t, x)[..., None], self.sigma(t, x)], axis=-1)

    def jet_jacobian(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Derivative of the jet in (t, x), shape (..., m, 1+d, 1+m)."""
        return np.concatenate([self.db(t, x)[..., None, :], self.dsigma(t, x)], axis=-2)


@dataclass(frozen=True)
class ControlledCoefficients:
    """Black–Scholes-type coefficients given as controlled paths.

    ``b`` has shape ``(m,)`` and ``sigma`` shape ``(m, d)``, both over the
    time-augmented lift of W.
    """

    b: ControlledPath
    sigma: ControlledPath
    det_floor: float = DEFAULT_DET_FLOOR
    jump_times: tuple[float, ...] = ()
    name: str = "coefficients"

    def __post_init__(self) -> None:
        if self.b.reference is not self.sigma.reference:
            raise CoefficientError("b and sigma must share one reference")
        if len(self.b.shape) != 1 or len(self.sigma.shape) != 2 or self.sigma.shape[0] != self.b.shape[0]:
            raise CoefficientError(
                f"expected b of shape (m,) and sigma of shape (m, d), got {self.b.shape} and {self.sigma.shape}"
            )
        det = np.linalg.det(self.covariance())
        bad = np.flatnonzero(~(det >= self.det_floor))
        if bad.size:
            k = int(bad[0])
            raise CoefficientError(
                f"det(sigma sigma^T)={det[k]:.3e} below floor {self.det_floor:.1e} at t={self.b.times[k]:.6g}"
            )

    @property
    def state_dim(self) -> int:
        return self.b.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.sigma.shape[1]

    def covariance(self) -> np.ndarray:
        vol = self.sigma.values
        return vol @ np.swapaxes(vol, -1, -2)
