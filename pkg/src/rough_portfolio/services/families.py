"""Registry of named coefficient families for experiments.

Local-volatility families build a ``CoefficientField``; Black–Scholes
families build ``ControlledCoefficients`` over a given time-augmented lift.
Every family takes a perturbation size ``delta`` that shifts the drift by
``delta * bump`` and the volatility by ``delta * vol_bump`` (times exp(-x^2)
for local-vol families).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from rough_portfolio.models.coefficients import CoefficientField, ControlledCoefficients
from rough_portfolio.models.rough_path import TimeAugmentedRoughPath
from rough_portfolio.services import controlled
from rough_portfolio.utils.constants import DEFAULT_DET_FLOOR
from rough_portfolio.utils.errors import RoughPortfolioError

logger = logging.getLogger(__name__)


class FamilyError(RoughPortfolioError):
    pass


@dataclass(frozen=True)
class Family:
    name: str
    model: str
    defaults: Mapping[str, float] = field(default_factory=dict)


_PERTURBATION = {"bump": 0.5, "vol_bump": 0.05}

FAMILIES: dict[str, Family] = {
    family.name: family
    for family in (
        Family("lv.const", "lv", {"mu": 0.1, "vol": 0.2, "dim": 1, **_PERTURBATION}),
        Family("lv.tanh", "lv", {"mu": 0.05, "a": 0.1, "vol": 0.2, "dim": 1, **_PERTURBATION}),
        Family("bs.const", "bs", {"b": 0.1, "sigma": 0.2, "dim": 1, **_PERTURBATION}),
        Family("bs.smooth", "bs", {"b": 0.1, "sigma": 0.2, "amp": 0.05, "dim": 1, **_PERTURBATION}),
        Family("bs.wdriven", "bs", {"b": 0.1, "sigma": 0.2, "amp": 0.05, "dim": 1, **_PERTURBATION}),
    )
}

# Grid for sup norms of the scalar shape functions
_SUP_GRID = np.linspace(-8.0, 8.0, 160001)


def _c_norm(derivatives: list[Callable[[np.ndarray], np.ndarray]]) -> float:
    """Sum of sup|f^(k)| over the listed derivatives."""
    return float(sum(np.max(np.abs(f(_SUP_GRID))) for f in derivatives))


def _sech2(x: np.ndarray) -> np.ndarray:
    return 1.0 / np.cosh(x) ** 2


_TANH_DERIVATIVES = [
    np.tanh,
    _sech2,
    lambda x: -2.0 * _sech2(x) * np.tanh(x),
    lambda x: 4.0 * _sech2(x) * np.tanh(x) ** 2 - 2.0 * _sech2(x) ** 2,
]
_BUMP_DERIVATIVES = [
    lambda x: np.exp(-(x**2)),
    lambda x: -2.0 * x * np.exp(-(x**2)),
    lambda x: (4.0 * x**2 - 2.0) * np.exp(-(x**2)),
    lambda x: (12.0 * x - 8.0 * x**3) * np.exp(-(x**2)),
]
TANH_C3 = _c_norm(_TANH_DERIVATIVES)
BUMP_C2 = _c_norm(_BUMP_DERIVATIVES[:3])
BUMP_C3 = _c_norm(_BUMP_DERIVATIVES)


def get_family(name: str, model: str | None = None) -> Family:
    family = FAMILIES.get(name)
    if family is None:
        raise FamilyError(f"Unknown coefficient family: {name!r}")
    if model is not None and family.model != model:
        raise FamilyError(f"family {name!r} belongs to model {family.model!r}, not {model!r}")
    return family


def resolve_params(name: str, params: Mapping[str, float] | None = None) -> dict[str, float]:
    """Family defaults overridden by ``params``; unknown parameter names are rejected."""
    family = get_family(name)
    merged = dict(family.defaults)
    for key, value in (params or {}).items():
        if key not in merged:
            raise FamilyError(f"family {name!r} has no parameter {key!r}")
        merged[key] = float(value)
    if int(merged["dim"]) != merged["dim"] or merged["dim"] < 1:
        raise FamilyError(f"dim must be a positive integer, got {merged['dim']!r}")
    return merged


def perturbation_norm(name: str, params: Mapping[str, float] | None = None) -> float:
    """Norm of the perturbation direction (delta b, delta sigma) per unit delta.

    Local-vol families: the C^2_b norm of bump exp(-x^2) plus that of
    vol_bump exp(-x^2). Black–Scholes families: the controlled-path distance
    of the constant shifts, sqrt(m) (|bump| + |vol_bump|).
    """
    family = get_family(name)
    p = resolve_params(name, params)
    if family.model == "lv":
        return (abs(p["bump"]) + abs(p["vol_bump"])) * BUMP_C2
    return math.sqrt(p["dim"]) * (abs(p["bump"]) + abs(p["vol_bump"]))


def _diagonal(values: np.ndarray) -> np.ndarray:
    return values[..., :, None] * np.eye(values.shape[-1])


def local_vol_field(
    name: str,
    params: Mapping[str, float] | None = None,
    delta: float = 0.0,
    det_floor: float = DEFAULT_DET_FLOOR,
) -> CoefficientField:
    """b(t, x) = mu + a tanh(x) + delta bump exp(-x^2), entry by entry;
    sigma(t, x) = diag(vol (1 + s tanh(x)) + delta vol_bump exp(-x^2)).

    ``lv.const`` has a = s = 0, ``lv.tanh`` has s = 1/2.
    """
    get_family(name, "lv")
    p = resolve_params(name, params)
    m = int(p["dim"])
    mu, vol = p["mu"], p["vol"]
    slope = p.get("a", 0.0)
    vol_slope = 0.5 if name == "lv.tanh" else 0.0
    bump, vol_bump = delta * p["bump"], delta * p["vol_bump"]
    diag_idx = np.arange(m)

    def gauss(x: np.ndarray) -> np.ndarray:
        return np.exp(-(x**2))

    def b(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return mu + slope * np.tanh(x) + bump * gauss(x)

    def db(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape + (1 + m,))
        out[..., diag_idx, 1 + diag_idx] = slope * _sech2(x) - 2.0 * bump * x * gauss(x)
        return out

    def sigma(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return _diagonal(vol * (1.0 + vol_slope * np.tanh(x)) + vol_bump * gauss(x))

    def dsigma(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape + (m, 1 + m))
        out[..., diag_idx, diag_idx, 1 + diag_idx] = vol * vol_slope * _sech2(x) - 2.0 * vol_bump * x * gauss(x)
        return out

    lowest_vol = vol * (1.0 - vol_slope) - abs(vol_bump)
    if not lowest_vol > 0:
        raise FamilyError(f"{name}: volatility can reach zero (lower bound {lowest_vol!r})")
    bound = max(
        abs(mu) + abs(slope) * TANH_C3 + abs(bump) * BUMP_C3,
        abs(vol) * (1.0 + vol_slope * TANH_C3) + abs(vol_bump) * BUMP_C3,
        lowest_vol ** (-2 * m),
    )
    return CoefficientField(b, sigma, db, dsigma, m, m, bound, det_floor, name)


def bs_coefficients(
    name: str,
    lift: TimeAugmentedRoughPath,
    params: Mapping[str, float] | None = None,
    delta: float = 0.0,
    det_floor: float = DEFAULT_DET_FLOOR,
) -> ControlledCoefficients:
    """Controlled coefficients over ``lift``.

    ``bs.const``: constants. ``bs.smooth``: b_t = b + amp sin(2 pi t / T)
    with b' = 0. ``bs.wdriven``: b = b + amp tanh(W^1) and
    sigma = sigma (1 + tanh(W^1) / 2), with derivatives through W^1.
    """
    get_family(name, "bs")
    p = resolve_params(name, params)
    m = int(p["dim"])
    if lift.noise_dim != m:
        raise FamilyError(f"{name}: dim={m} but the noise has dimension {lift.noise_dim}")
    eye = np.eye(m)
    ones = controlled.constant(lift, np.ones(m))
    vol = controlled.constant(lift, p["sigma"] * eye)

    if name == "bs.const":
        b = controlled.constant(lift, np.full(m, p["b"]))
        sigma = vol
    elif name == "bs.smooth":
        drift = p["b"] + p["amp"] * np.sin(2 * np.pi * lift.times / lift.times[-1])
        b = controlled.deterministic(lift, np.repeat(drift[:, None], m, axis=1))
        sigma = vol
    else:
        w1 = controlled.component(controlled.from_rough_path(lift), 1)
        tanh_w = controlled.compose_smooth(w1, controlled.elementwise(np.tanh, _sech2, name="tanh"))
        shift = controlled.product(controlled.scale(tanh_w, p["amp"]), ones)
        b = controlled.add(controlled.constant(lift, np.full(m, p["b"])), shift)
        level = controlled.add(controlled.constant(lift, 1.0), controlled.scale(tanh_w, 0.5))
        sigma = controlled.product(level, vol)

    if delta:
        b = controlled.add(b, controlled.constant(lift, np.full(m, delta * p["bump"])))
        sigma = controlled.add(sigma, controlled.constant(lift, delta * p["vol_bump"] * eye))
    return ControlledCoefficients(b, sigma, det_floor, name=name)
