"""Pathwise log-optimal portfolios in local-volatility models.

The price S solves the RDE driven by the time-augmented lift of W. Every
portfolio object is a controlled path over that lift; the discretized
portfolio is built from point values along a partition and carried as
staircase paths with zero derivative over the same lift.
"""

from __future__ import annotations

import logging
from collections import namedtuple

import numpy as np

from rough_portfolio.models.coefficients import CoefficientField
from rough_portfolio.models.controlled_path import ControlledPath
from rough_portfolio.models.paths import ConsumptionClock, PartitionScheme
from rough_portfolio.models.portfolio import PortfolioError, PortfolioPath, WealthPath
from rough_portfolio.models.rough_path import RoughPath, TimeAugmentedRoughPath
from rough_portfolio.services import controlled
from rough_portfolio.services.gridpath import sup_distance
from rough_portfolio.services.rde import coefficient_jet, euler_solve, rde_solve, rough_exponential
from rough_portfolio.utils.constants import DEFAULT_P

logger = logging.getLogger(__name__)

__all__ = [
    "PortfolioError",
    "PortfolioGap",
    "check_determinant",
    "discrete_portfolio_from_points",
    "discretized_portfolio",
    "log_optimal_portfolio",
    "portfolio_distance",
    "portfolio_from_strategy",
    "price_path",
    "realized_wealth",
]

PortfolioGap = namedtuple("PortfolioGap", ["phi", "kappa"])


def price_path(
    field: CoefficientField,
    s0: float | np.ndarray,
    lift: TimeAugmentedRoughPath,
    p: float | None = DEFAULT_P,
) -> ControlledPath:
    """S solving dS = b(t, S) dt + sigma(t, S) dW; records ||S|| in the controlled norm when ``p`` is set."""
    price = rde_solve(field, s0, lift)
    if p is None:
        return price
    norm = controlled.controlled_norm(price, p)
    logger.debug("Price path controlled %.2f-norm %.4g", p, norm)
    return price.with_diagnostics(controlled_norm=norm)


def _check_reference(price: ControlledPath, lift: RoughPath | None) -> None:
    if lift is None or price.reference is lift:
        return
    if not (lift.base.same_grid(price.reference.base) and np.array_equal(lift.iterated, price.reference.iterated)):
        raise PortfolioError("price is not controlled by the given lift")


def _check_clock(clock: ConsumptionClock, price: ControlledPath) -> float:
    if not clock.path.same_grid(price.reference.base):
        raise PortfolioError("consumption clock and price live on different grids")
    if not clock.total > 0:
        raise PortfolioError(f"K_T must be positive, got {clock.total!r}")
    return clock.total


def check_determinant(cov: np.ndarray, floor: float, times: np.ndarray, states: np.ndarray) -> float:
    """Minimum of det(c) along the path; the first (t, S_t) below ``floor`` is rejected."""
    det = np.linalg.det(cov)
    bad = np.flatnonzero(~(det >= floor))
    if bad.size:
        k = int(bad[0])
        raise PortfolioError(
            f"det(sigma sigma^T)={det[k]:.3e} below floor {floor:.1e} at t={times[k]:.6g}, "
            f"S_t={np.array2string(np.atleast_1d(states[k]), precision=6)}"
        )
    return float(det.min())


def portfolio_from_strategy(
    H: ControlledPath,
    theta: ControlledPath,
    price: ControlledPath,
    clock: ConsumptionClock,
) -> tuple[PortfolioPath, WealthPath]:
    """Assemble (phi0, phi, kappa) and V from the strategy H and the exponent integrand theta.

    kappa = exp(∫ theta d(., W)) / K_T, V = kappa (K_T - K), phi = H V and
    phi0 = ∫ phi^T dS - phi^T S.
    """
    total = _check_clock(clock, price)
    reference = price.reference
    exponent = controlled.rough_integral(theta, controlled.from_rough_path(reference))
    kappa = controlled.scale(controlled.compose_smooth(exponent, controlled.exponential()), 1.0 / total)
    remaining = controlled.deterministic(reference, total - clock.values)
    wealth = controlled.product(kappa, remaining)
    phi = controlled.product(H, wealth)
    gains = controlled.rough_integral(phi, price)
    phi0 = controlled.add(gains, controlled.scale(controlled.product(phi, price, "a,a->"), -1.0))
    portfolio = PortfolioPath(phi0, phi, kappa, {"H": H, "theta": theta, "U": exponent})
    return portfolio, WealthPath(wealth, "optimal")


def _exponential_gap(portfolio: PortfolioPath, z: ControlledPath, total: float) -> float:
    """sup |kappa - E(Z) / K_T| between the exp(U) form and the rough exponential."""
    rough_exp = rough_exponential(z, controlled.canonical_lift(z))
    return float(np.max(np.abs(portfolio.kappa.values - rough_exp.values / total)))


def log_optimal_portfolio(
    field: CoefficientField,
    price: ControlledPath,
    clock: ConsumptionClock,
    lift: RoughPath | None = None,
) -> tuple[PortfolioPath, WealthPath]:
    """Log-optimal (phi, kappa) with H = c(t, S)^-1 b(t, S), c = sigma sigma^T."""
    _check_reference(price, lift)
    m = field.state_dim
    if price.shape != (m,):
        raise PortfolioError(f"price has shape {price.shape}, field expects ({m},)")

    jet = coefficient_jet(field, price)
    b = controlled.component(jet, (slice(None), 0))
    sigma = controlled.component(jet, (slice(None), slice(1, None)))
    cov = controlled.product(sigma, sigma, "ab,cb->ac")
    min_det = check_determinant(cov.values, field.det_floor, price.times, price.values)

    cinv = controlled.compose_smooth(cov, controlled.matrix_inverse(field.det_floor))
    H = controlled.product(cinv, b, "ab,b->a")
    vartheta = controlled.product(sigma, H, "ab,a->b")
    half_square = controlled.scale(controlled.product(vartheta, vartheta, "a,a->"), 0.5)
    theta = controlled.concatenate([half_square, vartheta])

    portfolio, wealth = portfolio_from_strategy(H, theta, price, clock)
    z = controlled.rough_integral(H, price)
    gap = _exponential_gap(portfolio, z, clock.total)
    logger.debug("LV portfolio: min det %.3e, exp(U) vs E(Z) gap %.3e", min_det, gap)
    portfolio = PortfolioPath(
        portfolio.phi0,
        portfolio.phi,
        portfolio.kappa,
        {**portfolio.intermediates, "vartheta": vartheta, "Z": z},
        {"min_det": min_det, "exponential_gap": gap},
    )
    return portfolio, wealth


def realized_wealth(portfolio: PortfolioPath, price: ControlledPath, clock: ConsumptionClock) -> WealthPath:
    """V-hat = 1 + ∫ phi^T dS - ∫ kappa dK, the dK integral by left-point sums."""
    _check_clock(clock, price)
    if portfolio.phi.shape != price.shape:
        raise PortfolioError(f"holdings {portfolio.phi.shape} do not match price {price.shape}")
    reference = price.reference
    gains = controlled.rough_integral(portfolio.phi, price)
    consumed = np.concatenate([[0.0], np.cumsum(portfolio.kappa.values[:-1] * np.diff(clock.values))])
    values = controlled.add(gains, controlled.deterministic(reference, 1.0 - consumed))
    return WealthPath(values, "realized")


def discrete_portfolio_from_points(
    price: ControlledPath,
    clock: ConsumptionClock,
    scheme: PartitionScheme,
    n: int,
    price_points: np.ndarray,
    H_points: np.ndarray,
    theta_points: np.ndarray,
) -> tuple[PortfolioPath, WealthPath]:
    """Staircase portfolio from values at the points of P^n.

    ``price_points`` holds S^n, ``H_points`` H^n and ``theta_points`` theta^n
    at each partition point. kappa^n uses left-point sums against
    (gamma^n, W^n); the realized wealth is taken against the true ``price``.
    """
    total = _check_clock(clock, price)
    reference = price.reference
    if not isinstance(reference, TimeAugmentedRoughPath):
        raise PortfolioError("discretized portfolios need a time-augmented reference")
    times = reference.times
    idx = scheme.indices_on(times, n)
    driver = np.column_stack([times[idx], reference.noise.values[idx]])

    exponent = np.concatenate([[0.0], np.cumsum(np.einsum("ka,ka->k", theta_points[:-1], np.diff(driver, axis=0)))])
    kappa = np.exp(exponent) / total
    clock_n = clock.values[idx]
    wealth = kappa * (total - clock_n)
    phi = H_points * wealth[:, None]
    gains = np.concatenate([[0.0], np.cumsum(np.einsum("ka,ka->k", phi[:-1], np.diff(price_points, axis=0)))])
    phi0 = gains - np.einsum("ka,ka->k", phi, price_points)

    owner = np.searchsorted(idx, np.arange(times.size), side="right") - 1

    def staircase(points: np.ndarray) -> ControlledPath:
        return controlled.deterministic(reference, points[owner])

    portfolio = PortfolioPath(
        staircase(phi0),
        staircase(phi),
        staircase(kappa),
        {"H": staircase(H_points), "price": staircase(price_points), "V": staircase(wealth)},
    )
    return portfolio, realized_wealth(portfolio, price, clock)


def discretized_portfolio(
    field: CoefficientField,
    price: ControlledPath,
    clock: ConsumptionClock,
    scheme: PartitionScheme,
    n: int,
) -> tuple[PortfolioPath, WealthPath]:
    """Portfolio of the Euler price S^n along P^n, with V-hat^n against the true S.

    ``price`` is the master-grid solution; its reference carries W and its
    first value is s0.
    """
    reference = price.reference
    if not isinstance(reference, TimeAugmentedRoughPath):
        raise PortfolioError("discretized portfolios need a time-augmented reference")
    idx = scheme.indices_on(reference.times, n)
    euler = euler_solve(field, price.values[0], reference.noise, scheme, n)
    t_pts, s_pts = reference.times[idx], euler.values[idx]

    sigma = field.sigma(t_pts, s_pts)
    cov = sigma @ np.swapaxes(sigma, -1, -2)
    check_determinant(cov, field.det_floor, t_pts, s_pts)
    H = np.linalg.solve(cov, field.b(t_pts, s_pts)[..., None])[..., 0]
    vartheta = np.einsum("kab,ka->kb", sigma, H)
    theta = np.column_stack([0.5 * np.sum(vartheta**2, axis=1), vartheta])
    logger.debug("Discretized LV portfolio at n=%d on %d partition points", n, idx.size)
    return discrete_portfolio_from_points(price, clock, scheme, n, s_pts, H, theta)


def portfolio_distance(a: PortfolioPath, b: PortfolioPath) -> PortfolioGap:
    """Sup distances of the holdings (phi0, phi) and of kappa."""
    if not np.array_equal(a.times, b.times):
        raise PortfolioError("portfolio_distance needs portfolios on one grid")
    holdings = float(np.max(np.linalg.norm(a.holdings() - b.holdings(), axis=1)))
    kappa = sup_distance(a.kappa.value_path(), b.kappa.value_path())
    return PortfolioGap(holdings, kappa)
