"""Black–Scholes-type markets with controlled-path coefficients.

Prices are s0 exp(A) with A = ∫(b - |sigma|^2 / 2) dt + ∫sigma dW, the
strategy is h = (sigma sigma^T)^-1 b, H = h / S, and the consumption rate
is exp(∫h^T b dt / 2 + ∫h^T sigma dW) / K_T.
"""

from __future__ import annotations

import logging

import numpy as np

from rough_portfolio.models.coefficients import ControlledCoefficients
from rough_portfolio.models.controlled_path import ControlledPath
from rough_portfolio.models.paths import ConsumptionClock, PartitionScheme
from rough_portfolio.models.portfolio import PortfolioError, PortfolioPath, WealthPath
from rough_portfolio.models.rough_path import RoughPath, TimeAugmentedRoughPath
from rough_portfolio.services import controlled
from rough_portfolio.services.gridpath import staircase_index
from rough_portfolio.services.market_lv import (
    check_determinant,
    discrete_portfolio_from_points,
    portfolio_from_strategy,
)
from rough_portfolio.services.rde import linear_rde_solve, rough_exponential, xi_path

logger = logging.getLogger(__name__)


def _check_lift(coeffs: ControlledCoefficients, lift: RoughPath) -> None:
    ref = coeffs.b.reference
    if ref is not lift and not (ref.base.same_grid(lift.base) and np.array_equal(ref.iterated, lift.iterated)):
        raise PortfolioError("coefficients are not controlled by the given lift")
    if lift.dim != coeffs.noise_dim + 1:
        raise PortfolioError(f"lift has dimension {lift.dim}, coefficients expect {coeffs.noise_dim + 1}")


def _initial_prices(coeffs: ControlledCoefficients, s0: float | np.ndarray) -> np.ndarray:
    prices = np.broadcast_to(np.asarray(s0, dtype=float), (coeffs.state_dim,)).copy()
    bad = np.flatnonzero(~(prices > 0))
    if bad.size:
        raise PortfolioError(f"initial price s0[{int(bad[0])}]={prices[bad[0]]!r} must be positive")
    return prices


def xi(coeffs: ControlledCoefficients, lift: RoughPath) -> list[tuple[ControlledPath, RoughPath]]:
    """Xi^i = ∫b^i dt + ∫sigma^i dW with its canonical lift, one pair per asset."""
    _check_lift(coeffs, lift)
    out = []
    for i in range(coeffs.state_dim):
        path = xi_path(controlled.component(coeffs.b, i), controlled.component(coeffs.sigma, i), lift)
        out.append((path, controlled.canonical_lift(path)))
    return out


def log_exponent(coeffs: ControlledCoefficients, lift: RoughPath) -> ControlledPath:
    """A^i = ∫(b^i - |sigma^i|^2 / 2) dt + ∫sigma^i dW, as an (m,) controlled path."""
    _check_lift(coeffs, lift)
    half_var = controlled.scale(controlled.product(coeffs.sigma, coeffs.sigma, "ab,ab->a"), -0.5)
    drift = controlled.add(coeffs.b, half_var)
    integrand = ControlledPath(
        lift,
        np.concatenate([drift.values[:, :, None], coeffs.sigma.values], axis=2),
        np.concatenate([drift.derivative[:, :, None, :], coeffs.sigma.derivative], axis=2),
    )
    return controlled.rough_integral(integrand, controlled.from_rough_path(lift))


def price_exponential(
    coeffs: ControlledCoefficients,
    s0: float | np.ndarray,
    lift: RoughPath,
) -> ControlledPath:
    """S^i = s0^i exp(A^i), cross-checked against s0^i E(Xi^i).

    The largest relative gap between the two forms is recorded as the
    ``exponential_gap`` diagnostic.
    """
    prices = _initial_prices(coeffs, s0)
    exp_a = controlled.compose_smooth(log_exponent(coeffs, lift), controlled.exponential())
    price = controlled.product(exp_a, controlled.constant(lift, prices))

    gap = 0.0
    for i in range(coeffs.state_dim):
        linear = linear_rde_solve(
            controlled.component(coeffs.b, i), controlled.component(coeffs.sigma, i), prices[i], lift
        )
        column = price.values[:, i]
        gap = max(gap, float(np.max(np.abs(linear.values - column)) / np.max(np.abs(column))))
    logger.debug("exp(A) vs E(Xi) relative gap %.3e", gap)
    return price.with_diagnostics(exponential_gap=gap)


def log_optimal_portfolio_bs(
    coeffs: ControlledCoefficients,
    price: ControlledPath,
    clock: ConsumptionClock,
    lift: RoughPath | None = None,
) -> tuple[PortfolioPath, WealthPath]:
    """Log-optimal (phi, kappa) with h = (sigma sigma^T)^-1 b and H = h / S."""
    if lift is not None:
        _check_lift(coeffs, lift)
    if price.shape != (coeffs.state_dim,):
        raise PortfolioError(f"price has shape {price.shape}, coefficients expect ({coeffs.state_dim},)")
    if np.any(price.values <= 0):
        k = int(np.argmax(np.any(price.values.reshape(price.size, -1) <= 0, axis=1)))
        raise PortfolioError(f"price is not positive at t={price.times[k]:.6g}")

    b, sigma = coeffs.b, coeffs.sigma
    cov = controlled.product(sigma, sigma, "ab,cb->ac")
    min_det = check_determinant(cov.values, coeffs.det_floor, price.times, price.values)
    cinv = controlled.compose_smooth(cov, controlled.matrix_inverse(coeffs.det_floor))
    h = controlled.product(cinv, b, "ab,b->a")
    H = controlled.product(h, controlled.compose_smooth(price, controlled.reciprocal()))

    hb = controlled.product(h, b, "a,a->")
    vartheta = controlled.product(sigma, h, "ab,a->b")
    theta = controlled.concatenate([controlled.scale(hb, 0.5), vartheta])
    portfolio, wealth = portfolio_from_strategy(H, theta, price, clock)

    z = controlled.rough_integral(
        controlled.concatenate([hb, vartheta]), controlled.from_rough_path(price.reference)
    )
    rough_exp = rough_exponential(z, controlled.canonical_lift(z))
    gap = float(np.max(np.abs(portfolio.kappa.values - rough_exp.values / clock.total)))
    inverse_price = float(np.max(1.0 / np.abs(price.values)))
    logger.debug("BS portfolio: min det %.3e, exp vs E(Z) gap %.3e", min_det, gap)
    portfolio = PortfolioPath(
        portfolio.phi0,
        portfolio.phi,
        portfolio.kappa,
        {**portfolio.intermediates, "h": h, "vartheta": vartheta, "Z": z},
        {"min_det": min_det, "exponential_gap": gap, "inverse_price_sup": inverse_price},
    )
    return portfolio, wealth


def wealth_fractions(
    portfolio: PortfolioPath, price: ControlledPath, wealth: WealthPath
) -> tuple[np.ndarray, np.ndarray]:
    """phi^i S^i / V at the grid indices where V > 0, as (indices, fractions)."""
    idx = np.flatnonzero(wealth.values > 0)
    fractions = portfolio.phi.values[idx] * price.values[idx] / wealth.values[idx, None]
    return idx, fractions


def discretized_portfolio_bs(
    coeffs: ControlledCoefficients,
    price: ControlledPath,
    clock: ConsumptionClock,
    scheme: PartitionScheme,
    n: int,
) -> tuple[PortfolioPath, WealthPath]:
    """Portfolio from b^n, sigma^n, W^n and gamma^n along P^n; V-hat^n against the true S.

    Also records the coefficient discretization terms sup|b^n - b| +
    sup|sigma^n - sigma| and sup|(b^n)' - b'| + sup|(sigma^n)' - sigma'|.
    """
    reference = price.reference
    if not isinstance(reference, TimeAugmentedRoughPath):
        raise PortfolioError("discretized portfolios need a time-augmented reference")
    prices = _initial_prices(coeffs, price.values[0])
    times = reference.times
    idx = scheme.indices_on(times, n)
    b_pts, sigma_pts = coeffs.b.values[idx], coeffs.sigma.values[idx]
    driver = np.column_stack([times[idx], reference.noise.values[idx]])
    steps = np.diff(driver, axis=0)

    drift = b_pts - 0.5 * np.sum(sigma_pts**2, axis=2)
    increments = drift[:-1] * steps[:, :1] + np.einsum("kab,kb->ka", sigma_pts[:-1], steps[:, 1:])
    exponent = np.concatenate([np.zeros((1, coeffs.state_dim)), np.cumsum(increments, axis=0)])
    s_pts = prices * np.exp(exponent)

    cov = sigma_pts @ np.swapaxes(sigma_pts, -1, -2)
    check_determinant(cov, coeffs.det_floor, times[idx], s_pts)
    h = np.linalg.solve(cov, b_pts[..., None])[..., 0]
    theta = np.column_stack([0.5 * np.einsum("ka,ka->k", h, b_pts), np.einsum("kab,ka->kb", sigma_pts, h)])

    owner = staircase_index(times, scheme, n)
    value_gap = float(
        np.max(np.abs(coeffs.b.values[owner] - coeffs.b.values))
        + np.max(np.abs(coeffs.sigma.values[owner] - coeffs.sigma.values))
    )
    derivative_gap = float(
        np.max(np.abs(coeffs.b.derivative[owner] - coeffs.b.derivative))
        + np.max(np.abs(coeffs.sigma.derivative[owner] - coeffs.sigma.derivative))
    )
    portfolio, wealth = discrete_portfolio_from_points(price, clock, scheme, n, s_pts, h / s_pts, theta)
    portfolio = PortfolioPath(
        portfolio.phi0,
        portfolio.phi,
        portfolio.kappa,
        portfolio.intermediates,
        {"coefficient_gap": value_gap, "coefficient_derivative_gap": derivative_gap},
    )
    return portfolio, wealth
