from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from rough_portfolio.models.coefficients import CoefficientField
from rough_portfolio.models.controlled_path import ControlledPath
from rough_portfolio.models.paths import PartitionScheme, SampledPath
from rough_portfolio.models.rough_path import RoughPath
from rough_portfolio.services import controlled
from rough_portfolio.services.roughlift import bracket_values
from rough_portfolio.utils.constants import BRACKET_JUMP_TOLERANCE, DIVERGENCE_LIMIT
from rough_portfolio.utils.errors import RoughPortfolioError

logger = logging.getLogger(__name__)


class RdeError(RoughPortfolioError):
    pass


class DivergenceError(RdeError):
    pass


def _initial_state(field: CoefficientField, s0: float | np.ndarray) -> np.ndarray:
    state = np.atleast_1d(np.asarray(s0, dtype=float))
    if state.shape != (field.state_dim,):
        raise RdeError(f"initial state has shape {state.shape}, field expects ({field.state_dim},)")
    return state


def euler_steps(
    field: CoefficientField,
    s_start: np.ndarray,
    clock: np.ndarray,
    increments: np.ndarray,
) -> np.ndarray:
    """Euler recursion S_{k+1} = S_k + b(c_k, S_k) dc_k + sigma(c_k, S_k) dW_k.

    ``clock`` holds the clock value at each left point, ``increments`` the
    rows (dc_k, dW_k). Cells with zero increment leave the state untouched.
    """
    states = np.empty((len(clock) + 1, field.state_dim))
    states[0] = s_start
    for k in range(len(clock)):
        x = states[k]
        inc = increments[k]
        if not inc.any():
            states[k + 1] = x
            continue
        nxt = x + field.b(clock[k], x) * inc[0] + field.sigma(clock[k], x) @ inc[1:]
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"state diverged at step {k} (t={clock[k]:.6g})")
        states[k + 1] = nxt
    return states


def euler_solve(
    field: CoefficientField,
    s0: float | np.ndarray,
    noise: SampledPath,
    scheme: PartitionScheme,
    n: int,
) -> SampledPath:
    """Euler scheme along P^n, held constant between partition points."""
    if noise.dim != field.noise_dim:
        raise RdeError(f"noise has dimension {noise.dim}, field expects {field.noise_dim}")
    idx = scheme.indices_on(noise.times, n)
    t_pts = noise.times[idx]
    increments = np.column_stack([np.diff(t_pts), np.diff(noise.values[idx], axis=0)])
    states = euler_steps(field, _initial_state(field, s0), t_pts[:-1], increments)
    owner = np.searchsorted(idx, np.arange(noise.size), side="right") - 1
    return SampledPath(noise.times, states[owner])


def coefficient_jet(field: CoefficientField, price: ControlledPath) -> ControlledPath:
    """(b, sigma)(clock, S) as a controlled path of shape (m, 1+d)."""
    joint = controlled.concatenate([controlled.clock(price.reference), price])
    jet_map = controlled.SmoothMap(
        value=lambda z: field.jet(z[:, 0], z[:, 1:]),
        jacobian=lambda z: field.jet_jacobian(z[:, 0], z[:, 1:]),
        name=field.name,
    )
    return controlled.compose_smooth(joint, jet_map)


def _pair_indices(size: int) -> np.ndarray:
    idx = np.arange(0, size, 2)
    return idx if idx[-1] == size - 1 else np.append(idx, size - 1)


def rde_solve(field: CoefficientField, s0: float | np.ndarray, lift: RoughPath) -> ControlledPath:
    """Master-grid Euler solution of dS = (b, sigma)(., S) d(., W) as a controlled path.

    The first coordinate of ``lift`` is the clock fed to the coefficients.
    The self-consistency residual compares S with compensated sums of the
    coefficient jet over pairs of master cells.
    """
    if lift.dim != field.noise_dim + 1:
        raise RdeError(f"lift has dimension {lift.dim}, field expects {field.noise_dim + 1}")
    values = lift.values
    states = euler_steps(field, _initial_state(field, s0), values[:-1, 0], np.diff(values, axis=0))
    path = ControlledPath(lift, states, field.jet(values[:, 0], states))

    jet = coefficient_jet(field, path)
    idx = _pair_indices(lift.size)
    coarse = controlled.compensated_sum(jet, controlled.from_rough_path(lift), idx)
    residual = float(np.max(np.abs(states[idx] - states[0] - coarse)))
    logger.debug("RDE self-consistency residual %.3e on %d points", residual, lift.size)
    return path.with_diagnostics(residual=residual)


def rough_exponential(
    z: ControlledPath,
    z_lift: RoughPath,
    jump_indices: Sequence[int] = (),
    require_positive: bool = False,
) -> ControlledPath:
    """V = exp(Z - Gamma/2) prod (1 + dZ) exp(-dZ) over declared jumps.

    Gamma is the bracket of ``z_lift`` minus the squared declared jumps. The
    result is controlled by the reference of ``z`` with derivative V Z'.
    """
    if z.shape not in ((), (1,)):
        raise RdeError(f"rough exponential needs a scalar path, got shape {z.shape}")
    zv = z.values.reshape(-1)
    if abs(zv[0]) > 1e-12:
        raise RdeError(f"rough exponential needs Z_0 = 0, got {zv[0]!r}")
    if z_lift.dim != 1 or not np.allclose(z_lift.values[:, 0], zv, rtol=0.0, atol=1e-12):
        raise RdeError("z_lift is not a lift of z")

    size = zv.size
    dz = np.diff(zv)
    br = bracket_values(z_lift)[:, 0, 0]
    gap = np.abs(np.diff(br) - dz**2)
    bad = np.flatnonzero(gap > BRACKET_JUMP_TOLERANCE * (1.0 + dz**2))
    if bad.size:
        k = int(bad[0]) + 1
        raise RdeError(f"bracket jump differs from squared jump at t={z.times[k]:.6g} (gap {gap[k - 1]:.3e})")

    jumps = np.unique(np.asarray(jump_indices, dtype=int))
    if jumps.size and (jumps[0] < 1 or jumps[-1] >= size):
        raise RdeError("jump indices must lie in 1..N")
    jump_dz = dz[jumps - 1]
    squared = np.zeros(size)
    squared[jumps] = jump_dz**2
    gamma = br - np.cumsum(squared)
    factors = 1.0 + jump_dz

    if np.all(factors > 0):
        log_jumps = np.zeros(size)
        log_jumps[jumps] = np.log(factors) - jump_dz
        v = np.exp(zv - 0.5 * gamma + np.cumsum(log_jumps))
    else:
        k = int(jumps[np.argmax(factors <= 0)])
        message = f"rough exponential loses positivity at t={z.times[k]:.6g}"
        if require_positive:
            raise RdeError(message)
        logger.warning(message)
        multipliers = np.ones(size)
        multipliers[jumps] = factors * np.exp(-jump_dz)
        v = np.exp(zv - 0.5 * gamma) * np.cumprod(multipliers)

    cells = z_lift.cell_second_levels()[:, 0, 0]
    solved = 1.0 + np.concatenate([[0.0], np.cumsum(v[:-1] * dz + v[:-1] * cells)])
    residual = float(np.max(np.abs(v - solved)))

    e = z.reference.dim
    derivative = v[:, None] * z.derivative.reshape(size, e)
    return ControlledPath(z.reference, v, derivative, {"residual": residual})


def xi_path(b: ControlledPath, sigma_row: ControlledPath, lift: RoughPath) -> ControlledPath:
    """Xi = ∫ b dt + ∫ sigma dW against the time-augmented lift."""
    integrand = controlled.concatenate([b, sigma_row])
    if integrand.shape != (lift.dim,):
        raise RdeError(f"(b, sigma) has {integrand.shape} entries, lift has dimension {lift.dim}")
    return controlled.rough_integral(integrand, controlled.from_rough_path(lift))


def linear_rde_solve(
    b: ControlledPath,
    sigma_row: ControlledPath,
    s0: float,
    lift: RoughPath,
) -> ControlledPath:
    """S = s0 E(Xi), the solution of S = s0 + ∫ S dXi."""
    if not s0 > 0:
        raise RdeError(f"linear RDE needs s0 > 0, got {s0!r}")
    xi = xi_path(b, sigma_row, lift)
    exp_xi = rough_exponential(xi, controlled.canonical_lift(xi), require_positive=True)
    return controlled.scale(exp_xi, s0).with_diagnostics(**exp_xi.diagnostics)
