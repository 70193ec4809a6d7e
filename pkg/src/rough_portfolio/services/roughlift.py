from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from rough_portfolio.models.paths import PartitionScheme, SampledPath
from rough_portfolio.models.report import RieReport
from rough_portfolio.models.rough_path import RoughLiftError, RoughPath, TimeAugmentedRoughPath
from rough_portfolio.services.gridpath import (
    default_anchors,
    p_variation,
    piecewise_constant,
    staircase_index,
    time_discretization,
    two_param_p_variation,
)
from rough_portfolio.utils.constants import PVAR_ANCHOR_CAP, TWO_PARAM_ANCHOR_CAP

logger = logging.getLogger(__name__)

# A last-level statistic above this multiple of the early maximum counts as unbounded
_RIE_GROWTH_LIMIT = 4.0


def _left_point_iterated(values: np.ndarray, integrand: np.ndarray | None = None) -> np.ndarray:
    """Running sum of integrand_u ⊗ X_{u,v} over master cells, starting at 0."""
    left = values[:-1] if integrand is None else integrand[:-1]
    terms = np.einsum("ni,nj->nij", left, np.diff(values, axis=0))
    d_in, d_out = left.shape[1], values.shape[1]
    return np.concatenate([np.zeros((1, d_in, d_out)), np.cumsum(terms, axis=0)])


def rie_lift(path: SampledPath) -> RoughPath:
    """Itô-type lift: I is the left-point Riemann sum of X ⊗ dX on the master grid."""
    return RoughPath(path, _left_point_iterated(path.values))


def bracket_values(rp: RoughPath) -> np.ndarray:
    """[X]_t = X_{0,t} ⊗ X_{0,t} - 2 Sym(second level over [0,t]), shape (N+1, d, d)."""
    idx = np.arange(rp.size)
    x0t = rp.values - rp.values[0]
    second = rp.second_level(np.zeros_like(idx), idx)
    return np.einsum("ni,nj->nij", x0t, x0t) - (second + np.swapaxes(second, 1, 2))


def bracket(rp: RoughPath) -> SampledPath:
    """Rough bracket as a path of flattened d×d matrices (row-major)."""
    values = bracket_values(rp)
    return SampledPath(rp.times, values.reshape(rp.size, -1))


def time_augment(rp: RoughPath) -> TimeAugmentedRoughPath:
    """Lift of (t, X): cross blocks and the time block by left-point sums.

    The block of X itself is taken over from ``rp`` unchanged.
    """
    times = rp.times
    joint = np.column_stack([times, rp.values])
    iterated = _left_point_iterated(joint)
    iterated[:, 1:, 1:] = rp.iterated
    return TimeAugmentedRoughPath(SampledPath(times, joint), iterated)


def time_lift(times: np.ndarray) -> TimeAugmentedRoughPath:
    """Time augmentation with no noise: the lift of gamma_t = t alone."""
    gamma = SampledPath(times, np.asarray(times, dtype=float))
    lift = rie_lift(gamma)
    return TimeAugmentedRoughPath(lift.base, lift.iterated)


def staircase_lift(path: SampledPath, scheme: PartitionScheme, n: int) -> RoughPath:
    """Left-point lift of (gamma^n, X^n) on the master grid.

    Its first coordinate is the staircase clock, so it drives the RDE whose
    solution is the Euler scheme along the n-th partition.
    """
    gamma = time_discretization(scheme, n, path.times)
    xn = piecewise_constant(path, scheme, n)
    joint = SampledPath(path.times, np.column_stack([gamma.values, xn.values]))
    return rie_lift(joint)


def _check_rough_exponent(p: float) -> None:
    if not 2 <= p < 3:
        raise RoughLiftError(f"rough path norms need 2 <= p < 3, got {p!r}")


def rough_norm(
    rp: RoughPath,
    p: float,
    anchors: Sequence[int] | np.ndarray | None = None,
) -> float:
    """||X||_p + ||second level||_{p/2} on the anchors."""
    _check_rough_exponent(p)
    path_anchors = anchors if anchors is not None else default_anchors(rp.size, PVAR_ANCHOR_CAP)
    pair_anchors = anchors if anchors is not None else default_anchors(rp.size, TWO_PARAM_ANCHOR_CAP)
    return p_variation(rp.base, p, path_anchors) + two_param_p_variation(rp.second_level, p / 2, pair_anchors)


def rough_distance(
    rp: RoughPath,
    rq: RoughPath,
    p: float,
    anchors: Sequence[int] | np.ndarray | None = None,
) -> float:
    _check_rough_exponent(p)
    if not rp.base.same_grid(rq.base) or rp.dim != rq.dim:
        raise RoughLiftError("rough_distance needs lifts on the same grid and dimension")
    diff = SampledPath(rp.times, rp.values - rq.values)
    path_anchors = anchors if anchors is not None else default_anchors(rp.size, PVAR_ANCHOR_CAP)
    pair_anchors = anchors if anchors is not None else default_anchors(rp.size, TWO_PARAM_ANCHOR_CAP)

    def second_diff(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        return rp.second_level(s, t) - rq.second_level(s, t)

    return p_variation(diff, p, path_anchors) + two_param_p_variation(second_diff, p / 2, pair_anchors)


def sup_lift_distance(a: RoughPath, b: RoughPath) -> float:
    """sup_t |I^a_t - I^b_t| for two lifts on one grid."""
    if not a.base.same_grid(b.base) or a.dim != b.dim:
        raise RoughLiftError("sup_lift_distance needs lifts on the same grid and dimension")
    diff = (a.iterated - b.iterated).reshape(a.size, -1)
    return float(np.max(np.linalg.norm(diff, axis=1)))


def rie_diagnostic(
    path: SampledPath,
    scheme: PartitionScheme,
    n_max: int,
    p: float,
    control_constant: float = 1.0,
    n_min: int = 1,
    pair_cap: int = TWO_PARAM_ANCHOR_CAP,
) -> RieReport:
    """Riemann-sum diagnostics of the left-point lift along a partition family.

    For each level n: the sup distance between the running Riemann sums
    ∫X^n ⊗ dX and the lift, and the sup over partition pairs k < l of
    |∫_{t_k}^{t_l} X^n ⊗ dX - X_{t_k} ⊗ X_{t_k,t_l}|^{p/2} / (c (t_l - t_k)).
    """
    lift = rie_lift(path)
    levels = tuple(range(n_min, n_max + 1))
    part2: list[float] = []
    part3: list[float] = []

    for n in levels:
        xn = piecewise_constant(path, scheme, n)
        riemann = _left_point_iterated(path.values, xn.values)
        err = np.linalg.norm((riemann - lift.iterated).reshape(path.size, -1), axis=1)
        part2.append(float(err.max()))

        idx = scheme.indices_on(path.times, n)
        idx = idx[default_anchors(idx.size, pair_cap)]
        stat = 0.0
        for j in range(1, idx.size):
            s, t = idx[:j], idx[j]
            xs = path.values[s]
            defect = riemann[t] - riemann[s] - np.einsum("ki,kj->kij", xs, path.values[t] - xs)
            size = np.linalg.norm(defect.reshape(j, -1), axis=1) ** (p / 2)
            elapsed = control_constant * (path.times[t] - path.times[s])
            stat = max(stat, float(np.max(size / elapsed)))
        part3.append(stat)
        logger.debug("RIE level %d: part2=%.3e part3=%.3e", n, part2[-1], stat)

    half = max(1, len(part3) // 2)
    early = max(part3[:half]) if part3 else 0.0
    bounded = all(np.isfinite(part3)) and (not part3 or part3[-1] <= _RIE_GROWTH_LIMIT * max(early, 1e-300))
    if not bounded:
        logger.warning("RIE statistic grows across levels: %s", part3)
    return RieReport(scheme.kind, levels, tuple(part2), tuple(part3), bool(bounded))


def partition_riemann_lift(path: SampledPath, scheme: PartitionScheme, n: int) -> RoughPath:
    """Lift whose iterated integral is the running ∫X^n ⊗ dX (Riemann sums along P^n)."""
    xn_values = path.values[staircase_index(path.times, scheme, n)]
    return RoughPath(path, _left_point_iterated(path.values, xn_values))
