from __future__ import annotations

import logging
from collections import namedtuple
from collections.abc import Callable, Sequence

import numpy as np

from rough_portfolio.models.paths import GridPathError, PartitionScheme, SampledPath
from rough_portfolio.utils.constants import PVAR_ANCHOR_CAP

logger = logging.getLogger(__name__)

PVariation = namedtuple("PVariation", ["value", "points"])

# Two-parameter field accessor: (s_indices, t_indices) -> array (k, ...)
PairField = Callable[[np.ndarray, np.ndarray], np.ndarray]

__all__ = [
    "GridPathError",
    "PVariation",
    "default_anchors",
    "p_variation",
    "p_variation_partition",
    "piecewise_constant",
    "staircase_index",
    "sup_distance",
    "time_discretization",
    "two_param_p_variation",
]


def default_anchors(size: int, cap: int = PVAR_ANCHOR_CAP, required: Sequence[int] = ()) -> np.ndarray:
    """Grid indices used as partition candidates for variation norms.

    Grids up to ``cap`` points are used whole. Larger grids are thinned to
    evenly spaced indices; the endpoints and every index in ``required``
    (partition points, jump times) are always kept.
    """
    if size <= cap:
        return np.arange(size)
    must = np.unique(np.concatenate([[0, size - 1], np.asarray(required, dtype=int)]))
    count = max(2, cap - must.size)
    base = np.round(np.linspace(0, size - 1, count)).astype(int)
    anchors = np.union1d(base, must)
    logger.debug("Subsampled %d grid points to %d anchors", size, anchors.size)
    return anchors


def _resolve_anchors(size: int, anchors: Sequence[int] | np.ndarray | None, cap: int) -> np.ndarray:
    if anchors is None:
        return default_anchors(size, cap)
    idx = np.asarray(anchors, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise GridPathError("anchors must be a non-empty 1-D index array")
    if idx[0] < 0 or idx[-1] >= size or np.any(np.diff(idx) <= 0):
        raise GridPathError("anchors must be strictly increasing grid indices")
    return idx


def _max_partition_sum(size: int, row: Callable[[int], np.ndarray]) -> tuple[float, list[int]]:
    """Exact sup over partitions of sum w(i, j), by dynamic programming.

    ``row(j)`` returns w(i, j) for all i < j. Ties go to the earliest split.
    """
    best = np.zeros(size)
    link = np.zeros(size, dtype=int)
    for j in range(1, size):
        candidates = best[:j] + row(j)
        k = int(np.argmax(candidates))
        best[j] = candidates[k]
        link[j] = k

    points = [size - 1]
    while points[-1] > 0:
        points.append(int(link[points[-1]]))
    return float(best[-1]), points[::-1]


def p_variation_partition(
    path: SampledPath,
    p: float,
    anchors: Sequence[int] | np.ndarray | None = None,
    cap: int = PVAR_ANCHOR_CAP,
) -> PVariation:
    """p-variation of ``path`` over partitions drawn from ``anchors``.

    Returns the value and the grid indices of a maximising partition.
    """
    if not p >= 1:
        raise GridPathError(f"p-variation needs p >= 1, got {p!r}")
    idx = _resolve_anchors(path.size, anchors, cap)
    pts = path.values[idx]

    def row(j: int) -> np.ndarray:
        return np.linalg.norm(pts[j] - pts[:j], axis=1) ** p

    total, points = _max_partition_sum(idx.size, row)
    return PVariation(total ** (1.0 / p), idx[points])


def p_variation(
    path: SampledPath,
    p: float,
    anchors: Sequence[int] | np.ndarray | None = None,
    cap: int = PVAR_ANCHOR_CAP,
) -> float:
    return p_variation_partition(path, p, anchors, cap).value


def two_param_p_variation(field: PairField, r: float, anchors: Sequence[int] | np.ndarray) -> float:
    """r-variation of a two-parameter field, evaluated row by row on anchors."""
    if not r >= 1:
        raise GridPathError(f"two-parameter variation needs r >= 1, got {r!r}")
    idx = np.asarray(anchors, dtype=int)
    if idx.ndim != 1 or idx.size == 0 or np.any(np.diff(idx) <= 0):
        raise GridPathError("anchors must be strictly increasing grid indices")

    def row(j: int) -> np.ndarray:
        values = np.asarray(field(idx[:j], np.full(j, idx[j])), dtype=float).reshape(j, -1)
        if not np.all(np.isfinite(values)):
            raise GridPathError("two-parameter field has non-finite entries")
        return np.linalg.norm(values, axis=1) ** r

    total, _ = _max_partition_sum(idx.size, row)
    return total ** (1.0 / r)


def staircase_index(times: np.ndarray, scheme: PartitionScheme, n: int) -> np.ndarray:
    """For each master grid index, the grid index of its left partition point."""
    idx = scheme.indices_on(times, n)
    owner = np.searchsorted(idx, np.arange(len(times)), side="right") - 1
    return idx[owner]


def piecewise_constant(path: SampledPath, scheme: PartitionScheme, n: int) -> SampledPath:
    """X^n: constant X_{t_k} on [t_k, t_{k+1}), equal to X_T at T."""
    return SampledPath(path.times, path.values[staircase_index(path.times, scheme, n)])


def time_discretization(scheme: PartitionScheme, n: int, times: np.ndarray | None = None) -> SampledPath:
    """The staircase time path gamma^n, sampled on ``times`` (default: the partition)."""
    grid = scheme.points(n) if times is None else np.asarray(times, dtype=float)
    return SampledPath(grid, grid[staircase_index(grid, scheme, n)])


def sup_distance(a: SampledPath, b: SampledPath) -> float:
    if not a.same_grid(b):
        raise GridPathError("sup_distance needs identical grids")
    if a.dim != b.dim:
        raise GridPathError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.max(np.linalg.norm(a.values - b.values, axis=1)))
