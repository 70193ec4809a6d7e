"""Seeded driving paths on dyadic master grids.

Brownian paths are built by midpoint refinement: W_T first, then at every
level the midpoints of the previous grid from a Brownian bridge. Level l
draws its normals from a Philox stream keyed by (seed, l), so a path at
level L restricted to the even indices is exactly the path at level L-1.
"""

from __future__ import annotations

import logging

import numpy as np

from rough_portfolio.models.noise import NoiseError, NoiseSpec
from rough_portfolio.models.paths import PartitionScheme, SampledPath
from rough_portfolio.models.report import RieReport
from rough_portfolio.models.rough_path import TimeAugmentedRoughPath
from rough_portfolio.services.roughlift import rie_diagnostic, rie_lift, time_augment

logger = logging.getLogger(__name__)

__all__ = ["NoiseError", "NoiseSpec", "generate", "master_times", "noise_lift", "rie_report"]


def _normals(seed: int, level: int, shape: tuple[int, ...]) -> np.ndarray:
    return np.random.Generator(np.random.Philox(key=[seed, level])).standard_normal(shape)


def master_times(spec: NoiseSpec) -> np.ndarray:
    count = 2**spec.master_level
    times = np.arange(count + 1, dtype=float) * (spec.horizon / count)
    times[-1] = spec.horizon
    return times


def _brownian(spec: NoiseSpec) -> np.ndarray:
    d = spec.dimension
    values = np.zeros((2, d))
    values[1] = np.sqrt(spec.horizon) * _normals(spec.seed, 0, (d,))
    for level in range(1, spec.master_level + 1):
        cells = values.shape[0] - 1
        width = spec.horizon / cells
        mid = 0.5 * (values[:-1] + values[1:]) + 0.5 * np.sqrt(width) * _normals(spec.seed, level, (cells, d))
        refined = np.empty((2 * cells + 1, d))
        refined[0::2] = values
        refined[1::2] = mid
        values = refined
    return values


def generate(spec: NoiseSpec) -> SampledPath:
    """The path described by ``spec`` on its master grid; bit-identical across runs."""
    times = master_times(spec)
    if spec.kind == "brownian":
        values = _brownian(spec)
    elif spec.kind == "zero":
        values = np.zeros((times.size, spec.dimension))
    elif spec.kind == "identity":
        values = np.repeat(times[:, None], spec.dimension, axis=1)
    elif spec.kind == "sin":
        values = np.repeat(np.sin(2 * np.pi * times / spec.horizon)[:, None], spec.dimension, axis=1)
    else:
        raise NoiseError(f"Unknown noise kind: {spec.kind!r}")
    logger.debug("Generated %s noise: d=%d, level=%d, seed=%d", spec.kind, spec.dimension, spec.master_level, spec.seed)
    return SampledPath(times, values)


def noise_lift(spec: NoiseSpec) -> TimeAugmentedRoughPath:
    """Time-augmented left-point lift of the generated path."""
    return time_augment(rie_lift(generate(spec)))


def rie_report(spec: NoiseSpec, scheme: PartitionScheme, p: float, n_max: int) -> RieReport:
    if scheme.horizon != spec.horizon:
        raise NoiseError(f"scheme horizon {scheme.horizon!r} differs from noise horizon {spec.horizon!r}")
    return rie_diagnostic(generate(spec), scheme, n_max, p)
