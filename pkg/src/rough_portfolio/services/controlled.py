"""Controlled-path algebra over a fixed reference rough path.

All operations evaluate on the master grid of the reference. Compensated
sums are reduced with ``np.cumsum`` in grid order, so repeated runs are
bit-identical.
"""

from __future__ import annotations

import logging
from collections import namedtuple
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from rough_portfolio.models.controlled_path import ControlledPath, ControlledPathError
from rough_portfolio.models.paths import PartitionScheme, SampledPath
from rough_portfolio.models.report import RieReport, SewingReport
from rough_portfolio.models.rough_path import RoughPath
from rough_portfolio.services.gridpath import (
    default_anchors,
    p_variation,
    staircase_index,
    sup_distance,
    two_param_p_variation,
)
from rough_portfolio.services.roughlift import rie_diagnostic
from rough_portfolio.utils.constants import (
    DEFAULT_DET_FLOOR,
    DEFAULT_SEWING_CONSTANT,
    PVAR_ANCHOR_CAP,
    TWO_PARAM_ANCHOR_CAP,
)

logger = logging.getLogger(__name__)

# Value axes use these letters; k (time), y and z (reference directions) are reserved.
_AXES = "abcdefghij"

AssociativityCheck = namedtuple("AssociativityCheck", ["residual", "scale"])


class SingularityError(ControlledPathError):
    pass


# -- constructors -----------------------------------------------------------


def from_rough_path(rp: RoughPath) -> ControlledPath:
    """The reference itself, (X, identity)."""
    eye = np.broadcast_to(np.eye(rp.dim), (rp.size, rp.dim, rp.dim))
    return ControlledPath(rp, rp.values, eye)


def constant(reference: RoughPath, value: float | np.ndarray) -> ControlledPath:
    value = np.asarray(value, dtype=float)
    values = np.broadcast_to(value, (reference.size,) + value.shape)
    return ControlledPath(reference, values, np.zeros(values.shape + (reference.dim,)))


def deterministic(reference: RoughPath, values: np.ndarray) -> ControlledPath:
    """A path with zero Gubinelli derivative (finite-variation or staircase data)."""
    values = np.asarray(values, dtype=float)
    return ControlledPath(reference, values, np.zeros(values.shape + (reference.dim,)))


def clock(reference: RoughPath) -> ControlledPath:
    """First coordinate of the reference, with derivative e_0."""
    derivative = np.zeros((reference.size, reference.dim))
    derivative[:, 0] = 1.0
    return ControlledPath(reference, reference.values[:, 0], derivative)


def concatenate(parts: Sequence[ControlledPath]) -> ControlledPath:
    """Stack controlled paths into one vector-valued path (codomains flattened)."""
    if not parts:
        raise ControlledPathError("nothing to concatenate")
    reference = parts[0].reference
    for part in parts[1:]:
        _shared_reference(parts[0], part)
    n, e = reference.size, reference.dim
    values = np.concatenate([part.values.reshape(n, -1) for part in parts], axis=1)
    derivative = np.concatenate([part.derivative.reshape(n, -1, e) for part in parts], axis=1)
    return ControlledPath(reference, values, derivative)


def component(cp: ControlledPath, index: int | tuple[int, ...]) -> ControlledPath:
    key = (slice(None),) + (index if isinstance(index, tuple) else (index,))
    return ControlledPath(cp.reference, cp.values[key], cp.derivative[key])


def reshape(cp: ControlledPath, shape: tuple[int, ...]) -> ControlledPath:
    n, e = cp.size, cp.reference.dim
    return ControlledPath(
        cp.reference, cp.values.reshape((n,) + shape), cp.derivative.reshape((n,) + shape + (e,))
    )


def add(cp: ControlledPath, cq: ControlledPath) -> ControlledPath:
    _shared_reference(cp, cq)
    if cp.shape != cq.shape:
        raise ControlledPathError(f"cannot add shapes {cp.shape} and {cq.shape}")
    return ControlledPath(cp.reference, cp.values + cq.values, cp.derivative + cq.derivative)


def scale(cp: ControlledPath, factor: float) -> ControlledPath:
    return ControlledPath(cp.reference, factor * cp.values, factor * cp.derivative)


def _shared_reference(cp: ControlledPath, cq: ControlledPath) -> RoughPath:
    a, b = cp.reference, cq.reference
    if a is b:
        return a
    if a.base.same_grid(b.base) and a.dim == b.dim and np.array_equal(a.values, b.values) and np.array_equal(
        a.iterated, b.iterated
    ):
        return a
    raise ControlledPathError("operation needs controlled paths over one shared reference")


# -- smooth maps ------------------------------------------------------------


@dataclass(frozen=True)
class SmoothMap:
    """A map f with its Jacobian, evaluated on whole value arrays.

    ``value`` takes ``(N+1, *in)`` to ``(N+1, *out)``; ``jacobian`` returns
    ``(N+1, *out, *in)``. ``margin`` (optional) measures the distance from a
    singularity per time; composition refuses values with margin below
    ``floor``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    margin: Callable[[np.ndarray], np.ndarray] | None = None
    floor: float = 0.0
    name: str = "f"


def elementwise(
    f: Callable[[np.ndarray], np.ndarray],
    df: Callable[[np.ndarray], np.ndarray],
    margin: Callable[[np.ndarray], np.ndarray] | None = None,
    floor: float = 0.0,
    name: str = "f",
) -> SmoothMap:
    """Lift a scalar function applied entry by entry; its Jacobian is diagonal."""

    def jacobian(x: np.ndarray) -> np.ndarray:
        n, shape = x.shape[0], x.shape[1:]
        k = int(np.prod(shape, dtype=int))
        diag = df(x).reshape(n, k)
        return (diag[:, :, None] * np.eye(k)).reshape((n,) + shape + shape)

    return SmoothMap(f, jacobian, margin, floor, name)


def identity_map() -> SmoothMap:
    return elementwise(lambda x: x, np.ones_like, name="identity")


def square() -> SmoothMap:
    return elementwise(np.square, lambda x: 2.0 * x, name="square")


def exponential() -> SmoothMap:
    return elementwise(np.exp, np.exp, name="exp")


def reciprocal(floor: float = 1e-12) -> SmoothMap:
    def smallest(x: np.ndarray) -> np.ndarray:
        return np.abs(x).reshape(x.shape[0], -1).min(axis=1)

    return elementwise(lambda x: 1.0 / x, lambda x: -1.0 / x**2, smallest, floor, "reciprocal")


def matrix_inverse(floor: float = DEFAULT_DET_FLOOR) -> SmoothMap:
    """Inverse of square matrices; d(A^-1) = -A^-1 dA A^-1."""

    def value(x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(x)

    def jacobian(x: np.ndarray) -> np.ndarray:
        inv = np.linalg.inv(x)
        return -np.einsum("nik,nlj->nijkl", inv, inv)

    def det_margin(x: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.det(x))

    return SmoothMap(value, jacobian, det_margin, floor, "matrix_inverse")


def chain(outer: SmoothMap, inner: SmoothMap) -> SmoothMap:
    """outer ∘ inner with the chain-rule Jacobian."""

    def value(x: np.ndarray) -> np.ndarray:
        return outer.value(inner.value(x))

    def jacobian(x: np.ndarray) -> np.ndarray:
        y = inner.value(x)
        z = outer.value(y)
        n = x.shape[0]
        j_out = outer.jacobian(y).reshape(n, int(np.prod(z.shape[1:], dtype=int)), -1)
        j_in = inner.jacobian(x).reshape(n, int(np.prod(y.shape[1:], dtype=int)), -1)
        return (j_out @ j_in).reshape(z.shape + x.shape[1:])

    return SmoothMap(value, jacobian, inner.margin, inner.floor, f"{outer.name}∘{inner.name}")


def compose_smooth(cp: ControlledPath, fmap: SmoothMap, floor: float | None = None) -> ControlledPath:
    """(f(Y), Df(Y) Y') on the same reference."""
    if fmap.margin is not None:
        limit = fmap.floor if floor is None else floor
        margin = np.asarray(fmap.margin(cp.values), dtype=float)
        bad = np.flatnonzero(~(margin >= limit))
        if bad.size:
            k = int(bad[0])
            raise SingularityError(
                f"{fmap.name}: margin {margin[k]:.3e} below floor {limit:.3e} "
                f"at t={cp.times[k]:.6g}, value={np.array2string(cp.values[k], precision=6)}"
            )
    values = np.asarray(fmap.value(cp.values), dtype=float)
    n, e = cp.size, cp.reference.dim
    jac = np.asarray(fmap.jacobian(cp.values), dtype=float).reshape(n, -1, int(np.prod(cp.shape, dtype=int)))
    derivative = (jac @ cp.derivative.reshape(n, -1, e)).reshape(values.shape + (e,))
    return ControlledPath(cp.reference, values, derivative)


# -- products and integrals -------------------------------------------------


def _elementwise_subscripts(fshape: tuple[int, ...], gshape: tuple[int, ...]) -> str:
    if fshape == ():
        letters = _AXES[: len(gshape)]
        return f",{letters}->{letters}"
    letters = _AXES[: len(fshape)]
    if gshape == ():
        return f"{letters},->{letters}"
    if fshape == gshape:
        return f"{letters},{letters}->{letters}"
    raise ControlledPathError(f"no elementwise product for shapes {fshape} and {gshape}")


def product(cp: ControlledPath, cq: ControlledPath, subscripts: str | None = None) -> ControlledPath:
    """Product of controlled paths with the Leibniz derivative F'G + FG'.

    ``subscripts`` is an einsum spec over value axes (``"ij,j->i"`` for a
    matrix-vector product); the default multiplies entry by entry, with
    scalars broadcast. Letters k, y, z are reserved.
    """
    reference = _shared_reference(cp, cq)
    spec = subscripts or _elementwise_subscripts(cp.shape, cq.shape)
    lhs, out = spec.replace(" ", "").split("->")
    a, b = lhs.split(",")
    values = np.einsum(f"k{a},k{b}->k{out}", cp.values, cq.values)
    derivative = np.einsum(f"k{a}z,k{b}->k{out}z", cp.derivative, cq.values) + np.einsum(
        f"k{a},k{b}z->k{out}z", cp.values, cq.derivative
    )
    return ControlledPath(reference, values, derivative)


def _integral_subscripts(
    fshape: tuple[int, ...], gshape: tuple[int, ...], componentwise: bool
) -> tuple[str, str, str]:
    if fshape == ():
        g = _AXES[: len(gshape)]
        return "", g, g
    if gshape == ():
        f = _AXES[: len(fshape)]
        return f, "", f
    if componentwise:
        if fshape != gshape:
            raise ControlledPathError(f"elementwise integral needs equal shapes, got {fshape} and {gshape}")
        f = _AXES[: len(fshape)]
        return f, f, f
    lead = len(fshape) - len(gshape)
    if lead < 0 or fshape[lead:] != gshape:
        raise ControlledPathError(f"integrand shape {fshape} cannot act on integrator shape {gshape}")
    f = _AXES[: len(fshape)]
    return f, f[lead:], f[:lead]


def compensated_sum(
    integrand: ControlledPath,
    integrator: ControlledPath,
    indices: Sequence[int] | np.ndarray | None = None,
    componentwise: bool = False,
) -> np.ndarray:
    """Running sum of F_s G_{s,t} + F'_s G'_s X2_{s,t} along grid ``indices``.

    Returns the cumulative value at every index (0 at the first one).
    """
    reference = _shared_reference(integrand, integrator)
    idx = np.arange(reference.size) if indices is None else np.asarray(indices, dtype=int)
    s, t = idx[:-1], idx[1:]
    f, g, o = _integral_subscripts(integrand.shape, integrator.shape, componentwise)
    second = reference.second_level(s, t)
    increments = np.einsum(f"k{f},k{g}->k{o}", integrand.values[s], integrator.values[t] - integrator.values[s])
    increments = increments + np.einsum(
        f"k{f}y,k{g}z,kyz->k{o}", integrand.derivative[s], integrator.derivative[s], second
    )
    start = np.zeros((1,) + increments.shape[1:])
    return np.concatenate([start, np.cumsum(increments, axis=0)])


def rough_integral(
    integrand: ControlledPath, integrator: ControlledPath, componentwise: bool = False
) -> ControlledPath:
    """∫F dG on the master grid, carrying the derivative F G'.

    A vector integrand against a vector integrator of the same shape is
    contracted (∫F^T dG); pass ``componentwise=True`` for per-component
    integrals. A scalar on either side is broadcast.
    """
    reference = _shared_reference(integrand, integrator)
    values = compensated_sum(integrand, integrator, componentwise=componentwise)
    f, g, o = _integral_subscripts(integrand.shape, integrator.shape, componentwise)
    derivative = np.einsum(f"k{f},k{g}z->k{o}z", integrand.values, integrator.derivative)
    return ControlledPath(reference, values, derivative)


def riemann_sum_integral(
    integrand: ControlledPath,
    integrator: ControlledPath,
    scheme: PartitionScheme,
    n: int,
    componentwise: bool = False,
) -> SampledPath:
    """Left-point sums of F frozen at the points of P^n, sampled on the master grid."""
    _shared_reference(integrand, integrator)
    owner = staircase_index(integrand.times, scheme, n)
    f, g, o = _integral_subscripts(integrand.shape, integrator.shape, componentwise)
    frozen = integrand.values[owner][:-1]
    increments = np.einsum(f"k{f},k{g}->k{o}", frozen, np.diff(integrator.values, axis=0))
    values = np.concatenate([np.zeros((1,) + increments.shape[1:]), np.cumsum(increments, axis=0)])
    return SampledPath(integrand.times, values.reshape(integrand.size, -1))


def integral_convergence(
    integrand: ControlledPath,
    integrator: ControlledPath,
    scheme: PartitionScheme,
    levels: Sequence[int],
    componentwise: bool = False,
) -> list[tuple[int, float]]:
    """Sup distance of Riemann sums along P^n to the rough integral, per level."""
    exact = rough_integral(integrand, integrator, componentwise).value_path()
    return [
        (n, sup_distance(riemann_sum_integral(integrand, integrator, scheme, n, componentwise), exact))
        for n in levels
    ]


def canonical_lift(cp: ControlledPath) -> RoughPath:
    """Rough path (Z, ∫Z ⊗ dZ - Z_s ⊗ Z_{s,t}) of a scalar or vector controlled path."""
    n, e = cp.size, cp.reference.dim
    z = cp.values.reshape(n, -1)
    zp = cp.derivative.reshape(n, -1, e)
    second = cp.reference.cell_second_levels()
    terms = np.einsum("na,nb->nab", z[:-1], np.diff(z, axis=0))
    terms = terms + np.einsum("nay,nbz,nyz->nab", zp[:-1], zp[:-1], second)
    iterated = np.concatenate([np.zeros((1, z.shape[1], z.shape[1])), np.cumsum(terms, axis=0)])
    return RoughPath(SampledPath(cp.times, z), iterated)


def _sup(cp: ControlledPath) -> float:
    return float(np.max(np.abs(cp.values)) + np.max(np.abs(cp.derivative)))


def associativity_residual(y: ControlledPath, f: ControlledPath, g: ControlledPath) -> AssociativityCheck:
    """sup |∫Y d(∫F dG) - ∫(YF) dG|, with a magnitude scale for relative checks."""
    inner = rough_integral(f, g)
    lhs = rough_integral(y, inner)
    rhs = rough_integral(product(y, f), g)
    diff = (lhs.values - rhs.values).reshape(lhs.size, -1)
    residual = float(np.max(np.linalg.norm(diff, axis=1)))
    scale = (1.0 + _sup(y)) * (1.0 + _sup(f)) * (1.0 + _sup(g))
    logger.debug("Associativity residual %.3e (scale %.3e)", residual, scale)
    return AssociativityCheck(residual, scale)


# -- norms ------------------------------------------------------------------


def _check_exponent(p: float) -> None:
    if not 2 <= p < 3:
        raise ControlledPathError(f"controlled path norms need 2 <= p < 3, got {p!r}")


def _anchor_pair(size: int, anchors: Sequence[int] | np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    if anchors is not None:
        idx = np.asarray(anchors, dtype=int)
        return idx, idx
    return default_anchors(size, PVAR_ANCHOR_CAP), default_anchors(size, TWO_PARAM_ANCHOR_CAP)


def controlled_norm(cp: ControlledPath, p: float, anchors: Sequence[int] | np.ndarray | None = None) -> float:
    """|Y_0| + |Y'_0| + ||Y'||_p + ||R^Y||_{p/2}."""
    _check_exponent(p)
    path_anchors, pair_anchors = _anchor_pair(cp.size, anchors)
    return (
        float(np.linalg.norm(cp.values[0]))
        + float(np.linalg.norm(cp.derivative[0]))
        + p_variation(cp.derivative_path(), p, path_anchors)
        + two_param_p_variation(cp.remainder, p / 2, pair_anchors)
    )


def controlled_distance(
    cp: ControlledPath, cq: ControlledPath, p: float, anchors: Sequence[int] | np.ndarray | None = None
) -> float:
    """Distance between controlled paths whose references share a grid."""
    _check_exponent(p)
    if not cp.reference.base.same_grid(cq.reference.base) or cp.reference.dim != cq.reference.dim:
        raise ControlledPathError("controlled_distance needs references on the same grid")
    if cp.shape != cq.shape:
        raise ControlledPathError(f"shape mismatch: {cp.shape} vs {cq.shape}")
    path_anchors, pair_anchors = _anchor_pair(cp.size, anchors)
    dprime = SampledPath(cp.times, (cp.derivative - cq.derivative).reshape(cp.size, -1))

    def remainder_diff(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        return cp.remainder(s, t) - cq.remainder(s, t)

    return (
        float(np.linalg.norm(cp.values[0] - cq.values[0]))
        + float(np.linalg.norm(cp.derivative[0] - cq.derivative[0]))
        + p_variation(dprime, p, path_anchors)
        + two_param_p_variation(remainder_diff, p / 2, pair_anchors)
    )


def sewing_report(
    integrand: ControlledPath,
    integrator: ControlledPath,
    p: float,
    intervals: int = 16,
    sewing_constant: float = DEFAULT_SEWING_CONSTANT,
    sub_cap: int = 64,
) -> SewingReport:
    """Local error of the one-step compensated sum against the sewing bound.

    For each of ``intervals`` consecutive grid blocks [s, t] the error
    |∫_s^t F dG - F_s G_{s,t} - F'_s G'_s X2_{s,t}| is set against
    C (|F'|_∞ (||G'||_p^p + ||X||_p^p)^{2/p} ||X||_p + ||F||_p ||R^G||_{p/2}
       + ||R^F||_{p/2} |G'|_∞ ||X||_p + ||F'G'||_p ||X2||_{p/2}),
    all norms taken over the block. Bounds are reported, never enforced.
    """
    _check_exponent(p)
    reference = _shared_reference(integrand, integrator)
    total = rough_integral(integrand, integrator)
    f, g, o = _integral_subscripts(integrand.shape, integrator.shape, False)
    edges = np.unique(np.round(np.linspace(0, reference.size - 1, intervals + 1)).astype(int))
    n, e = reference.size, reference.dim
    fg_prime = np.einsum(f"k{f}y,k{g}z->k{o}yz", integrand.derivative, integrator.derivative).reshape(n, -1)
    fp_sup = float(np.max(np.linalg.norm(integrand.derivative.reshape(n, -1), axis=1)))
    gp_sup = float(np.max(np.linalg.norm(integrator.derivative.reshape(n, -1), axis=1)))

    starts, ends, errors, bounds = [], [], [], []
    for s, t in zip(edges[:-1], edges[1:]):
        one_step = compensated_sum(integrand, integrator, [s, t])[-1]
        local = np.linalg.norm(total.values[t] - total.values[s] - one_step)
        anchors = s + default_anchors(t - s + 1, sub_cap)

        def var(values: np.ndarray, q: float) -> float:
            return p_variation(SampledPath(reference.times, values.reshape(n, -1)), q, anchors)

        x_p = var(reference.values, p)
        gp_p = var(integrator.derivative, p)
        bound = sewing_constant * (
            fp_sup * (gp_p**p + x_p**p) ** (2 / p) * x_p
            + var(integrand.values, p) * two_param_p_variation(integrator.remainder, p / 2, anchors)
            + two_param_p_variation(integrand.remainder, p / 2, anchors) * gp_sup * x_p
            + var(fg_prime, p) * two_param_p_variation(reference.second_level, p / 2, anchors)
        )
        starts.append(float(reference.times[s]))
        ends.append(float(reference.times[t]))
        errors.append(float(local))
        bounds.append(float(bound))
    return SewingReport(tuple(starts), tuple(ends), tuple(errors), tuple(bounds))


def controlled_rie_report(cp: ControlledPath, scheme: PartitionScheme, n_max: int, p: float) -> RieReport:
    """Riemann-sum lift diagnostic applied to the value path of ``cp``."""
    return rie_diagnostic(cp.value_path(), scheme, n_max, p)
