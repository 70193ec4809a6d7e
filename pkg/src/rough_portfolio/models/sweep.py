from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field

from rough_portfolio.models.noise import NoiseSpec
from rough_portfolio.utils.constants import (
    DEFAULT_BETA,
    DEFAULT_DELTA_EXPONENTS,
    DEFAULT_DET_FLOOR,
    DEFAULT_EPSILON,
    DEFAULT_LEVELS,
    DEFAULT_P,
    DEFAULT_P_PRIME,
    DEFAULT_Q,
    DEFAULT_SEWING_CONSTANT,
    MIN_FIT_POINTS,
    PVAR_ANCHOR_CAP,
    TWO_PARAM_ANCHOR_CAP,
)
from rough_portfolio.utils.errors import RoughPortfolioError


class ConfigError(RoughPortfolioError):
    pass


EXPERIMENTS = ("stability", "discretization")
MODELS = ("lv", "bs")
_CLOCK_RE = re.compile(r"^(terminal|linear|periodic:[1-9]\d*)$")


@dataclass(frozen=True)
class SweepConfig:
    """One experiment: model, coefficient family, noise, seeds and sweep grid.

    ``deltas`` are exponents k of the perturbation sizes 2^-k; ``levels``
    index the partitions of ``scheme``. The variation exponents must satisfy
    2 <= p < p' < 3, q in (1, 2) with 1/p' + 1/q > 1, and
    beta in (1 - 1/p, 2/p).
    """

    experiment: str = "stability"
    model: str = "lv"
    family: str = "lv.tanh"
    family_params: Mapping[str, float] = field(default_factory=dict)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seeds: tuple[int, ...] = (0,)
    s0: float = 1.0
    clock: str = "terminal"
    scheme: str = "dyadic"
    deltas: tuple[int, ...] = DEFAULT_DELTA_EXPONENTS
    levels: tuple[int, ...] = DEFAULT_LEVELS
    p: float = DEFAULT_P
    p_prime: float = DEFAULT_P_PRIME
    q: float = DEFAULT_Q
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON
    det_floor: float = DEFAULT_DET_FLOOR
    sewing_constant: float = DEFAULT_SEWING_CONSTANT
    pvar_cap: int = PVAR_ANCHOR_CAP
    pair_cap: int = TWO_PARAM_ANCHOR_CAP
    workers: int = 1

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {self.model!r}")
        if not self.family.startswith(f"{self.model}."):
            raise ConfigError(f"family: {self.family!r} is not a {self.model} family")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds) or min(self.seeds) < 0:
            raise ConfigError("seeds: need distinct non-negative seeds")
        if not self.s0 > 0:
            raise ConfigError(f"s0: must be positive, got {self.s0!r}")
        if not _CLOCK_RE.match(self.clock):
            raise ConfigError(f"clock: expected terminal, linear or periodic:<count>, got {self.clock!r}")
        if self.scheme not in ("uniform", "dyadic"):
            raise ConfigError(f"scheme: expected uniform or dyadic, got {self.scheme!r}")

        sweep = self.deltas if self.experiment == "stability" else self.levels
        key = "deltas" if self.experiment == "stability" else "levels"
        if len(sweep) < MIN_FIT_POINTS:
            raise ConfigError(f"{key}: need at least {MIN_FIT_POINTS} sweep points, got {len(sweep)}")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigError(f"{key}: must be strictly increasing")
        if min(sweep) < (0 if key == "deltas" else 1):
            raise ConfigError(f"{key}: values out of range")

        if not 2 <= self.p < self.p_prime < 3:
            raise ConfigError(f"p, p_prime: need 2 <= p < p' < 3, got {self.p!r}, {self.p_prime!r}")
        if not (1 < self.q < 2 and 1 / self.p_prime + 1 / self.q > 1):
            raise ConfigError(f"q: need q in (1, 2) with 1/p' + 1/q > 1, got {self.q!r}")
        if not 1 - 1 / self.p < self.beta < 2 / self.p:
            raise ConfigError(f"beta: need 1 - 1/p < beta < 2/p, got {self.beta!r}")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon: need 0 < epsilon < 1, got {self.epsilon!r}")
        if not self.det_floor > 0:
            raise ConfigError(f"det_floor: must be positive, got {self.det_floor!r}")
        if not self.sewing_constant > 0:
            raise ConfigError(f"sewing_constant: must be positive, got {self.sewing_constant!r}")
        if self.pvar_cap < 2 or self.pair_cap < 2:
            raise ConfigError("pvar_cap, pair_cap: need at least 2 anchors")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
