from __future__ import annotations

from dataclasses import dataclass

from rough_portfolio.utils.constants import MAX_NOISE_LEVEL
from rough_portfolio.utils.errors import RoughPortfolioError


class NoiseError(RoughPortfolioError):
    pass


NOISE_KINDS = ("brownian", "zero", "identity", "sin")


@dataclass(frozen=True)
class NoiseSpec:
    """A driving path: its kind, dimension, horizon, dyadic master level and seed.

    ``kind`` is ``brownian`` or a deterministic closed form (``zero``,
    ``identity``, ``sin``); ``deterministic:<name>`` is accepted as well.
    """

    kind: str = "brownian"
    dimension: int = 1
    horizon: float = 1.0
    master_level: int = 12
    seed: int = 0

    def __post_init__(self) -> None:
        kind = self.kind.strip().lower()
        if kind.startswith("deterministic:"):
            kind = kind.partition(":")[2]
        if kind not in NOISE_KINDS:
            raise NoiseError(f"Unknown noise kind: {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.dimension < 1:
            raise NoiseError(f"noise dimension must be >= 1, got {self.dimension}")
        if not self.horizon > 0:
            raise NoiseError(f"horizon must be positive, got {self.horizon!r}")
        if not 0 <= self.master_level <= MAX_NOISE_LEVEL:
            raise NoiseError(f"master level must lie in 0..{MAX_NOISE_LEVEL}, got {self.master_level}")
        if not 0 <= self.seed < 2**64:
            raise NoiseError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def size(self) -> int:
        """Number of master grid points."""
        return 2**self.master_level + 1

    def with_seed(self, seed: int) -> NoiseSpec:
        return NoiseSpec(self.kind, self.dimension, self.horizon, self.master_level, seed)

    def with_level(self, level: int) -> NoiseSpec:
        return NoiseSpec(self.kind, self.dimension, self.horizon, level, self.seed)
