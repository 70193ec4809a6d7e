from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class RieReport:
    """Per-level summary of the Riemann-sum lift diagnostic."""

    kind: str
    levels: tuple[int, ...]
    part2_sup_err: tuple[float, ...]
    part3_sup_stat: tuple[float, ...]
    bounded: bool

    def to_records(self) -> list[dict[str, float | int]]:
        return [
            {"level": n, "part2_sup_err": e, "part3_sup_stat": s}
            for n, e, s in zip(self.levels, self.part2_sup_err, self.part3_sup_stat)
        ]


@dataclass(frozen=True)
class SewingReport:
    """Local compensated-sum errors next to the sewing bound, per interval."""

    starts: tuple[float, ...]
    ends: tuple[float, ...]
    errors: tuple[float, ...]
    bounds: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return all(e <= b for e, b in zip(self.errors, self.bounds))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    half_width: float


@dataclass
class ExperimentReport:
    """Results of one lab run, serialised to report.json and points.csv.

    ``points`` holds one flat row per (seed, sweep value); everything else is
    summary material for the JSON file.
    """

    name: str
    points: list[dict[str, Any]] = field(default_factory=list)
    slopes: dict[str, Any] = field(default_factory=dict)
    theory: dict[str, Any] = field(default_factory=dict)
    constants: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    acceptance: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.acceptance.values())

    def summary(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "slopes": self.slopes,
            "theory": self.theory,
            "constants": self.constants,
            "metadata": self.metadata,
            "acceptance": self.acceptance,
        }
