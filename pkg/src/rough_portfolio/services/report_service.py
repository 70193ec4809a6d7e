"""CSV and JSON output for paths, lifts and experiment reports.

Floats are written with full precision and JSON keys are sorted, so the same
inputs always give byte-identical files.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from rough_portfolio.models.paths import SampledPath
from rough_portfolio.models.portfolio import PortfolioPath, WealthPath
from rough_portfolio.models.report import ExperimentReport
from rough_portfolio.models.rough_path import RoughPath
from rough_portfolio.utils.constants import CSV_FLOAT_FORMAT, POINTS_FILE, REPORT_FILE

logger = logging.getLogger(__name__)


def _atomic_write(file_path: Path, text: str) -> None:
    file_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=file_path.parent, suffix=".tmp", prefix=".rp_")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, file_path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise
    logger.info("Wrote %s", file_path)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple | set | frozenset):
        return list(value)
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def path_frame(path: SampledPath, prefix: str = "x") -> pd.DataFrame:
    """Columns ``t, x1..xd``."""
    frame = pd.DataFrame(path.values, columns=[f"{prefix}{i + 1}" for i in range(path.dim)])
    frame.insert(0, "t", path.times)
    return frame


def lift_frame(rp: RoughPath) -> pd.DataFrame:
    """Columns ``t, x1..xd, I11..Idd`` with I the running iterated integral."""
    d = rp.dim
    names = [f"I{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    iterated = pd.DataFrame(rp.iterated.reshape(rp.size, d * d), columns=names)
    return pd.concat([path_frame(rp.base), iterated], axis=1)


def portfolio_frame(portfolio: PortfolioPath, wealth: WealthPath, realized: WealthPath | None = None) -> pd.DataFrame:
    """Columns ``t, phi0, phi1..phim, kappa, V`` and ``Vhat`` when a realized wealth is given."""
    holdings = portfolio.holdings()
    names = ["phi0"] + [f"phi{i + 1}" for i in range(portfolio.assets)]
    frame = pd.DataFrame(holdings, columns=names)
    frame.insert(0, "t", portfolio.times)
    frame["kappa"] = portfolio.kappa.values
    frame["V"] = wealth.values
    if realized is not None:
        frame["Vhat"] = realized.values
    return frame


def write_csv(frame: pd.DataFrame, file_path: str | Path) -> Path:
    file_path = Path(file_path)
    _atomic_write(file_path, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"))
    return file_path


def write_records(records: list[dict[str, Any]], file_path: str | Path) -> Path:
    return write_csv(pd.DataFrame(records), file_path)


def write_path(path: SampledPath, file_path: str | Path, prefix: str = "x") -> Path:
    return write_csv(path_frame(path, prefix), file_path)


def write_lift(rp: RoughPath, file_path: str | Path) -> Path:
    return write_csv(lift_frame(rp), file_path)


def read_path(file_path: str | Path) -> SampledPath:
    """Load a ``t, x1..xd`` CSV written by ``write_path``."""
    frame = pd.read_csv(file_path, float_precision="round_trip")
    return SampledPath(frame["t"].to_numpy(), frame.drop(columns="t").to_numpy())


def dumps_report(report: ExperimentReport) -> str:
    return json.dumps(report.summary(), sort_keys=True, indent=2, default=_json_default) + "\n"


def write_report(report: ExperimentReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``report.json`` and ``points.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    json_path = out_dir / REPORT_FILE
    _atomic_write(json_path, dumps_report(report))
    csv_path = write_records(report.points, out_dir / POINTS_FILE)
    return json_path, csv_path
