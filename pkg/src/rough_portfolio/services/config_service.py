from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from collections.abc import Callable, Iterable, Mapping
from pathlib import Path
from typing import Any

from rough_portfolio.models.noise import NoiseError, NoiseSpec
from rough_portfolio.models.sweep import ConfigError, SweepConfig
from rough_portfolio.utils.scheme_parser import parse_int_list

logger = logging.getLogger(__name__)

__all__ = ["ConfigError", "ConfigService", "config_hash", "parse_overrides"]


# Flat key -> (SweepConfig field, parser)
_SCALAR_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "experiment": ("experiment", str),
    "model": ("model", str),
    "family": ("family", str),
    "s0": ("s0", float),
    "clock": ("clock", str),
    "scheme": ("scheme", str),
    "deltas": ("deltas", parse_int_list),
    "levels": ("levels", parse_int_list),
    "seeds": ("seeds", parse_int_list),
    "p": ("p", float),
    "p_prime": ("p_prime", float),
    "q": ("q", float),
    "beta": ("beta", float),
    "epsilon": ("epsilon", float),
    "det_floor": ("det_floor", float),
    "sewing_constant": ("sewing_constant", float),
    "pvar_cap": ("pvar_cap", int),
    "pair_cap": ("pair_cap", int),
    "workers": ("workers", int),
}

_NOISE_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "noise.kind": ("kind", str),
    "noise.dim": ("dimension", int),
    "noise.horizon": ("horizon", float),
    "noise.level": ("master_level", int),
}


def _format_ints(values: Iterable[int]) -> str:
    return ",".join(str(v) for v in values)


def config_hash(settings: Mapping[str, str]) -> str:
    """SHA-256 of the ``key=value`` lines sorted by key."""
    canonical = "\n".join(f"{key}={settings[key]}" for key in sorted(settings))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    """Turn ``key=value`` command-line overrides into a settings dict."""
    overrides: dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        overrides[key.strip()] = value.strip()
    return overrides


class ConfigService:
    """Reads and writes flat experiment configuration files.

    The format is one ``key=value`` per line with ``#`` comment lines and no
    sections. Dotted keys group related settings: ``noise.level=12``,
    ``family.mu=0.1``. When a key repeats, the last occurrence wins.
    """

    def read_settings(self, file_path: str | Path) -> dict[str, str]:
        settings: dict[str, str] = {}
        for number, line in enumerate(self._read_lines(file_path), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{file_path}:{number}: expected key=value, got {stripped!r}")
            settings.pop(key.strip(), None)
            settings[key.strip()] = value.strip()
        return settings

    def load(self, file_path: str | Path, overrides: Mapping[str, str] | None = None) -> SweepConfig:
        """Parse ``file_path`` (plus ``overrides``) into a validated SweepConfig."""
        settings = self.read_settings(file_path)
        settings.update(overrides or {})
        return self.from_settings(settings)

    def from_settings(self, settings: Mapping[str, str]) -> SweepConfig:
        kwargs: dict[str, Any] = {}
        noise_kwargs: dict[str, Any] = {}
        family_params: dict[str, float] = {}

        for key, value in settings.items():
            if key in _SCALAR_KEYS:
                name, parse = _SCALAR_KEYS[key]
                kwargs[name] = self._parse(key, value, parse)
            elif key in _NOISE_KEYS:
                name, parse = _NOISE_KEYS[key]
                noise_kwargs[name] = self._parse(key, value, parse)
            elif key.startswith("family.") and len(key) > len("family."):
                family_params[key.partition(".")[2]] = self._parse(key, value, float)
            else:
                logger.warning("Ignoring unknown config key %r", key)

        try:
            kwargs["noise"] = NoiseSpec(**noise_kwargs)
        except NoiseError as e:
            raise ConfigError(f"noise: {e}") from e
        kwargs["family_params"] = family_params
        return SweepConfig(**kwargs)

    def to_settings(self, cfg: SweepConfig) -> dict[str, str]:
        """Canonical settings for ``cfg``; loading them gives ``cfg`` back."""
        settings = {
            "experiment": cfg.experiment,
            "model": cfg.model,
            "family": cfg.family,
            "s0": repr(cfg.s0),
            "clock": cfg.clock,
            "scheme": cfg.scheme,
            "deltas": _format_ints(cfg.deltas),
            "levels": _format_ints(cfg.levels),
            "seeds": _format_ints(cfg.seeds),
            "p": repr(cfg.p),
            "p_prime": repr(cfg.p_prime),
            "q": repr(cfg.q),
            "beta": repr(cfg.beta),
            "epsilon": repr(cfg.epsilon),
            "det_floor": repr(cfg.det_floor),
            "sewing_constant": repr(cfg.sewing_constant),
            "pvar_cap": str(cfg.pvar_cap),
            "pair_cap": str(cfg.pair_cap),
            "workers": str(cfg.workers),
            "noise.kind": cfg.noise.kind,
            "noise.dim": str(cfg.noise.dimension),
            "noise.horizon": repr(cfg.noise.horizon),
            "noise.level": str(cfg.noise.master_level),
        }
        for name, value in sorted(cfg.family_params.items()):
            settings[f"family.{name}"] = repr(float(value))
        return settings

    def save(self, file_path: str | Path, settings: SweepConfig | Mapping[str, str]) -> None:
        """Write settings as sorted key=value lines, atomically."""
        if isinstance(settings, SweepConfig):
            settings = self.to_settings(settings)
        file_path = Path(file_path)
        lines = [f"{key}={settings[key]}\n" for key in sorted(settings)]

        # Atomic write: write to temp file then rename
        fd, tmp_path = tempfile.mkstemp(dir=file_path.parent, suffix=".tmp", prefix=".rp_")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.writelines(lines)
            os.replace(tmp_path, file_path)
        except BaseException:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass
            raise

    def _parse(self, key: str, value: str, parse: Callable[[str], Any]) -> Any:
        try:
            return parse(value)
        except ValueError as e:
            raise ConfigError(f"{key}: cannot parse {value!r}") from e

    def _read_lines(self, file_path: str | Path) -> list[str]:
        try:
            with open(file_path, encoding="utf-8") as f:
                return f.readlines()
        except OSError as e:
            raise ConfigError(f"cannot read config file {file_path}: {e}") from e
