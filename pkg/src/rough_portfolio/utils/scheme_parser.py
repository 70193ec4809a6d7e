from __future__ import annotations

import re

_SCHEME_RE = re.compile(r"^(uniform|dyadic)(?::(\d+))?$")
_RANGE_RE = re.compile(r"^(-?\d+)\.\.(-?\d+)$")


def parse_scheme(text: str) -> tuple[str, int | None]:
    """Split a partition scheme name into its kind and optional level.

    Supports:
        - Bare kind: "dyadic", "uniform"
        - Kind with level: "dyadic:6", "uniform:128"

    Returns None in place of the level when none is given. Raises
    ValueError for anything else.
    """
    match = _SCHEME_RE.match(text.strip().lower())
    if not match:
        raise ValueError(f"Not a partition scheme: {text!r}")
    kind, level = match.groups()
    return kind, int(level) if level is not None else None


def parse_int_list(text: str) -> tuple[int, ...]:
    """Parse "6..12" (inclusive range) or "1,2,5" into a tuple of ints."""
    stripped = text.strip()
    if not stripped:
        return ()
    match = _RANGE_RE.match(stripped)
    if match:
        start, stop = int(match.group(1)), int(match.group(2))
        step = 1 if stop >= start else -1
        return tuple(range(start, stop + step, step))
    try:
        return tuple(int(item) for item in stripped.split(",") if item.strip())
    except ValueError as e:
        raise ValueError(f"Not an integer list: {text!r}") from e
