"""Named load fields for the command line (``--f``)."""

from __future__ import annotations

import numpy as np

NAMED_FIELDS = {
    # smooth nonnegative bump centred at the origin
    "bump": lambda x, y: np.exp(-4.0 * (x * x + y * y)),
    # sign-changing load, useful for checks that must reject f < 0
    "dipole": lambda x, y: x,
}


def parse_field(spec: str):
    """Return ``(callable, constant)``; ``constant`` is None for non-constant fields."""
    spec = str(spec).strip()
    try:
        value = float(spec)
    except ValueError:
        if spec not in NAMED_FIELDS:
            raise ValueError(
                f"unknown load {spec!r}; give a number or one of {sorted(NAMED_FIELDS)}"
            ) from None
        return NAMED_FIELDS[spec], None
    if not np.isfinite(value):
        raise ValueError("constant load must be finite")
    return (lambda x, y: np.full_like(x, value)), value


def sample(spec: str, vertices: np.ndarray) -> np.ndarray:
    fn, _ = parse_field(spec)
    return np.asarray(fn(vertices[:, 0], vertices[:, 1]), dtype=float)
