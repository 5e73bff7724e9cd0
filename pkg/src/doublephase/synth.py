"""Deterministic synthetic test images with values in [0, 1]."""

from __future__ import annotations

import numpy as np

from .grid import ScalarField

__all__ = ["KINDS", "synthesize"]

KINDS = ("step", "disk", "ramp", "ramp+noise", "two-region")

DEFAULT_NOISE = 0.05


def _clean(kind: str, size: int) -> np.ndarray:
    j = np.arange(size)
    cols = np.broadcast_to(j[None, :], (size, size))
    rows = np.broadcast_to(j[:, None], (size, size))
    if kind == "step":
        return (cols >= size // 2).astype(float)
    if kind in ("ramp", "ramp+noise"):
        return cols / (size - 1.0)
    if kind == "disk":
        c = (size - 1) / 2.0
        return (((cols - c) ** 2 + (rows - c) ** 2) <= (size / 4.0) ** 2).astype(float)
    if kind == "two-region":
        # a centred square; its edge stays away from the image border
        lo, hi = size // 4, size - size // 4
        inside = (rows >= lo) & (rows < hi) & (cols >= lo) & (cols < hi)
        return np.where(inside, 0.8, 0.2)
    raise ValueError(f"unknown image kind {kind!r}; expected one of {', '.join(KINDS)}")


def synthesize(kind: str, size: int = 64, seed: int = 0, noise: float | None = None,
               spacing: float = 1.0) -> ScalarField:
    """Square ``size x size`` test image.

    Pixel ``(i, j)`` is row ``i``, column ``j``; the ramp rises along columns
    as ``j / (size - 1)``.  Gaussian noise of standard deviation ``noise``
    (default 0.05 for ``ramp+noise`` and 0 otherwise) is drawn from
    ``numpy.random.default_rng(seed)``; the result is not clipped.
    """
    if size < 2:
        raise ValueError("size must be >= 2")
    values = _clean(kind, size)
    if noise is None:
        noise = DEFAULT_NOISE if kind == "ramp+noise" else 0.0
    if noise < 0:
        raise ValueError("noise level must be non-negative")
    if noise > 0:
        values = values + noise * np.random.default_rng(seed).standard_normal(values.shape)
    return ScalarField(values, spacing)
