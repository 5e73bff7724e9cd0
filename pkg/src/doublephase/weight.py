"""Edge-adaptive weights and the regularity conditions they must satisfy."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .grid import ScalarField, forward_differences

__all__ = [
    "WeightSpec",
    "estimate_weight",
    "modulus_regularize",
    "check_remark_condition",
    "boundary_positivity",
    "boundary_mask",
]


@dataclass(frozen=True)
class WeightSpec:
    """Parameters of the edge detector.

    ``presmooth_sigma`` is in physical length units, like the grid spacing.
    """

    presmooth_sigma: float = 1.0
    edge_threshold: float = 0.1
    a_max: float = 1.0
    holder_alpha: float = 1.0
    modulus_constant: float = 1.0

    def __post_init__(self):
        for name in ("presmooth_sigma", "edge_threshold", "a_max", "modulus_constant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.5 < self.holder_alpha <= 1.0:
            raise ValueError(f"holder_alpha must lie in (1/2, 1], got {self.holder_alpha}")


def estimate_weight(f: ScalarField, spec: WeightSpec) -> ScalarField:
    """``a_max * (1 - |grad(G_sigma * f)| / T)_+``, then Hölder-regularised.

    The weight vanishes wherever the presmoothed data has gradient magnitude
    at least ``edge_threshold`` and equals ``a_max`` on flat data.
    """
    smoothed = gaussian_filter(f.values, spec.presmooth_sigma / f.spacing, mode="reflect")
    g = forward_differences(smoothed, f.spacing)
    mag = np.sqrt(np.sum(g * g, axis=0))
    raw = spec.a_max * np.maximum(0.0, 1.0 - mag / spec.edge_threshold)
    return modulus_regularize(f.with_values(raw), spec.holder_alpha, spec.modulus_constant)


def _offsets(shape, radius_pixels):
    ranges = [range(-min(r, s - 1), min(r, s - 1) + 1) for r, s in zip(radius_pixels, shape)]
    return itertools.product(*ranges)


def modulus_regularize(a: ScalarField, alpha: float, L: float) -> ScalarField:
    """Hölder lower envelope ``min_y a(y) + L |x - y|**alpha``.

    The result lies below ``a``, has Hölder-``alpha`` constant at most ``L``
    and keeps every zero of ``a``.  Only offsets with ``L |d|**alpha <= max a``
    can win the minimum, so the sweep is exact while visiting only those.
    """
    if np.any(a.values < 0):
        raise ValueError("weight must be non-negative")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not L > 0:
        raise ValueError("modulus constant must be positive")
    v = a.values
    top = float(v.max())
    if top == 0.0:
        return a
    h = a.spacing
    reach = (top / L) ** (1.0 / alpha)
    rpix = int(math.floor(reach / h))
    rad = [rpix] * v.ndim
    out = v.copy()
    big = np.inf
    pad = [(min(r, s - 1), min(r, s - 1)) for r, s in zip(rad, v.shape)]
    padded = np.pad(v, pad, mode="constant", constant_values=big)
    for off in _offsets(v.shape, rad):
        if not any(off):
            continue
        dist = h * math.sqrt(sum(o * o for o in off))
        cost = L * dist**alpha
        if cost >= top:
            continue
        sl = tuple(slice(p[0] + o, p[0] + o + s) for p, o, s in zip(pad, off, v.shape))
        np.minimum(out, padded[sl] + cost, out=out)
    return a.with_values(out)


def _pair_ratio(ap_x, ap_y, dist):
    den = np.maximum(dist, ap_y)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, ap_x / den, np.where(ap_x > 0, np.inf, 0.0))
    return r


def check_remark_condition(
    a: ScalarField, alpha: float, n_random: int = 100_000, near: int = 4, seed: int = 0
) -> float:
    """Smallest ``C`` with ``a(x)**(1/alpha) <= C max(|x-y|, a(y)**(1/alpha))``.

    The maximum is taken over the diagonal ``y = x``, every pair at most
    ``near`` pixels apart, and ``n_random`` random pairs drawn with ``seed``.
    """
    if np.any(a.values < 0):
        raise ValueError("weight must be non-negative")
    v = a.values
    h = a.spacing
    ap = v ** (1.0 / alpha)
    C = float(np.max(np.where(ap > 0, 1.0, 0.0)))
    pad = [(near, near)] * v.ndim
    padded = np.pad(ap, pad, mode="constant", constant_values=np.nan)
    for off in _offsets(v.shape, [near] * v.ndim):
        if not any(off):
            continue
        dist = h * math.sqrt(sum(o * o for o in off))
        if dist > near * h:
            continue
        sl = tuple(slice(near + o, near + o + s) for o, s in zip(off, v.shape))
        other = padded[sl]
        ok = ~np.isnan(other)
        if np.any(ok):
            C = max(C, float(np.max(_pair_ratio(ap[ok], other[ok], dist))))
    if n_random:
        rng = np.random.default_rng(seed)
        flat = ap.ravel()
        i = rng.integers(0, flat.size, n_random)
        j = rng.integers(0, flat.size, n_random)
        xi = np.array(np.unravel_index(i, v.shape), dtype=float)
        xj = np.array(np.unravel_index(j, v.shape), dtype=float)
        dist = h * np.sqrt(np.sum((xi - xj) ** 2, axis=0))
        C = max(C, float(np.max(_pair_ratio(flat[i], flat[j], dist))))
    return C


def boundary_mask(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[axis] = 0
        mask[tuple(sl)] = True
        sl[axis] = -1
        mask[tuple(sl)] = True
    return mask


def boundary_positivity(a: ScalarField, tol: float = 0.0) -> float:
    """Fraction of boundary pixels where ``a > tol``."""
    mask = boundary_mask(a.shape)
    return float(np.mean(a.values[mask] > tol))
