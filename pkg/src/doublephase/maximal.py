"""Capped fractional maximal function of discrete measures.

``M(x) = sup_{r <= diam} min(|mu|(B(x, r)), r**sigma) / |B(x, r)|**(1 - alpha/n)``

is evaluated two ways: over a geometric ladder of ball radii, and through the
dyadic-cube majorant ``sup_k min(|mu|(3 D_k(x)), 2**(sigma k)) / 2**((n - alpha) k)``
with half-open cubes anchored at the lower domain corner.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .grid import ScalarField, forward_differences

__all__ = [
    "DiscreteMeasure",
    "DyadicGrid",
    "LpExperiment",
    "capped_maximal_ball",
    "capped_maximal_dyadic",
    "ball_ladder",
    "ball_volume",
    "domination_constant",
    "plane_measure",
    "lp_experiment",
    "lp_threshold",
    "distance_power_law",
    "ball_decay_check",
    "extreme_sum",
    "brute_force_sum",
]

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point masses in the box ``[lower, upper)``.

    ``weights`` has shape ``(N,)`` for a non-negative scalar measure or
    ``(N, n)`` for a vector measure; ``|mu|`` of a set is the sum of the
    Euclidean norms of the weights of the atoms inside it.
    """

    positions: np.ndarray
    weights: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    total_variation: float = field(init=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64)
        lo = np.array(self.lower, dtype=np.float64).ravel()
        hi = np.array(self.upper, dtype=np.float64).ravel()
        n = lo.size
        if n not in (2, 3) or hi.size != n or np.any(hi <= lo):
            raise ValueError("domain must be a non-degenerate box in 2 or 3 dimensions")
        pos = pos.reshape(-1, n)
        if w.ndim == 1:
            if np.any(w < 0):
                raise ValueError("scalar atom weights must be non-negative")
        elif w.shape[1:] != (n,):
            raise ValueError(f"vector weights must have shape (N, {n})")
        if w.shape[0] != pos.shape[0]:
            raise ValueError("one weight per atom")
        if np.any(pos < lo) or np.any(pos >= hi):
            raise ValueError("atoms must lie inside the domain")
        for name, arr in (("positions", pos), ("weights", w), ("lower", lo), ("upper", hi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "total_variation", float(np.sum(self.mass)))

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def mass(self) -> np.ndarray:
        """``|weight|`` per atom."""
        w = self.weights
        return w if w.ndim == 1 else np.sqrt(np.sum(w * w, axis=1))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions, self.weights * factor, self.lower, self.upper)

    @classmethod
    def empty(cls, lower, upper) -> "DiscreteMeasure":
        n = len(lower)
        return cls(np.zeros((0, n)), np.zeros(0), lower, upper)


def ball_volume(n: int, r):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * np.asarray(r, dtype=float) ** n


def domination_constant(n: int, alpha: float) -> float:
    """Bound ``2**(n - alpha) / omega_n**(1 - alpha/n)`` on the ratio ball / dyadic.

    ``B(x, r) ⊂ 3 D_k(x)`` for ``2**(k-1) <= r < 2**k``, so the numerators
    compare directly and only the denominators differ.
    """
    return 2.0 ** (n - alpha) / float(ball_volume(n, 1.0)) ** (1.0 - alpha / n)


def _check_params(n, alpha, sigma):
    if not 0 < sigma < n:
        raise ValueError(f"sigma must lie in (0, {n}), got {sigma}")
    if not 0 < alpha < n - sigma:
        raise ValueError(f"alpha must lie in (0, {n - sigma:g}), got {alpha}")


def _query_grid(mu: DiscreteMeasure, spacing: float):
    extent = mu.upper - mu.lower
    counts = np.rint(extent / spacing).astype(int)
    if np.any(counts < 2) or not np.allclose(counts * spacing, extent, rtol=1e-9, atol=0):
        raise ValueError("query spacing must divide the domain into at least 2 cells per axis")
    axes = [mu.lower[k] + (np.arange(counts[k]) + 0.5) * spacing for k in range(mu.dimension)]
    mesh = np.meshgrid(*axes[::-1], indexing="ij")  # rows are y, columns are x
    points = np.stack([m.ravel() for m in mesh[::-1]], axis=1)
    return points, tuple(counts[::-1])


def ball_ladder(diameter: float, finest: float) -> np.ndarray:
    """Radii ``diameter * 2**-j`` down to the last one not below ``finest``."""
    j_max = max(0, int(math.floor(math.log2(diameter / finest) + 1e-12)))
    return diameter * 2.0 ** -np.arange(j_max + 1)


def _ball_values(mu, points, alpha, sigma, radii, capped=True):
    n = mu.dimension
    mass = mu.mass
    denom = ball_volume(n, radii) ** (1.0 - alpha / n)
    cap = radii**sigma if capped else np.full(radii.shape, np.inf)
    out = np.zeros(len(points))
    if mass.size == 0:
        return out
    for start in range(0, len(points), _CHUNK):
        q = points[start:start + _CHUNK]
        d2 = np.sum((q[:, None, :] - mu.positions[None, :, :]) ** 2, axis=2)
        best = np.zeros(len(q))
        for r, c, den in zip(radii, cap, denom):
            inside = (d2 < r * r).astype(np.float64) @ mass
            np.maximum(best, np.minimum(inside, c) / den, out=best)
        out[start:start + _CHUNK] = best
    return out


def capped_maximal_ball(mu: DiscreteMeasure, alpha: float, sigma: float,
                        query_spacing: float = None, points=None, cap: bool = True):
    """Ball version over the radius ladder ``diam * 2**-j`` (open balls).

    With ``query_spacing`` the field is evaluated at the pixel centres of a
    grid over the domain and a :class:`ScalarField` is returned; the ladder
    stops at one grid cell.  With ``points`` (shape ``(Q, n)``) an array is
    returned and the ladder stops at ``diam / 2**20``.  ``cap=False`` drops the
    ``r**sigma`` cap (for checks only).
    """
    n = mu.dimension
    _check_params(n, alpha, sigma)
    if (query_spacing is None) == (points is None):
        raise ValueError("give exactly one of query_spacing and points")
    if query_spacing is not None:
        pts, shape = _query_grid(mu, query_spacing)
        finest = query_spacing
    else:
        pts = np.asarray(points, dtype=float).reshape(-1, n)
        shape, finest = None, mu.diameter * 2.0**-20
    radii = ball_ladder(mu.diameter, finest)
    vals = _ball_values(mu, pts, alpha, sigma, radii, capped=cap)
    if shape is None:
        return vals
    return ScalarField(vals.reshape(shape), query_spacing)


@dataclass(frozen=True, eq=False)
class DyadicGrid:
    """Masses ``|mu|(D)`` of the half-open dyadic cubes at levels ``k_min..k0``.

    ``k0`` is the smallest integer with ``2**k0 > diam``.  Level arrays are
    indexed ``[i_1, ..., i_n]`` by the cube index along each axis ``x_1..x_n``;
    coarser levels are sums of their children.
    """

    lower: np.ndarray
    k_min: int
    k0: int
    masses: dict

    @classmethod
    def build(cls, mu: DiscreteMeasure, k_min: int) -> "DyadicGrid":
        k0 = int(math.floor(math.log2(mu.diameter))) + 1
        if k_min > k0:
            raise ValueError("finest level above the top level")
        side = 2.0**k_min
        extent = mu.upper - mu.lower
        counts = [max(1, int(math.ceil(e / side - 1e-12))) for e in extent]
        idx = np.floor((mu.positions - mu.lower) / side).astype(np.int64)
        idx = np.minimum(idx, np.array(counts) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), counts) if len(idx) else np.zeros(0, np.int64)
        fine = np.bincount(flat, weights=mu.mass, minlength=int(np.prod(counts))).reshape(counts)
        masses = {k_min: fine}
        current = fine
        for k in range(k_min + 1, k0 + 1):
            pads = [(0, s % 2) for s in current.shape]
            padded = np.pad(current, pads)
            parent = padded
            for axis in range(padded.ndim):
                sl_even = [slice(None)] * padded.ndim
                sl_odd = [slice(None)] * padded.ndim
                sl_even[axis] = slice(0, None, 2)
                sl_odd[axis] = slice(1, None, 2)
                parent = parent[tuple(sl_even)] + parent[tuple(sl_odd)]
            masses[k] = parent
            current = parent
        return cls(mu.lower.copy(), k_min, k0, masses)

    @property
    def levels(self) -> range:
        return range(self.k_min, self.k0 + 1)

    def cube_index(self, points: np.ndarray, k: int) -> np.ndarray:
        shape = np.array(self.masses[k].shape)
        idx = np.floor((points - self.lower) / 2.0**k).astype(np.int64)
        return np.minimum(idx, shape - 1)

    def tripled(self, k: int) -> np.ndarray:
        """Mass of ``3D`` for every cube ``D`` of level ``k``."""
        m = self.masses[k]
        padded = np.pad(m, 1)
        out = np.zeros_like(m)
        for off in itertools.product((0, 1, 2), repeat=m.ndim):
            out += padded[tuple(slice(o, o + s) for o, s in zip(off, m.shape))]
        return out


def _dyadic_direct(mu, pts, alpha, sigma, k_min, k0):
    # per query point: atoms whose level-k cube index is within one of x's
    n = mu.dimension
    mass = mu.mass
    out = np.zeros(len(pts))
    if mass.size == 0:
        return out
    for k in range(k_min, k0 + 1):
        side = 2.0**k
        ia = np.floor((mu.positions - mu.lower) / side).astype(np.int64)
        iq = np.floor((pts - mu.lower) / side).astype(np.int64)
        for start in range(0, len(pts), _CHUNK):
            q = iq[start:start + _CHUNK]
            near = np.all(np.abs(q[:, None, :] - ia[None, :, :]) <= 1, axis=2)
            tri = near.astype(np.float64) @ mass
            vals = np.minimum(tri, 2.0 ** (sigma * k)) / 2.0 ** ((n - alpha) * k)
            np.maximum(out[start:start + _CHUNK], vals, out=out[start:start + _CHUNK])
    return out


def capped_maximal_dyadic(mu: DiscreteMeasure, alpha: float, sigma: float,
                          query_spacing: float = None, points=None, k_min: int = None):
    """Dyadic majorant ``max_k min(|mu|(3 D_k(x)), 2**(sigma k)) / 2**((n - alpha) k)``.

    Levels run from ``k_min`` up to ``k0``.  The default ``k_min`` is the
    largest cube side not above the query spacing, or the level of
    ``diam / 2**20`` for explicit ``points``.  Grid queries go through a
    :class:`DyadicGrid`; explicit points are evaluated atom by atom.
    Pointwise ``ball <= domination_constant(n, alpha) * dyadic``.
    """
    n = mu.dimension
    _check_params(n, alpha, sigma)
    if (query_spacing is None) == (points is None):
        raise ValueError("give exactly one of query_spacing and points")
    finest = query_spacing if query_spacing is not None else mu.diameter * 2.0**-20
    if k_min is None:
        k_min = int(math.floor(math.log2(finest) + 1e-12))
    if points is not None:
        pts = np.asarray(points, dtype=float).reshape(-1, n)
        k0 = int(math.floor(math.log2(mu.diameter))) + 1
        return _dyadic_direct(mu, pts, alpha, sigma, k_min, k0)
    pts, shape = _query_grid(mu, query_spacing)
    grid = DyadicGrid.build(mu, k_min)
    out = np.zeros(len(pts))
    for k in grid.levels:
        tri = grid.tripled(k)
        idx = grid.cube_index(pts, k)
        vals = np.minimum(tri[tuple(idx.T)], 2.0 ** (sigma * k)) / 2.0 ** ((n - alpha) * k)
        np.maximum(out, vals, out=out)
    return ScalarField(out.reshape(shape), query_spacing)


# --------------------------------------------------------------------------
# the plane measure and the integrability experiment


def plane_measure(n: int = 2, sigma: int = 1, resolution: int = 256, center: float = 0.5) -> DiscreteMeasure:
    """``H**sigma`` restricted to ``{x_{sigma+1} = ... = x_n = center}`` in ``[0, 1)**n``.

    Atoms sit at the centres of a ``resolution**sigma`` partition of the
    plane, each carrying the area ``resolution**-sigma`` of its cell.
    """
    if n not in (2, 3) or sigma not in range(1, n):
        raise ValueError("need n in {2, 3} and integer sigma in 1..n-1")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    axis = (np.arange(resolution) + 0.5) / resolution
    mesh = np.meshgrid(*([axis] * sigma), indexing="ij")
    free = np.stack([m.ravel() for m in mesh], axis=1)
    fixed = np.full((free.shape[0], n - sigma), float(center))
    weights = np.full(free.shape[0], float(resolution) ** -sigma)
    return DiscreteMeasure(np.hstack([free, fixed]), weights, np.zeros(n), np.ones(n))


def lp_threshold(n: int, sigma: float, alpha: float) -> float:
    """Critical exponent ``1 + alpha / (n - sigma - alpha)``."""
    _check_params(n, alpha, sigma)
    return 1.0 + alpha / (n - sigma - alpha)


@dataclass(frozen=True)
class LpExperiment:
    resolutions: tuple
    integrals: tuple
    slope: float
    local_slopes: tuple
    p: float
    threshold: float

    def rows(self):
        return [(r, self.p, i) for r, i in zip(self.resolutions, self.integrals)]


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def lp_experiment(alpha: float, sigma: int, p: float, resolutions=(64, 128, 256, 512),
                  n: int = 2, method: str = "dyadic") -> LpExperiment:
    """Pixel sums of ``M**p`` for the plane measure at growing resolution.

    At resolution ``R`` the plane is sampled with ``R**sigma`` atoms and the
    field is evaluated on the ``R**n`` pixel centres of the unit cube;
    pixels closer than one cell to the plane are left out.  The returned
    slope is the least-squares slope of ``log integral`` against
    ``log R``; ``local_slopes`` are the slopes between consecutive
    resolutions.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    resolutions = tuple(int(r) for r in resolutions)
    if len(resolutions) < 2 or any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("need at least two increasing resolutions")
    if method not in ("dyadic", "ball"):
        raise ValueError(f"unknown method {method!r}")
    fn = capped_maximal_dyadic if method == "dyadic" else capped_maximal_ball
    integrals = []
    for res in resolutions:
        mu = plane_measure(n, sigma, res)
        h = 1.0 / res
        field_ = fn(mu, alpha, sigma, query_spacing=h)
        pts, _ = _query_grid(mu, h)
        dist = np.sqrt(np.sum((pts[:, sigma:] - 0.5) ** 2, axis=1)).reshape(field_.shape)
        keep = dist >= h
        integrals.append(float(np.sum(field_.values[keep] ** p) * h**n))
    local = tuple(
        _loglog_slope(resolutions[i:i + 2], integrals[i:i + 2]) for i in range(len(resolutions) - 1)
    )
    return LpExperiment(resolutions, tuple(integrals), _loglog_slope(resolutions, integrals), local,
                        float(p), lp_threshold(n, sigma, alpha))


def distance_power_law(alpha: float, sigma: int = 1, n: int = 2, resolution: int = 512,
                       d_range=(2.0**-6, 2.0**-2), method: str = "ball"):
    """Fitted exponent of ``M(x) ~ dist(x, plane)**beta`` for the plane measure.

    Query points run along the normal through the middle of the plane at
    every pixel-centre distance inside ``d_range``.  Returns ``(beta,
    distances, values)``; the expected exponent is ``sigma - n + alpha``.
    """
    mu = plane_measure(n, sigma, resolution)
    h = 1.0 / resolution
    d = (np.arange(resolution // 2) + 0.5) * h
    d = d[(d >= d_range[0]) & (d <= d_range[1])]
    pts = np.full((d.size, n), 0.5 + 0.5 * h)
    pts[:, -1] = 0.5 + d
    fn = capped_maximal_dyadic if method == "dyadic" else capped_maximal_ball
    vals = fn(mu, alpha, sigma, points=pts)
    return _loglog_slope(d, vals), d, vals


# --------------------------------------------------------------------------
# decay of the derivative measure on balls


def _disk(radius_cells: float) -> np.ndarray:
    m = int(math.floor(radius_cells))
    off = np.arange(-m, m + 1)
    return ((off[:, None] ** 2 + off[None, :] ** 2) < radius_cells**2).astype(np.float64)


def ball_decay_check(u: ScalarField, radii=None, return_profile: bool = False):
    """``sup |Du(B(x, r))| / r**(n-1)`` over pixel centres ``x`` and radii ``r``.

    ``Du`` is the vector measure with an atom ``grad u * h**n`` at every pixel
    centre.  Radii default to ``1.5 h * sqrt(2)**j`` up to half the shorter
    side.  Balls are open and atoms outside the grid count as zero.  With
    ``return_profile`` the per-radius suprema are returned as well.
    """
    if u.ndim != 2:
        raise ValueError("ball_decay_check is implemented for 2-D fields")
    h = u.spacing
    if radii is None:
        top = 0.5 * min(u.shape) * h
        radii = 1.5 * h * np.sqrt(2.0) ** np.arange(64)
        radii = radii[radii <= top]
    radii = np.asarray(radii, dtype=float)
    atoms = forward_differences(u.values, h) * u.cell_volume
    profile = []
    for r in radii:
        disk = _disk(r / h)
        sx = fftconvolve(atoms[0], disk, mode="same")
        sy = fftconvolve(atoms[1], disk, mode="same")
        profile.append(float(np.max(np.sqrt(sx * sx + sy * sy))) / r ** (u.ndim - 1))
    # fft round-off leaves ~1e-16 residue where Du vanishes
    scale = float(np.sum(np.abs(atoms))) * 1e-12
    profile = [0.0 if v * r <= scale else v for v, r in zip(profile, radii)]
    best = max(profile) if profile else 0.0
    if return_profile:
        return best, radii, np.array(profile)
    return best


# --------------------------------------------------------------------------
# the sum maximisation step of the integrability estimate


def extreme_sum(cap: float, total: float, count: int, p: float) -> float:
    """``max sum a_i**p`` over ``0 <= a_i <= cap``, ``sum a_i <= total``, for ``p >= 1``.

    Filling as many entries as possible up to ``cap`` and putting the rest
    into one more entry attains the maximum.
    """
    if p < 1 or cap < 0 or total < 0 or count < 1:
        raise ValueError("need p >= 1 and non-negative cap and total")
    full = min(count, int(math.floor(total / cap))) if cap > 0 else 0
    rest = min(total - full * cap, cap) if full < count else 0.0
    return full * cap**p + rest**p


def brute_force_sum(cap: float, total: float, count: int, p: float, steps: int) -> float:
    """Grid search for the same maximum over ``a_i`` in multiples of ``cap / steps``."""
    levels = np.linspace(0.0, cap, steps + 1)
    best = 0.0
    for combo in itertools.product(levels, repeat=count):
        if sum(combo) <= total + 1e-12:
            best = max(best, float(np.sum(np.power(combo, p))))
    return best
