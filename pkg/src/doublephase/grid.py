"""Discrete calculus on rectangular pixel grids.

Arrays are stored row-major with shape ``(height, width)``; axis 1 is the
``x`` direction (component 0 of a vector field) and axis 0 is ``y``
(component 1).  All integrals are midpoint sums weighted by ``spacing**ndim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "ScalarField",
    "VectorField",
    "Mollifier",
    "GridMismatchError",
    "gradient_forward",
    "divergence",
    "inner",
    "reflect_extend",
    "restrict_center",
    "mollify",
]


class GridMismatchError(ValueError):
    """Raised when two fields do not live on the same grid."""


def _spatial_axes(ndim: int) -> list[int]:
    # component k differentiates along the k-th spatial coordinate, x first
    return list(range(ndim - 1, -1, -1))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples on a rectangular grid with uniform spacing ``h``."""

    values: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim < 2:
            raise ValueError("a field needs at least two dimensions")
        if min(values.shape) < 2:
            raise ValueError(f"every grid size must be >= 2, got {values.shape}")
        if not self.spacing > 0 or not math.isfinite(self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def width(self) -> int:
        return self.values.shape[-1]

    @property
    def height(self) -> int:
        return self.values.shape[-2]

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.ndim

    @property
    def volume(self) -> float:
        """Measure of the rectangle covered by the grid."""
        return self.values.size * self.cell_volume

    def with_values(self, values) -> "ScalarField":
        return ScalarField(values, self.spacing)

    def integrate(self, values=None) -> float:
        v = self.values if values is None else values
        return float(np.sum(v) * self.cell_volume)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def same_grid(self, other) -> bool:
        return self.shape == other.shape and self.spacing == other.spacing

    def check_same_grid(self, *others) -> None:
        for other in others:
            if not self.same_grid(other):
                raise GridMismatchError(
                    f"grid mismatch: {self.shape}/h={self.spacing} vs "
                    f"{other.shape}/h={other.spacing}"
                )

    @classmethod
    def constant(cls, shape, value: float, spacing: float = 1.0) -> "ScalarField":
        return cls(np.full(shape, float(value)), spacing)

    def cell_centers(self) -> list[np.ndarray]:
        """Coordinates of pixel centers, ``x`` first, as broadcastable arrays."""
        h = self.spacing
        grids = np.meshgrid(*[(np.arange(s) + 0.5) * h for s in self.shape], indexing="ij")
        return grids[::-1]


@dataclass(frozen=True, eq=False)
class VectorField:
    """Per-pixel n-vectors, stored as an array of shape ``(n, *grid)``."""

    components: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        comps = np.array(self.components, dtype=np.float64)
        if comps.ndim < 3 or comps.shape[0] != comps.ndim - 1:
            raise ValueError(f"expected shape (n, *grid) with n = grid ndim, got {comps.shape}")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(comps)):
            raise ValueError("vector field contains NaN or Inf")
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.components.shape[1:]

    @property
    def ndim(self) -> int:
        return self.components.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=0))

    def same_grid(self, other) -> bool:
        shape = other.grid_shape if isinstance(other, VectorField) else other.shape
        return self.grid_shape == shape and self.spacing == other.spacing


@dataclass(frozen=True)
class Mollifier:
    """The standard bump ``exp(-1/(1-|x/delta|^2))`` sampled on a grid.

    ``kernel`` is normalised so that ``spacing**n * kernel.sum() == 1``.
    """

    delta: float
    spacing: float
    ndim: int = 2
    kernel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"mollifier radius must be positive, got {self.delta}")
        radius = int(math.floor(self.delta / self.spacing))
        offsets = np.arange(-radius, radius + 1) * self.spacing
        mesh = np.meshgrid(*([offsets] * self.ndim), indexing="ij")
        r2 = sum(m**2 for m in mesh) / self.delta**2
        inside = r2 < 1.0
        kernel = np.zeros_like(r2)
        kernel[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        kernel /= kernel.sum() * self.spacing**self.ndim
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)

    @property
    def radius_pixels(self) -> int:
        return self.kernel.shape[0] // 2


def _as_array(x):
    return x.values if isinstance(x, ScalarField) else np.asarray(x, dtype=np.float64)


def forward_differences(values: np.ndarray, spacing: float) -> np.ndarray:
    """Array-level forward differences with the Neumann convention."""
    out = np.zeros((values.ndim,) + values.shape)
    for k, axis in enumerate(_spatial_axes(values.ndim)):
        d = np.diff(values, axis=axis) / spacing
        sl = [slice(None)] * values.ndim
        sl[axis] = slice(0, values.shape[axis] - 1)
        out[k][tuple(sl)] = d
    return out


def backward_divergence(p: np.ndarray, spacing: float) -> np.ndarray:
    """Array-level negative adjoint of :func:`forward_differences`."""
    ndim = p.shape[0]
    out = np.zeros(p.shape[1:])
    for k, axis in enumerate(_spatial_axes(ndim)):
        n = p.shape[1 + axis]
        comp = np.moveaxis(p[k], axis, 0)
        res = np.moveaxis(out, axis, 0)
        res[0] += comp[0]
        res[1:n - 1] += comp[1:n - 1] - comp[0:n - 2]
        res[n - 1] -= comp[n - 2]
    return out / spacing


def gradient_forward(u: ScalarField) -> VectorField:
    """Forward differences divided by the spacing.

    The difference across the last row/column is zero (homogeneous Neumann
    boundary).
    """
    return VectorField(forward_differences(u.values, u.spacing), u.spacing)


def divergence(p: VectorField, like: ScalarField | None = None) -> ScalarField:
    """Discrete divergence, the exact negative adjoint of :func:`gradient_forward`.

    ``<gradient_forward(u), p> = -<u, divergence(p)>`` holds for every ``u`` on
    the same grid, in the ``h**n``-weighted inner product.  Only the first
    ``size - 1`` entries of each component along its axis enter the result.
    """
    if like is not None and not p.same_grid(like):
        raise GridMismatchError(
            f"vector field on {p.grid_shape}/h={p.spacing} vs scalar field on "
            f"{like.shape}/h={like.spacing}"
        )
    return ScalarField(backward_divergence(p.components, p.spacing), p.spacing)


def inner(x, y) -> float:
    """``h**n``-weighted Euclidean inner product of two scalar or vector fields."""
    if x.spacing != y.spacing:
        raise GridMismatchError("inner product of fields with different spacing")
    xv = x.values if isinstance(x, ScalarField) else x.components
    yv = y.values if isinstance(y, ScalarField) else y.components
    if xv.shape != yv.shape:
        raise GridMismatchError(f"shape mismatch {xv.shape} vs {yv.shape}")
    ndim = xv.ndim if isinstance(x, ScalarField) else xv.ndim - 1
    return float(np.sum(xv * yv) * x.spacing**ndim)


def reflect_extend(u: ScalarField) -> ScalarField:
    """Mirror ``u`` across every face onto the box with three times the sides.

    The central block equals ``u``; neighbouring blocks are mirror images
    across the shared face and corner blocks are double reflections.
    """
    pads = [(s, s) for s in u.shape]
    return ScalarField(np.pad(u.values, pads, mode="symmetric"), u.spacing)


def restrict_center(u: ScalarField) -> ScalarField:
    """Inverse of :func:`reflect_extend`: cut out the central block."""
    if any(s % 3 for s in u.shape):
        raise ValueError(f"grid sizes must be multiples of 3, got {u.shape}")
    sl = tuple(slice(s // 3, 2 * s // 3) for s in u.shape)
    return ScalarField(u.values[sl], u.spacing)


def mollify(u: ScalarField, delta: float) -> ScalarField:
    """Convolve the reflected extension of ``u`` with the standard mollifier.

    For ``delta`` at or below the grid spacing the kernel degenerates to a
    single sample and ``u`` is returned unchanged.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if delta <= u.spacing:
        return u
    moll = Mollifier(delta, u.spacing, u.ndim)
    r = moll.radius_pixels
    # symmetric padding is the reflect_extend pattern, repeated when r exceeds the grid
    padded = np.pad(u.values, r, mode="symmetric")
    out = fftconvolve(padded, moll.kernel * u.cell_volume, mode="valid")
    return ScalarField(out, u.spacing)
