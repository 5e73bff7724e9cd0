"""The BV double phase energy, its regularised family and related constants."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import ScalarField, forward_differences

__all__ = [
    "EnergyReport",
    "RegularizationMode",
    "tv",
    "energy_I",
    "energy_I_eps",
    "energy_J",
    "young_constant",
]


class RegularizationMode(str, enum.Enum):
    """Which way ``eps`` enters the regularised energy.

    ``exponent``: ``|grad u|**(1+eps)`` replaces ``|grad u|``.
    ``weight``: ``(eps + a**2) |grad u|**2`` replaces ``(a |grad u|)**2``.
    ``combined``: both at once.
    """

    EXPONENT = "exponent"
    WEIGHT = "weight"
    COMBINED = "combined"

    @classmethod
    def parse(cls, value) -> "RegularizationMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class EnergyReport:
    tv_part: float
    weighted_part: float
    fidelity_part: float
    regularizer_surplus: float
    total: float
    epsilon: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def fieldnames(cls) -> list[str]:
        return list(cls.__dataclass_fields__)


def _check(u: ScalarField, f: ScalarField, a: ScalarField) -> None:
    u.check_same_grid(f, a)
    if np.any(a.values < 0):
        raise ValueError("weight must be non-negative")


def grad_magnitude(u: ScalarField) -> np.ndarray:
    g = forward_differences(u.values, u.spacing)
    return np.sqrt(np.sum(g * g, axis=0))


def tv(u: ScalarField) -> float:
    """Isotropic discrete total variation ``h**n * sum |grad u|``."""
    return u.integrate(grad_magnitude(u))


def _parts(u, f, a):
    t = grad_magnitude(u)
    return (
        t,
        u.integrate(t),
        u.integrate((a.values * t) ** 2),
        u.integrate((u.values - f.values) ** 2),
    )


def energy_I(u: ScalarField, f: ScalarField, a: ScalarField) -> EnergyReport:
    """``|Du| + int (a |grad u|)^2 + |u - f|^2`` on the whole grid."""
    _check(u, f, a)
    _, tv_part, weighted, fidelity = _parts(u, f, a)
    return EnergyReport(tv_part, weighted, fidelity, 0.0, tv_part + weighted + fidelity, 0.0)


def energy_J(u: ScalarField, f: ScalarField, a: ScalarField) -> EnergyReport:
    """The Sobolev double phase functional.

    Every grid function is Sobolev, so this coincides with :func:`energy_I`;
    it exists so that relaxation experiments name the functional they probe.
    """
    return energy_I(u, f, a)


def energy_I_eps(
    u: ScalarField,
    f: ScalarField,
    a: ScalarField,
    eps: float,
    mode=RegularizationMode.COMBINED,
    tv_term: bool = True,
) -> EnergyReport:
    """Regularised energy at ``eps > 0``.

    With ``tv_term=False`` the first-order gradient term is dropped entirely,
    which leaves a quadratic energy in the ``weight`` mode.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive (use energy_I for eps = 0), got {eps}")
    mode = RegularizationMode.parse(mode)
    _check(u, f, a)
    t, tv_part, weighted, fidelity = _parts(u, f, a)
    if not tv_term:
        tv_part = 0.0
    if mode is RegularizationMode.WEIGHT:
        first = tv_part
    else:
        first = u.integrate(t ** (1.0 + eps)) if tv_term else 0.0
    if mode is RegularizationMode.EXPONENT:
        second = weighted
    else:
        second = u.integrate((eps + a.values**2) * t**2)
    total = first + second + fidelity
    surplus = total - (tv_part + weighted + fidelity)
    # the exponent term may undercut |grad u| where |grad u| < 1
    return EnergyReport(tv_part, weighted, fidelity, surplus, total, float(eps))


def young_constant(eps: float) -> float:
    """``c(eps) = (1/(1+eps))**(1/eps) * eps/(1-eps)``.

    Satisfies ``t <= t**(1+eps) + c(eps)`` for all ``t >= 0`` and tends to 0
    as ``eps -> 0``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return math.exp(-math.log1p(eps) / eps) * eps / (1.0 - eps)
