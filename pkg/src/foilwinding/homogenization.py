"""Effective material tensors of the smeared foil winding."""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import epsilon_0 as EPS0, mu_0 as MU0

from .errors import DomainError, GeometryError

NU0 = 1.0 / MU0


@dataclass(frozen=True)
class FoilMaterials:
    """Constituents of one foil: conductor (``_c``) and insulation (``_i``).

    ``eps_c`` is kept for completeness only; the homogenized model never
    uses it.
    """

    nu_c: float
    nu_i: float
    sigma_c: float
    eps_c: float
    eps_i: float
    fill_factor: float
    sigma_i: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.fill_factor < 1.0:
            raise DomainError("fill factor must lie in (0, 1)")
        if not self.sigma_c > 0:
            raise DomainError("conductor conductivity must be positive")
        if self.sigma_i < 0:
            raise DomainError("insulation conductivity must be non-negative")
        if not (self.nu_c > 0 and self.nu_i > 0):
            raise DomainError("reluctivities must be positive")
        if not self.eps_i > 0:
            raise DomainError("insulation permittivity must be positive")


@dataclass(frozen=True)
class HomogenizedTensors:
    """Diagonal entries of the material tensors in the local (alpha, beta, gamma) frame.

    ``*_perp`` acts along alpha (across the turns), ``*_par`` along beta and gamma.
    """

    nu_perp: float
    nu_par: float
    sigma_perp: float
    sigma_par: float
    eps_hom: float


def fill_factor(d_c: float, d_f: float) -> float:
    """Conductor share ``d_c / d_f`` of the foil thickness."""
    if not 0.0 < d_c < d_f:
        raise GeometryError(f"need 0 < d_c < d_f, got d_c={d_c}, d_f={d_f}")
    return d_c / d_f


def mix(m: FoilMaterials) -> HomogenizedTensors:
    lam = m.fill_factor
    nu_perp = lam * m.nu_c + (1.0 - lam) * m.nu_i
    nu_par = 1.0 / (lam / m.nu_c + (1.0 - lam) / m.nu_i)
    sigma_par = lam * m.sigma_c + (1.0 - lam) * m.sigma_i
    # insulation in series blocks all current across the turns
    if m.sigma_i == 0.0:
        sigma_perp = 0.0
    else:
        sigma_perp = 1.0 / (lam / m.sigma_c + (1.0 - lam) / m.sigma_i)
    eps_hom = m.eps_i / (1.0 - lam)
    return HomogenizedTensors(nu_perp, nu_par, sigma_perp, sigma_par, eps_hom)


def skin_depth(f: float, mu_c: float, sigma_c: float) -> float:
    """Skin depth ``sqrt(2 / (omega mu sigma))`` in meters."""
    if not (f > 0 and mu_c > 0 and sigma_c > 0):
        raise DomainError("skin depth needs f, mu and sigma all positive")
    return math.sqrt(2.0 / (2.0 * math.pi * f * mu_c * sigma_c))
