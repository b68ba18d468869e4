"""Physical constants (CODATA 2018) and nuclear isotope data.

Every module reads its constants from here; no literals are duplicated.
"""

from __future__ import annotations

import math
from types import MappingProxyType
from typing import NamedTuple

PLANCK_H = 6.62607015e-34  # J s
HBAR = PLANCK_H / (2.0 * math.pi)
BOLTZMANN_K = 1.380649e-23  # J/K
BOHR_MAGNETON = 9.2740100783e-24  # J/T
NUCLEAR_MAGNETON = 5.0507837461e-27  # J/T
FREE_ELECTRON_G = 2.00231930436256
SPEED_OF_LIGHT = 299792458.0  # m/s

GAUSS = 1e-4  # tesla


class Isotope(NamedTuple):
    spin: float
    gamma_hz_per_t: float  # gamma / 2pi, signed


ISOTOPES = MappingProxyType(
    {
        "1H": Isotope(0.5, 42.577478518e6),
        "13C": Isotope(0.5, 10.7084e6),
        "14N": Isotope(1.0, 3.077706e6),
        "29Si": Isotope(0.5, -8.465499e6),
        "31P": Isotope(0.5, 17.235e6),
    }
)


def isotope(name: str) -> Isotope:
    try:
        return ISOTOPES[name]
    except KeyError:
        raise ValueError(f"unknown isotope {name!r}; known: {sorted(ISOTOPES)}") from None


def hz_to_kelvin(nu: float) -> float:
    """Energy h*nu expressed as a temperature."""
    return PLANCK_H * nu / BOLTZMANN_K


def kelvin_to_hz(temp: float) -> float:
    return BOLTZMANN_K * temp / PLANCK_H


def kelvin_to_wavenumber(temp: float) -> float:
    """Energy k*T in cm^-1."""
    return BOLTZMANN_K * temp / (PLANCK_H * SPEED_OF_LIGHT * 100.0)


def wavenumber_to_kelvin(cm: float) -> float:
    return cm * PLANCK_H * SPEED_OF_LIGHT * 100.0 / BOLTZMANN_K


def electron_larmor_hz(g: float, b0: float) -> float:
    return g * BOHR_MAGNETON * b0 / PLANCK_H


def resonant_field(g: float, nu: float) -> float:
    """Field (T) at which an electron with the given g resonates at nu."""
    return PLANCK_H * nu / (g * BOHR_MAGNETON)
