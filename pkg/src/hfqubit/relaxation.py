"""Closed-form relaxation laws and population rate equations.

Spin-lattice relaxation is a direct process ``a (2 pi nu)^n T`` plus an Orbach
term over a gap expressed in kelvin. Spin-spin relaxation is a constant floor
plus a flip-flop channel weighted by p_up * p_down of the bath spins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import expit

from . import constants as C

GENERATOR_TOL = 1e-9


@dataclass(frozen=True)
class T1Model:
    a_direct: float = 0.0  # s^-1 (rad/s)^-n K^-1
    n_exponent: float = 4.0
    a_orbach: float = 0.0  # s^-1
    delta_orbach: float = 0.0  # K
    orbach_form: str = "exponential"  # or "bose"

    def __post_init__(self):
        if min(self.a_direct, self.a_orbach, self.delta_orbach) < 0:
            raise ValueError("T1 model coefficients must be non-negative")
        if not 0 <= self.n_exponent <= 6:
            raise ValueError("direct-process exponent must lie in [0, 6]")
        if self.orbach_form not in ("exponential", "bose"):
            raise ValueError(f"unknown Orbach form {self.orbach_form!r}")

    @property
    def delta_wavenumber(self) -> float:
        return C.kelvin_to_wavenumber(self.delta_orbach)

    @classmethod
    def from_reference(
        cls,
        rate_at_ref: float,
        nu_ref: float,
        temp_ref: float,
        n_exponent: float = 4.0,
        a_orbach: float = 0.0,
        delta_orbach: float = 0.0,
        orbach_form: str = "exponential",
    ) -> "T1Model":
        """Direct-process coefficient fixed by its rate at one (nu, T) point."""
        a_direct = rate_at_ref / ((2 * math.pi * nu_ref) ** n_exponent * temp_ref)
        return cls(a_direct, n_exponent, a_orbach, delta_orbach, orbach_form)


def orbach_factor(delta_k: float, temperature, form: str = "exponential"):
    temperature = np.asarray(temperature, float)
    if form == "exponential":
        return np.exp(-delta_k / temperature)
    return 1.0 / np.expm1(delta_k / temperature)


def t1_rate(model: T1Model, nu, temperature):
    """Spin-lattice relaxation rate 1/T1 in s^-1 (broadcasts over nu and T)."""
    nu = np.asarray(nu, float)
    temperature = np.asarray(temperature, float)
    if np.any(nu <= 0) or np.any(temperature <= 0):
        raise ValueError("frequency and temperature must be positive")
    direct = model.a_direct * (2 * np.pi * nu) ** model.n_exponent * temperature
    orbach = model.a_orbach * orbach_factor(model.delta_orbach, temperature, model.orbach_form)
    out = direct + orbach
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class T2Model:
    r_floor: float = 0.0  # s^-1
    c_flipflop: float = 0.0  # s^-1, infinite-temperature strength before the 1/4

    def __post_init__(self):
        if self.r_floor < 0 or self.c_flipflop < 0:
            raise ValueError("T2 model parameters must be non-negative")
        if self.r_floor == 0 and self.c_flipflop == 0:
            raise ValueError("T2 model needs a non-zero floor or flip-flop strength")

    @classmethod
    def calibrated(cls, t2_floor: float, t2_at: float, nu: float, temperature: float) -> "T2Model":
        """Floor from ``t2_floor``; flip-flop strength so that T2(nu, T) = ``t2_at``."""
        r_floor = 1.0 / t2_floor
        c = (1.0 / t2_at - r_floor) / flip_flop_factor(nu, temperature)
        if c < 0:
            raise ValueError("calibration point is slower than the floor")
        return cls(r_floor, c)


def flip_flop_factor(nu, temperature):
    """(2 cosh(h nu / 2kT))^-2, the product p_up * p_down of a thermal spin-1/2."""
    nu = np.asarray(nu, float)
    temperature = np.asarray(temperature, float)
    if np.any(nu <= 0) or np.any(temperature <= 0):
        raise ValueError("frequency and temperature must be positive")
    x = C.PLANCK_H * nu / (2.0 * C.BOLTZMANN_K * temperature)
    # 1/(2cosh x)^2 written to stay finite for large x
    e = np.exp(-2.0 * np.abs(x))
    out = e / (1.0 + e) ** 2
    return float(out) if out.ndim == 0 else out


def t2_time(model: T2Model, nu, temperature):
    rate = model.r_floor + model.c_flipflop * flip_flop_factor(nu, temperature)
    out = 1.0 / np.asarray(rate, float)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# rate equations


def check_generator(rate_matrix: np.ndarray, tol: float = GENERATOR_TOL) -> np.ndarray:
    r = np.asarray(rate_matrix, float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("rate matrix must be square")
    scale = max(np.abs(r).max(), 1.0)
    off = r - np.diag(np.diag(r))
    if off.min() < -tol * scale:
        raise ValueError("rate matrix has negative off-diagonal rates")
    if np.abs(r.sum(axis=0)).max() > tol * scale:
        raise ValueError("rate matrix columns must sum to zero")
    return r


def detailed_balance_pair(rate: float, e_upper: float, e_lower: float, temperature: float) -> tuple[float, float]:
    """(down, up) rates whose ratio is the Boltzmann factor across the gap.

    Energies in kelvin. The pair sums to 2*rate, so ``rate`` is the
    infinite-temperature flip rate.
    """
    x = (e_upper - e_lower) / temperature
    return 2.0 * rate * expit(x), 2.0 * rate * expit(-x)


def rate_equation_step(populations, rate_matrix, t: float) -> np.ndarray:
    """p(t) = exp(R t) p(0)."""
    p = np.asarray(populations, float)
    if abs(p.sum() - 1.0) > 1e-9 or p.min() < -1e-12:
        raise ValueError("populations must form a probability vector")
    if t < 0:
        raise ValueError("time must be non-negative")
    r = check_generator(rate_matrix)
    if t == 0:
        return p.copy()
    return expm(r * t) @ p


def rate_trajectory(populations, rate_matrix, times) -> np.ndarray:
    """Populations at each requested time, shape (len(times), n)."""
    p0 = np.asarray(populations, float)
    r = check_generator(rate_matrix)
    times = np.asarray(times, float)
    out = np.empty((times.size, p0.size))
    for i, t in enumerate(times):
        out[i] = expm(r * t) @ p0 if t > 0 else p0
    return out


def steady_state(rate_matrix) -> np.ndarray:
    """Stationary populations of an irreducible generator.

    Uses Grassmann-Taksar-Heyman state reduction, which never subtracts and
    so keeps full relative accuracy when rates span many decades.
    """
    r = check_generator(rate_matrix)
    n = r.shape[0]
    a = r.T.copy()  # a[i, j] = rate i -> j
    np.fill_diagonal(a, 0.0)
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        if s <= 0:
            raise ValueError("generator is reducible; steady state is not unique")
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    p = np.zeros(n)
    p[0] = 1.0
    for j in range(1, n):
        p[j] = p[:j] @ a[:j, j]
    return p / p.sum()
