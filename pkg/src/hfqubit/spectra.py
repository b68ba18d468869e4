"""Field-swept EPR and ENDOR spectra in the first-order (high-field) limit."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import _accel
from . import constants as C
from .results import ResultTable


@dataclass(frozen=True)
class CenterDescriptor:
    label: str
    g: float
    hyperfine_lines: tuple[tuple[float, float], ...] = ()  # (a in Hz, nuclear spin I)
    relative_weight: float = 1.0
    linewidth: float = 1e-4  # Gaussian FWHM, tesla
    lorentz_fraction: float = 0.0
    tentative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hyperfine_lines", tuple(tuple(h) for h in self.hyperfine_lines))
        if not self.g > 0:
            raise ValueError("g must be positive")
        if self.relative_weight < 0:
            raise ValueError("relative weight must be non-negative")
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")
        if not 0 <= self.lorentz_fraction <= 1:
            raise ValueError("Lorentzian fraction must lie in [0, 1]")


@dataclass
class Spectrum:
    axis: np.ndarray
    intensity: np.ndarray
    axis_kind: str = "field"  # "field" (T) or "frequency" (Hz)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis = np.asarray(self.axis, float)
        self.intensity = np.asarray(self.intensity, float)
        if np.any(np.diff(self.axis) <= 0):
            raise ValueError("spectrum axis must be strictly increasing")
        if not np.all(np.isfinite(self.intensity)):
            raise ValueError("spectrum intensities must be finite")

    def integral(self) -> float:
        return float(trapezoid(self.intensity, self.axis))

    def to_table(self) -> ResultTable:
        name = "field_t" if self.axis_kind == "field" else "freq_hz"
        return ResultTable({name: self.axis, "intensity": self.intensity})


def resonance_field(g: float, nu: float, m_i: float = 0.0, a: float = 0.0) -> float:
    """First-order resonance field B = h (nu - m_I a) / (g muB)."""
    if not g > 0:
        raise ValueError("g must be positive")
    return C.PLANCK_H * (nu - m_i * a) / (g * C.BOHR_MAGNETON)


def center_lines(center: CenterDescriptor, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """Line positions (T) and weights of one center; weights sum to relative_weight."""
    ladders = []
    for a, spin in center.hyperfine_lines:
        m = [spin - k for k in range(int(round(2 * spin)) + 1)]
        ladders.append([(mi, a) for mi in m])
    fields, weights = [], []
    n_lines = int(np.prod([len(lad) for lad in ladders])) if ladders else 1
    for combo in itertools.product(*ladders):
        shift = sum(mi * a for mi, a in combo)
        fields.append(resonance_field(center.g, nu, 1.0, shift))
        weights.append(center.relative_weight / n_lines)
    return np.array(fields), np.array(weights)


def centroid_field(center: CenterDescriptor, nu: float) -> float:
    fields, weights = center_lines(center, nu)
    total = weights.sum()
    return float(fields @ weights / total) if total > 0 else resonance_field(center.g, nu)


def effective_g(field_t, nu: float):
    """g value that would resonate at this field, i.e. an axis proportional to 1/B."""
    return C.PLANCK_H * nu / (C.BOHR_MAGNETON * np.asarray(field_t, float))


def synthesize_epr_spectrum(
    centers: Sequence[CenterDescriptor], nu: float, field_grid, derivative: bool = False
) -> Spectrum:
    """Sum of area-normalised pseudo-Voigt lines (or their field derivative)."""
    if not centers:
        raise ValueError("need at least one center")
    grid = np.asarray(field_grid, float)
    pos, amp, fwhm, eta = [], [], [], []
    for c in centers:
        f, w = center_lines(c, nu)
        pos.append(f)
        amp.append(w)
        fwhm.append(np.full(f.size, c.linewidth))
        eta.append(np.full(f.size, c.lorentz_fraction))
    pos, amp, fwhm, eta = (np.concatenate(v) for v in (pos, amp, fwhm, eta))
    intensity = _accel.pseudo_voigt_sum(grid, pos, fwhm, amp, eta, derivative)
    meta = {"nu_hz": nu, "centers": [c.label for c in centers], "derivative": derivative, "warnings": []}
    margin = 3.0 * fwhm
    if np.any(pos - margin < grid[0]) or np.any(pos + margin > grid[-1]):
        meta["warnings"].append("field grid does not cover every line")
    return Spectrum(grid, intensity, "field", meta)


class Resolvability(NamedTuple):
    resolved: bool
    separation_over_width: float


RESOLUTION_FACTOR = 2.0


def resolvability(
    center1: CenterDescriptor, center2: CenterDescriptor, nu: float, linewidth: float | None = None
) -> Resolvability:
    """Centroid separation over mean FWHM; resolved when it reaches 2."""
    width = linewidth if linewidth is not None else 0.5 * (center1.linewidth + center2.linewidth)
    if not width > 0:
        raise ValueError("linewidth must be positive")
    sep = abs(centroid_field(center1, nu) - centroid_field(center2, nu))
    ratio = sep / width
    return Resolvability(ratio >= RESOLUTION_FACTOR, ratio)


def endor_frequencies(gamma_n: float, b0: float, a: float) -> tuple[float, float]:
    """First-order ENDOR pair |nu_n -/+ a/2| for S=1/2, sorted ascending."""
    if not b0 > 0:
        raise ValueError("B0 must be positive")
    nu_n = gamma_n * b0
    pair = sorted((abs(nu_n - a / 2.0), abs(nu_n + a / 2.0)))
    return pair[0], pair[1]


@dataclass(frozen=True)
class EndorNucleus:
    label: str
    gamma: float  # Hz/T
    a: float = 0.0  # Hz
    weight: float = 1.0


def synthesize_endor_spectrum(
    nuclei: Sequence[EndorNucleus], b0: float, freq_grid, linewidth_hz: float
) -> Spectrum:
    """Stick ENDOR pairs broadened by area-normalised Gaussians."""
    grid = np.asarray(freq_grid, float)
    pos, amp = [], []
    for nuc in nuclei:
        for f in endor_frequencies(nuc.gamma, b0, nuc.a):
            pos.append(f)
            amp.append(0.5 * nuc.weight)
    pos = np.array(pos)
    n = pos.size
    intensity = _accel.pseudo_voigt_sum(grid, pos, np.full(n, linewidth_hz), np.array(amp), np.zeros(n), False)
    return Spectrum(grid, intensity, "frequency", {"b0_t": b0, "nuclei": [x.label for x in nuclei]})


def larmor_separation(isotope_a: str, isotope_b: str, b0: float) -> float:
    """|nu_L(a)| - |nu_L(b)| difference in Hz at field b0 (absolute value)."""
    ga = abs(C.isotope(isotope_a).gamma_hz_per_t)
    gb = abs(C.isotope(isotope_b).gamma_hz_per_t)
    return abs(ga - gb) * b0


def pair_center_g(*gs: float) -> float:
    """g of an exchange-coupled cluster: the mean of its constituents' g values."""
    return float(np.mean(gs))
