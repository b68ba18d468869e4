"""Four-level Overhauser and ENDOR-assisted nuclear polarisation.

Levels are the exact eigenstates of ``nu_e Sz - nu_n Iz + a S.I`` for an
S=1/2, I=1/2 pair, labelled by their dominant product state (m_S, m_I).
Relaxation channels connect level pairs with Boltzmann detailed balance:

* allowed EPR (m_S flips, m_I kept), rate ``w_e``
* zero-quantum flip-flop (+,-) <-> (-,+), rate ``eta**2 * w_e``
* nuclear (m_I flips, m_S kept), rate ``w_n``

The double-quantum pair (+,+) <-> (-,-) has no channel at all. Drives add a
symmetric saturation rate to one allowed pair.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import _accel
from . import constants as C
from .fitting import FitResult, fit_arrhenius, log_linear_decay
from .relaxation import check_generator, detailed_balance_pair, steady_state
from .spin import spin_operators

# product-basis order used for labels
PRODUCT_LABELS = ((0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5))
FLIP_FLOP_PAIR = ((0.5, -0.5), (-0.5, 0.5))
FLIP_FLIP_PAIR = ((0.5, 0.5), (-0.5, -0.5))
DECAY_RESIDUAL_LIMIT = 0.05


@dataclass(frozen=True)
class FourLevelSystem:
    nu_e: float  # Hz
    nu_n: float  # Hz, gamma_n * B0 (signed)
    a: float  # Hz
    temperature: float  # K
    w_e: float  # s^-1 at w_e_ref_temp
    w_n: float = 0.0
    eta_override: float | None = None
    w_e_temp_power: float = 0.0
    w_e_ref_temp: float = 3.0

    def __post_init__(self):
        if not self.nu_e > 0:
            raise ValueError("electron Zeeman frequency must be positive")
        if self.a < 0:
            raise ValueError("hyperfine constant must be non-negative")
        if not self.w_e > 0:
            raise ValueError("electron relaxation rate w_e must be positive")
        if self.w_n < 0:
            raise ValueError("nuclear relaxation rate w_n must be non-negative")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @property
    def eta(self) -> float:
        """Flip-flop admixture; first-order mixing a / (2 nu_e) unless overridden."""
        if self.eta_override is not None:
            return self.eta_override
        return self.a / (2.0 * self.nu_e)

    @property
    def electron_rate(self) -> float:
        return self.w_e * (self.temperature / self.w_e_ref_temp) ** self.w_e_temp_power

    @property
    def flip_flop_rate(self) -> float:
        return self.eta**2 * self.electron_rate

    def at_temperature(self, temperature: float) -> "FourLevelSystem":
        return replace(self, temperature=temperature)

    def hamiltonian(self) -> np.ndarray:
        """Lab Hamiltonian in rad/s on the (m_S, m_I) product basis."""
        s = spin_operators(0.5)
        one = np.eye(2)
        h = self.nu_e * np.kron(s.z, one) - self.nu_n * np.kron(one, s.z)
        for comp in ("x", "y", "z"):
            op = getattr(s, comp)
            h = h + self.a * np.kron(op, op)
        h = 2.0 * np.pi * h
        return 0.5 * (h + h.conj().T)

    def levels(self) -> tuple[np.ndarray, list[tuple[float, float]], np.ndarray]:
        """Energies (K), dominant (m_S, m_I) labels and eigenvectors."""
        evals, vecs = np.linalg.eigh(self.hamiltonian())
        weights = np.abs(vecs) ** 2
        dominant = np.argmax(weights, axis=0)
        if len(set(dominant.tolist())) != 4:
            raise ValueError("eigenstates cannot be labelled by product states (a is not small enough)")
        labels = [PRODUCT_LABELS[i] for i in dominant]
        energies_k = C.HBAR * evals / C.BOLTZMANN_K
        return energies_k, labels, vecs

    def electron_lower_sign(self) -> float:
        return 1.0  # nu_e > 0: m_S = -1/2 is the lower electron level

    def nuclear_lower_sign(self) -> float:
        # H contains -nu_n Iz, so m_I = +1/2 is lower for nu_n > 0
        return 1.0 if self.nu_n >= 0 else -1.0


def si_p_system(
    nu_e: float = 240e9,
    temperature: float = 3.0,
    g: float = 1.9985,
    a: float = 117.53e6,
    w_e: float = 1.0e3,
    w_n: float = 0.0,
    **kwargs,
) -> FourLevelSystem:
    """Phosphorus donor in silicon at the field resonant with ``nu_e``.

    g and a are literature values for Si:P, not quantities taken from any
    polarisation measurement.
    """
    b0 = C.resonant_field(g, nu_e)
    nu_n = C.isotope("31P").gamma_hz_per_t * b0
    return FourLevelSystem(nu_e, nu_n, a, temperature, w_e, w_n, **kwargs)


@dataclass(frozen=True)
class DriveSpec:
    transition: str  # "epr" (selected by m_I) or "endor" (selected by m_S)
    m: float
    saturation_rate: float

    def __post_init__(self):
        if self.transition not in ("epr", "endor"):
            raise ValueError(f"drive transition must be 'epr' or 'endor', got {self.transition!r}")
        if self.m not in (0.5, -0.5):
            raise ValueError(f"drive must select m = +1/2 or -1/2, got {self.m!r}")
        if self.saturation_rate < 0:
            raise ValueError("saturation rate must be non-negative")

    def pair(self) -> tuple[tuple[float, float], tuple[float, float]]:
        if self.transition == "epr":
            return (0.5, self.m), (-0.5, self.m)
        return (self.m, 0.5), (self.m, -0.5)


def epr_line(sys: FourLevelSystem, which: str, saturation_rate: float) -> DriveSpec:
    """Drive on the ``"high"``- or ``"low"``-field hyperfine line.

    At fixed microwave frequency the high-field line is the EPR transition with
    the smaller energy gap.
    """
    e, labels, _ = sys.levels()
    lvl = dict(zip(labels, e))
    gap = {m: lvl[(0.5, m)] - lvl[(-0.5, m)] for m in (0.5, -0.5)}
    m_high = min(gap, key=gap.get)
    if which == "high":
        return DriveSpec("epr", m_high, saturation_rate)
    if which == "low":
        return DriveSpec("epr", -m_high, saturation_rate)
    raise ValueError(f"hyperfine line must be 'high' or 'low', got {which!r}")


def _channels(sys: FourLevelSystem):
    """(pair, infinite-temperature rate) for every relaxation channel."""
    out = []
    for m_i in (0.5, -0.5):
        out.append((((0.5, m_i), (-0.5, m_i)), sys.electron_rate))
    out.append((FLIP_FLOP_PAIR, sys.flip_flop_rate))
    if sys.w_n > 0:
        for m_s in (0.5, -0.5):
            out.append((((m_s, 0.5), (m_s, -0.5)), sys.w_n))
    return out


def build_dnp_rate_matrix(sys: FourLevelSystem, drives: Sequence[DriveSpec] = ()) -> np.ndarray:
    """4x4 generator in the eigenbasis ordering returned by ``sys.levels()``.

    ``R[i, j]`` is the rate from level j to level i; columns sum to zero.
    """
    energies, labels, _ = sys.levels()
    index = {lab: i for i, lab in enumerate(labels)}
    r = np.zeros((4, 4))
    for (la, lb), rate in _channels(sys):
        if {la, lb} == set(FLIP_FLIP_PAIR):
            raise AssertionError("double-quantum channel must never be built")
        ia, ib = index[la], index[lb]
        up, lo = (ia, ib) if energies[ia] > energies[ib] else (ib, ia)
        down_rate, up_rate = detailed_balance_pair(rate, energies[up], energies[lo], sys.temperature)
        r[lo, up] += down_rate
        r[up, lo] += up_rate
    for d in drives:
        la, lb = d.pair()
        if la not in index or lb not in index:
            raise ValueError(f"drive {d} names a transition that does not exist")
        ia, ib = index[la], index[lb]
        r[ia, ib] += d.saturation_rate
        r[ib, ia] += d.saturation_rate
    r -= np.diag(r.sum(axis=0))
    return r


def boltzmann_populations(sys: FourLevelSystem) -> np.ndarray:
    energies, _, _ = sys.levels()
    w = np.exp(-(energies - energies.min()) / sys.temperature)
    return w / w.sum()


def nuclear_polarization(sys: FourLevelSystem, populations) -> np.ndarray:
    """(p_lower - p_upper) of the nucleus, +1 fully in the lower nuclear level."""
    _, labels, _ = sys.levels()
    p = np.asarray(populations, float)
    sign = np.array([1.0 if lab[1] > 0 else -1.0 for lab in labels]) * sys.nuclear_lower_sign()
    return p @ sign / p.sum(axis=-1)


def electron_polarization(sys: FourLevelSystem, populations) -> np.ndarray:
    _, labels, _ = sys.levels()
    p = np.asarray(populations, float)
    sign = np.array([1.0 if lab[0] < 0 else -1.0 for lab in labels])
    return p @ sign / p.sum(axis=-1)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    populations: np.ndarray
    p_nuclear: np.ndarray

    @property
    def final(self) -> float:
        return float(self.p_nuclear[-1])


def propagate(rate_matrix: np.ndarray, p0, times) -> np.ndarray:
    """Populations at ascending ``times`` by stepping exp(R dt) between samples."""
    r = check_generator(rate_matrix)
    times = np.asarray(times, float)
    out = np.empty((times.size, len(p0)))
    p = np.asarray(p0, float)
    t_prev = 0.0
    for i, t in enumerate(times):
        if t < t_prev:
            raise ValueError("times must be ascending")
        if t > t_prev:
            p = expm(r * (t - t_prev)) @ p
        out[i] = p
        t_prev = t
    return out


def rk4_propagate(rate_matrix: np.ndarray, p0, t: float, n_steps: int) -> np.ndarray:
    """Fixed-step RK4 integration of dp/dt = R p, an independent check on ``propagate``."""
    return _accel.rk4_linear(np.asarray(rate_matrix, float), np.asarray(p0, float), t / n_steps, n_steps)


def dnp_steady_state(sys: FourLevelSystem, drives: Sequence[DriveSpec] = ()) -> np.ndarray:
    return steady_state(build_dnp_rate_matrix(sys, drives))


def _trajectory(sys, rate, p0, times) -> Trajectory:
    pops = propagate(rate, p0, times)
    return Trajectory(np.asarray(times, float), pops, nuclear_polarization(sys, pops))


def simulate_overhauser_pump(
    sys: FourLevelSystem, drive: DriveSpec, pump_duration: float, n_points: int = 201
) -> Trajectory:
    """Saturate one hyperfine EPR line starting from thermal equilibrium."""
    if drive.transition != "epr":
        raise ValueError("the Overhauser pump drives an EPR line")
    if drive.saturation_rate < 10 * sys.electron_rate:
        warnings.warn("saturation rate is not much faster than w_e; the line is only partially saturated")
    rate = build_dnp_rate_matrix(sys, [drive])
    times = np.linspace(0.0, pump_duration, n_points)
    return _trajectory(sys, rate, boltzmann_populations(sys), times)


def _swap(p: np.ndarray, ia: int, ib: int) -> np.ndarray:
    q = p.copy()
    q[ia], q[ib] = p[ib], p[ia]
    return q


def simulate_endor_assisted(
    sys: FourLevelSystem,
    mw_drive: DriveSpec,
    rf_drive: DriveSpec,
    duration: float,
    schedule: str = "cw",
    n_points: int = 201,
    cycle_time: float | None = None,
) -> Trajectory:
    """Microwave plus RF polarisation transfer.

    ``cw`` saturates both transitions simultaneously. ``pulsed`` applies an
    ideal microwave pi pulse then an ideal RF pi pulse (instantaneous
    population swaps) at the start of every ``cycle_time``, with free
    relaxation in between; the trajectory is sampled at the end of each cycle.
    """
    if mw_drive.transition != "epr" or rf_drive.transition != "endor":
        raise ValueError("ENDOR-assisted pumping needs one EPR drive and one ENDOR drive")
    p0 = boltzmann_populations(sys)
    if schedule == "cw":
        rate = build_dnp_rate_matrix(sys, [mw_drive, rf_drive])
        return _trajectory(sys, rate, p0, np.linspace(0.0, duration, n_points))
    if schedule != "pulsed":
        raise ValueError(f"schedule must be 'cw' or 'pulsed', got {schedule!r}")
    if cycle_time is None or not cycle_time > 0:
        raise ValueError("pulsed schedule needs a positive cycle_time")
    _, labels, _ = sys.levels()
    index = {lab: i for i, lab in enumerate(labels)}
    mw = [index[x] for x in mw_drive.pair()]
    rf = [index[x] for x in rf_drive.pair()]
    step = expm(build_dnp_rate_matrix(sys) * cycle_time)
    n_cycles = max(1, int(round(duration / cycle_time)))
    pops = [p0]
    p = p0
    for _ in range(n_cycles):
        p = step @ _swap(_swap(p, *mw), *rf)
        pops.append(p)
    pops = np.array(pops)
    times = cycle_time * np.arange(n_cycles + 1)
    return Trajectory(times, pops, nuclear_polarization(sys, pops))


def time_to_fraction(
    sys: FourLevelSystem, drives: Sequence[DriveSpec], fraction: float = 0.9, p0=None
) -> float:
    """First time at which P_n has covered ``fraction`` of its way to steady state."""
    rate = build_dnp_rate_matrix(sys, drives)
    p0 = boltzmann_populations(sys) if p0 is None else np.asarray(p0, float)
    pn0 = nuclear_polarization(sys, p0)
    target = pn0 + fraction * (nuclear_polarization(sys, steady_state(rate)) - pn0)
    offdiag = rate - np.diag(np.diag(rate))
    rates = offdiag[offdiag > 0]
    t_lo, t_hi = 1e-3 / rates.max(), 1e3 / rates.min()
    grid = np.geomspace(t_lo, t_hi, 600)
    pn = nuclear_polarization(sys, propagate(rate, p0, grid))
    reached = np.abs(pn - pn0) >= abs(target - pn0)
    if not reached.any():
        return math.inf
    k = int(np.argmax(reached))
    lo, hi = (0.0 if k == 0 else grid[k - 1]), grid[k]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        val = nuclear_polarization(sys, expm(rate * mid) @ p0)
        if abs(val - pn0) >= abs(target - pn0):
            hi = mid
        else:
            lo = mid
    return hi


def polarized_start(sys: FourLevelSystem) -> np.ndarray:
    """Nucleus fully in its lower level, electron at thermal equilibrium."""
    energies, labels, _ = sys.levels()
    m_lower = 0.5 * sys.nuclear_lower_sign()
    p = np.array([math.exp(-(e - energies.min()) / sys.temperature) if lab[1] == m_lower else 0.0
                  for e, lab in zip(energies, labels)])
    return p / p.sum()


@dataclass(frozen=True)
class T1NResult:
    temperatures: np.ndarray
    t1n: np.ndarray
    residuals: np.ndarray
    quality_ok: np.ndarray
    arrhenius: FitResult

    @property
    def delta_e(self) -> float:
        return self.arrhenius.params["delta_e"]


def decay_time(sys: FourLevelSystem, n_points: int = 400) -> tuple[float, float]:
    """Free decay of nuclear polarisation; returns (time constant, log residual).

    The trajectory is sampled geometrically, then the tail between 0.5 and
    1e-3 of the initial deviation (after the electron transient) is fitted by
    a straight line in log space.
    """
    rate = build_dnp_rate_matrix(sys)
    p0 = polarized_start(sys)
    pn_inf = nuclear_polarization(sys, steady_state(rate))
    # sampling window only: fastest channel to ten slowest-mode lifetimes
    lam = np.sort(np.abs(np.linalg.eigvals(rate).real))
    t_fast = 1.0 / lam[-1]
    grid = np.geomspace(t_fast * 1e-2, 10.0 / lam[1], n_points)
    dev = np.abs(nuclear_polarization(sys, propagate(rate, p0, grid)) - pn_inf)
    d0 = dev[0]
    mask = (grid > 20 * max(t_fast, 1.0 / sys.electron_rate)) & (dev <= 0.5 * d0) & (dev >= 1e-3 * d0)
    if mask.sum() < 5:
        return math.nan, math.inf
    tau, resid = log_linear_decay(grid[mask], dev[mask])
    return tau, resid


def extract_t1n(sys: FourLevelSystem, temperatures: Sequence[float]) -> T1NResult:
    """Nuclear relaxation time per temperature and an Arrhenius fit across them."""
    temps = np.asarray(temperatures, float)
    if temps.size < 3:
        raise ValueError("need at least three temperatures")
    if temps.max() / temps.min() < 1.5:
        raise ValueError("temperatures must span at least a factor 1.5")
    taus, resids = [], []
    for t in temps:
        tau, resid = decay_time(sys.at_temperature(float(t)))
        taus.append(tau)
        resids.append(resid)
    taus = np.array(taus)
    resids = np.array(resids)
    ok = np.isfinite(taus) & (resids < DECAY_RESIDUAL_LIMIT)
    fit = fit_arrhenius(temps[np.isfinite(taus)], taus[np.isfinite(taus)])
    return T1NResult(temps, taus, resids, ok, fit)
