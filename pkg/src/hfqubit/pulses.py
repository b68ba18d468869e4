"""Rotating-frame pulse propagation, B1 ensembles and pulse-sequence experiments.

All propagation is exact for the piecewise-constant rotating-frame
Hamiltonian (rotating-wave approximation, secular hyperfine ``a Sz Iz``).
Electrons are held in a frame at the microwave reference frequency and nuclei
in a frame at the RF reference (0 Hz means the nuclei stay in the lab frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import signal as sps
from scipy import stats

from . import _accel
from . import constants as C
from .results import ResultTable
from .spin import (
    DensityState,
    SpinSystem,
    lab_hamiltonian,
    thermal_state,
    zeeman_frequency,
)

DEFAULT_B1_SAMPLES = 256
SELECTIVITY_THRESHOLD = 0.01
EXTREMA_PROMINENCE = 0.1


@dataclass(frozen=True)
class PulseEvent:
    channel: str  # "microwave" | "rf"
    duration: float
    b1_amplitude: float
    phase: float = 0.0
    carrier_offset: float = 0.0

    def __post_init__(self):
        if self.channel not in ("microwave", "rf"):
            raise ValueError(f"pulse channel must be 'microwave' or 'rf', got {self.channel!r}")
        if self.duration < 0:
            raise ValueError("pulse duration must be non-negative")
        if self.b1_amplitude < 0:
            raise ValueError("B1 amplitude must be non-negative")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class Detection:
    """Observable read out at the end of a sequence.

    ``component`` is ``"x"``, ``"y"``, ``"z"`` or ``"echo"`` (the transverse
    component that an ideal Hahn echo refocuses along). The value is divided
    by the initial ``<Sz>`` of the detected species when ``normalize`` is set.
    """

    component: str = "z"
    species: int = 0
    normalize: bool = True

    def __post_init__(self):
        if self.component not in ("x", "y", "z", "echo"):
            raise ValueError(f"unknown detection component {self.component!r}")


@dataclass(frozen=True)
class PulseSequence:
    events: tuple[Union[PulseEvent, Delay], ...]
    detection: Detection = field(default_factory=Detection)
    frame_frequency: float = 0.0
    rf_frame_frequency: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.detection is None:
            raise ValueError("a pulse sequence needs a detection point")
        if not math.isfinite(self.total_duration):
            raise ValueError("sequence duration must be finite")

    @property
    def total_duration(self) -> float:
        return float(sum(ev.duration for ev in self.events))


@dataclass(frozen=True)
class B1Distribution:
    """Distribution of drive amplitudes (tesla) across the sample.

    Sampling is deterministic: equal-weight samples at the midpoints of
    ``sample_count`` quantile strata.
    """

    kind: str
    mean: float = 0.0
    sd: float = 0.0
    low: float = 0.0
    high: float = 0.0
    amplitudes: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    sample_count: int = DEFAULT_B1_SAMPLES

    def __post_init__(self):
        if self.kind not in ("delta", "uniform", "gaussian", "empirical"):
            raise ValueError(f"unknown B1 distribution kind {self.kind!r}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")
        if self.kind == "delta" and self.mean < 0:
            raise ValueError("B1 amplitude must be non-negative")
        if self.kind == "uniform" and not (0 <= self.low <= self.high):
            raise ValueError("uniform B1 needs 0 <= low <= high")
        if self.kind == "gaussian" and (self.mean < 0 or self.sd < 0):
            raise ValueError("gaussian B1 needs non-negative mean and sd")
        if self.kind == "empirical":
            amps = np.asarray(self.amplitudes, float)
            w = np.asarray(self.weights, float)
            if amps.size == 0 or amps.shape != w.shape:
                raise ValueError("empirical B1 needs matching amplitude and weight lists")
            if np.any(amps < 0) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("empirical B1 amplitudes and weights must be non-negative")

    @classmethod
    def delta(cls, b1: float) -> "B1Distribution":
        return cls("delta", mean=b1, sample_count=1)

    @classmethod
    def uniform(cls, low: float, high: float, sample_count: int = DEFAULT_B1_SAMPLES) -> "B1Distribution":
        return cls("uniform", low=low, high=high, sample_count=sample_count)

    @classmethod
    def gaussian(cls, mean: float, sd: float, sample_count: int = DEFAULT_B1_SAMPLES) -> "B1Distribution":
        return cls("gaussian", mean=mean, sd=sd, sample_count=sample_count)

    @classmethod
    def empirical(cls, pairs: Sequence[tuple[float, float]]) -> "B1Distribution":
        amps, w = zip(*pairs)
        return cls("empirical", amplitudes=tuple(amps), weights=tuple(w), sample_count=len(amps))

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "delta":
            return np.array([self.mean]), np.array([1.0])
        if self.kind == "empirical":
            w = np.asarray(self.weights, float)
            return np.asarray(self.amplitudes, float), w / w.sum()
        n = self.sample_count
        u = (np.arange(n) + 0.5) / n
        if self.kind == "uniform":
            amps = self.low + u * (self.high - self.low)
        elif self.sd == 0:
            amps = np.full(n, self.mean)
        else:
            a = -self.mean / self.sd
            amps = stats.truncnorm.ppf(u, a, np.inf, loc=self.mean, scale=self.sd)
        return np.asarray(amps, float), np.full(n, 1.0 / n)

    def nominal(self) -> float:
        """Mean amplitude, used to calibrate nominal pulse angles."""
        amps, w = self.samples()
        return float(amps @ w)

    def scaled(self, factor: float) -> "B1Distribution":
        """Same shape with every amplitude multiplied by ``factor`` (attenuation)."""
        return B1Distribution(
            self.kind,
            mean=self.mean * factor,
            sd=self.sd * factor,
            low=self.low * factor,
            high=self.high * factor,
            amplitudes=tuple(a * factor for a in self.amplitudes),
            weights=self.weights,
            sample_count=self.sample_count,
        )


def rabi_frequency(species, b1: float) -> float:
    """Nutation frequency omega_1 (rad/s) of a species in a rotating field of amplitude b1."""
    if species.kind == "electron":
        return abs(species.g_or_gamma) * C.BOHR_MAGNETON * b1 / C.HBAR
    return 2.0 * np.pi * abs(species.g_or_gamma) * b1


def _frame_offset(omega0: float, frame_hz: float) -> float:
    # the frame rotates in the spin's own precession sense
    return omega0 - math.copysign(2.0 * np.pi * frame_hz, omega0) if omega0 != 0 else 0.0


def rotating_frame_hamiltonian(
    system: SpinSystem,
    b0: float,
    event: PulseEvent | Delay,
    frame_frequency: float | None = None,
    other_frame: float | None = None,
) -> np.ndarray:
    """Static rotating-frame Hamiltonian (rad/s) during one event.

    The addressed channel's spins are viewed in a frame at
    ``frame_frequency + carrier_offset``. Spins of the other channel use
    ``other_frame``; by default nuclei stay in the lab frame during microwave
    events and electrons are taken exactly on their own Larmor frequency
    during RF events. A :class:`Delay` uses ``frame_frequency`` for the
    electrons and ``other_frame`` for the nuclei.
    """
    if isinstance(event, Delay):
        e_frame, n_frame = frame_frequency, other_frame or 0.0
        b1, phase, channel = 0.0, 0.0, "microwave"
    else:
        channel, b1, phase = event.channel, event.b1_amplitude, event.phase
        carrier = (frame_frequency or 0.0) + event.carrier_offset
        if channel == "microwave":
            e_frame, n_frame = carrier, other_frame or 0.0
        else:
            e_frame, n_frame = other_frame, carrier
    kind = "electron" if channel == "microwave" else "nuclear"
    addressed = system.indices(kind)
    if not isinstance(event, Delay) and not addressed:
        raise ValueError(f"{channel} pulse has no {kind} spin to address")

    h = np.zeros((system.dim, system.dim), dtype=complex)
    for i, sp in enumerate(system.species):
        omega0 = zeeman_frequency(sp, b0)
        if sp.kind == "electron":
            offset = 0.0 if e_frame is None else _frame_offset(omega0, e_frame)
        else:
            offset = _frame_offset(omega0, n_frame)
        h += offset * system.operator(i, "z")
    for ie, jn, a in system.couplings:
        h += 2.0 * np.pi * a * system.operator(ie, "z") @ system.operator(jn, "z")
    if b1 > 0:
        for i in addressed:
            w1 = rabi_frequency(system.species[i], b1)
            h += w1 * (math.cos(phase) * system.operator(i, "x") + math.sin(phase) * system.operator(i, "y"))
    return 0.5 * (h + h.conj().T)


def propagator(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) by Hermitian eigendecomposition."""
    evals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * evals * t)) @ vecs.conj().T


def evolve(state: DensityState, h: np.ndarray, t: float) -> DensityState:
    """Unitary evolution rho -> U rho U^dagger with U = exp(-iHt)."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if t == 0:
        return state
    u = propagator(h, t)
    rho = u @ state.matrix @ u.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityState(rho / np.trace(rho).real, state.system)


def _detection_operator(system: SpinSystem, detection: Detection) -> np.ndarray:
    if detection.component == "echo":
        return -system.operator(detection.species, "y")
    return system.operator(detection.species, detection.component)


def _detection_norm(system: SpinSystem, detection: Detection, rho0: DensityState) -> float:
    if not detection.normalize:
        return 1.0
    mz = rho0.expectation(system.operator(detection.species, "z"))
    if abs(mz) < 1e-300:
        raise ValueError("initial longitudinal magnetisation is zero; cannot normalise")
    return mz if detection.component == "z" else abs(mz)


def equilibrium_state(system: SpinSystem, b0: float, temperature: float) -> DensityState:
    return thermal_state(lab_hamiltonian(system, b0), temperature, system)


def simulate_sequence(
    system: SpinSystem, b0: float, sequence: PulseSequence, rho0: DensityState
) -> tuple[DensityState, float]:
    """Apply every event in order; returns the final state and the detected value."""
    state = rho0
    for ev in sequence.events:
        if isinstance(ev, Delay):
            h = rotating_frame_hamiltonian(system, b0, ev, sequence.frame_frequency, sequence.rf_frame_frequency)
        elif ev.channel == "microwave":
            h = rotating_frame_hamiltonian(system, b0, ev, sequence.frame_frequency, sequence.rf_frame_frequency)
        else:
            h = rotating_frame_hamiltonian(system, b0, ev, sequence.rf_frame_frequency, sequence.frame_frequency)
        state = evolve(state, h, ev.duration)
    det = sequence.detection
    value = state.expectation(_detection_operator(system, det)) / _detection_norm(system, det, rho0)
    return state, value


def _resonant_frame(system: SpinSystem, b0: float, species: int) -> float:
    return abs(zeeman_frequency(system.species[species], b0)) / (2.0 * np.pi)


def _check_grid(tp_grid) -> np.ndarray:
    tp = np.asarray(tp_grid, dtype=float)
    if tp.ndim != 1 or tp.size == 0:
        raise ValueError("pulse-length grid must be a non-empty 1-D sequence")
    if np.any(np.diff(tp) < 0) or np.any(tp < 0):
        raise ValueError("pulse-length grid must be non-negative and sorted ascending")
    return tp


def _nutation_signal(
    system: SpinSystem,
    b0: float,
    b1_dist: B1Distribution,
    tp: np.ndarray,
    detection: Detection,
    frame_frequency: float,
    temperature: float,
    post: callable = None,
) -> np.ndarray:
    rho0 = equilibrium_state(system, b0, temperature)
    det = _detection_operator(system, detection)
    norm = _detection_norm(system, detection, rho0)
    amps, weights = b1_dist.samples()
    d = system.dim
    freqs = np.empty((amps.size, d))
    coeff = np.empty((amps.size, d, d), dtype=complex)
    for s, (b1, w) in enumerate(zip(amps, weights)):
        pulse = PulseEvent("microwave", 0.0, float(b1))
        h = rotating_frame_hamiltonian(system, b0, pulse, frame_frequency)
        det_s = det if post is None else post(float(b1), det)
        evals, vecs = np.linalg.eigh(h)
        rho_e = vecs.conj().T @ rho0.matrix @ vecs
        det_e = vecs.conj().T @ det_s @ vecs
        freqs[s] = evals
        coeff[s] = w * rho_e * det_e.T
    return _accel.ensemble_signal(freqs, coeff, tp) / norm


def rabi_nutation(
    system: SpinSystem,
    b0: float,
    b1_dist: B1Distribution,
    tp_grid: Sequence[float],
    detection: Detection = Detection("z"),
    frame_frequency: float | None = None,
    temperature: float = 3.0,
) -> ResultTable:
    """Ensemble-averaged signal after a single microwave pulse of each length.

    With the default detection this is ``<Sz>(tp) / <Sz>(0)``, i.e.
    ``cos(omega_1 tp)`` for a single on-resonance spin packet.
    """
    tp = _check_grid(tp_grid)
    if frame_frequency is None:
        frame_frequency = _resonant_frame(system, b0, system.indices("electron")[0])
    sig = _nutation_signal(system, b0, b1_dist, tp, detection, frame_frequency, temperature)
    return ResultTable({"tp_s": tp, "signal": sig})


def hahn_echo_rabi(
    system: SpinSystem,
    b0: float,
    b1_dist: B1Distribution,
    tp_grid: Sequence[float],
    tau: float,
    t2: float = math.inf,
    frame_frequency: float | None = None,
    temperature: float = 3.0,
) -> ResultTable:
    """Echo height versus the length of the first pulse of a two-pulse echo.

    The refocusing pulse is a nominal pi pulse calibrated to the mean B1, so
    spins at other amplitudes are refocused imperfectly. T2 decay enters as
    the scalar factor ``exp(-2 tau / T2)``.
    """
    if not tau > 0:
        raise ValueError("echo delay tau must be positive")
    if not t2 > 0:
        raise ValueError("T2 must be positive")
    tp = _check_grid(tp_grid)
    e_idx = system.indices("electron")[0]
    if frame_frequency is None:
        frame_frequency = _resonant_frame(system, b0, e_idx)
    w1_nominal = rabi_frequency(system.species[e_idx], b1_dist.nominal())
    if w1_nominal <= 0:
        raise ValueError("mean B1 must be positive to calibrate the refocusing pulse")
    t_pi = math.pi / w1_nominal
    h_free = rotating_frame_hamiltonian(system, b0, Delay(tau), frame_frequency)
    u_free = propagator(h_free, tau)

    def heisenberg(b1: float, det: np.ndarray) -> np.ndarray:
        h_pi = rotating_frame_hamiltonian(system, b0, PulseEvent("microwave", t_pi, b1), frame_frequency)
        v = u_free @ propagator(h_pi, t_pi) @ u_free
        return v.conj().T @ det @ v

    detection = Detection("echo", e_idx)
    sig = _nutation_signal(system, b0, b1_dist, tp, detection, frame_frequency, temperature, heisenberg)
    decay = 0.0 if math.isinf(t2) else 2.0 * tau / t2
    return ResultTable({"tp_s": tp, "signal": sig * math.exp(-decay)})


def mims_endor_sequence(
    tau: float,
    t_mix: float,
    b1_mw: float,
    b1_rf: float,
    rf_frequency: float,
    electron_species,
    nuclear_species,
    frame_frequency: float,
    rf_frame_frequency: float | None = None,
) -> PulseSequence:
    """pi/2 - tau - pi/2 - [RF pi during T] - pi/2 - tau - echo skeleton."""
    t90 = (math.pi / 2) / rabi_frequency(electron_species, b1_mw)
    w1_rf = rabi_frequency(nuclear_species, b1_rf)
    t_rf = math.pi / w1_rf if b1_rf > 0 else 0.0
    if t_rf > t_mix:
        raise ValueError("RF pi pulse does not fit into the mixing period")
    rf_ref = rf_frequency if rf_frame_frequency is None else rf_frame_frequency
    events = [
        PulseEvent("microwave", t90, b1_mw),
        Delay(tau),
        PulseEvent("microwave", t90, b1_mw),
        PulseEvent("rf", t_rf, b1_rf, carrier_offset=rf_frequency - rf_ref),
        Delay(t_mix - t_rf),
        PulseEvent("microwave", t90, b1_mw),
        Delay(tau),
    ]
    return PulseSequence(tuple(events), Detection("echo"), frame_frequency, rf_ref)


# ---------------------------------------------------------------------------
# excitation bandwidth, selectivity, figure of merit


def excitation_bandwidth(tp: float) -> float:
    """Excitation bandwidth in Hz, i.e. (2 pi / tp) / 2 pi."""
    if not tp > 0:
        raise ValueError("pulse length must be positive")
    return 1.0 / tp


def excitation_profile(offset_hz, tp: float):
    """sinc^2 excitation weight versus detuning, 1 on resonance, zeros at n/tp."""
    if not tp > 0:
        raise ValueError("pulse length must be positive")
    return np.sinc(np.asarray(offset_hz, float) * tp) ** 2


def selectively_addressable(separation_hz: float, tp: float, threshold: float = SELECTIVITY_THRESHOLD) -> bool:
    """True when the sinc^2 weight stays below ``threshold`` at and beyond the separation.

    Taking the worst case over all larger offsets stops a line that happens to
    sit on a sinc zero from counting as selective.
    """
    x0 = abs(separation_hz) * tp
    # sidelobe peaks are spaced by one unit of x; two units cover the next maximum
    x = x0 + np.linspace(0.0, 2.0, 2001)
    return bool(np.max(np.sinc(x) ** 2) < threshold)


def figure_of_merit(t2: float, t_op: float) -> float:
    """Number of operations within the coherence time, T2 / T_op."""
    if not (t2 > 0 and t_op > 0):
        raise ValueError("T2 and T_op must both be positive")
    return t2 / t_op


def pi_pulse_length(species, b1: float) -> float:
    return math.pi / rabi_frequency(species, b1)


# ---------------------------------------------------------------------------
# trace analysis


def resolvable_extrema(signal: Sequence[float], prominence: float = EXTREMA_PROMINENCE) -> np.ndarray:
    """Indices of interior maxima and minima with at least ``prominence``."""
    s = np.asarray(signal, float)
    peaks, _ = sps.find_peaks(s, prominence=prominence)
    troughs, _ = sps.find_peaks(-s, prominence=prominence)
    return np.sort(np.concatenate([peaks, troughs]))


def damping_time(tp: Sequence[float], signal: Sequence[float], baseline: float = 0.0) -> float:
    """Time at which the extremum envelope first falls below 1/e of its maximum.

    The envelope is built from |signal - baseline| at local extrema (plus the
    first point), linearly interpolated. Returns ``inf`` if it never decays
    that far within the trace.
    """
    t = np.asarray(tp, float)
    s = np.abs(np.asarray(signal, float) - baseline)
    raw = np.asarray(signal, float) - baseline
    peaks, _ = sps.find_peaks(raw)
    troughs, _ = sps.find_peaks(-raw)
    idx = np.unique(np.concatenate([[0], peaks, troughs]))
    env_t, env = t[idx], s[idx]
    start = int(np.argmax(env))
    level = env[start] / math.e
    for i in range(start + 1, env.size):
        if env[i] < level:
            frac = (env[i - 1] - level) / (env[i - 1] - env[i])
            return float(env_t[i - 1] + frac * (env_t[i] - env_t[i - 1]))
    return math.inf
