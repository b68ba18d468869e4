import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfqubit import constants as C
from hfqubit import pulses
from hfqubit.pulses import B1Distribution, Delay, Detection, PulseEvent, PulseSequence
from hfqubit.spin import DensityState, SpinSystem, electron, electron_nuclear_pair, lab_hamiltonian, thermal_state

G = 2.0
NU = 240e9
B0 = C.resonant_field(G, NU)
B1 = 0.3 * C.GAUSS
TWO_LEVEL = SpinSystem((electron("e", G),))


def omega1(b1=B1, g=G):
    return g * C.BOHR_MAGNETON * b1 / C.HBAR


def test_rabi_frequency_at_point_three_gauss():
    f1 = pulses.rabi_frequency(TWO_LEVEL.species[0], B1) / (2 * math.pi)
    assert f1 == pytest.approx(G * C.BOHR_MAGNETON * B1 / C.PLANCK_H, rel=1e-15)
    assert f1 == pytest.approx(0.84e6, rel=0.01)


def test_delta_b1_nutation_is_cosine():
    tp = np.linspace(0, 10e-6, 501)
    sig = pulses.rabi_nutation(TWO_LEVEL, B0, B1Distribution.delta(B1), tp)["signal"]
    assert np.max(np.abs(sig - np.cos(omega1() * tp))) < 1e-9


def test_uniform_ensemble_matches_closed_form_average():
    lo, hi = 0.5 * B1, B1
    tp = np.linspace(0, 12e-6, 241)
    sig = pulses.rabi_nutation(TWO_LEVEL, B0, B1Distribution.uniform(lo, hi), tp)["signal"]
    w_lo, w_hi = omega1(lo), omega1(hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = (np.sin(w_hi * tp) - np.sin(w_lo * tp)) / ((w_hi - w_lo) * tp)
    exact[0] = 1.0
    assert np.max(np.abs(sig - exact)) < 2e-3


def test_uniform_ensemble_envelope_after_ten_periods():
    lo, hi = 0.5 * B1, B1
    period = 2 * math.pi / omega1(hi)
    tp = np.linspace(0, 12 * period, 2401)
    sig = pulses.rabi_nutation(TWO_LEVEL, B0, B1Distribution.uniform(lo, hi), tp)["signal"]
    # brute force over 1e4 random amplitudes as the independent reference
    rng = np.random.default_rng(5)
    amps = rng.uniform(lo, hi, 10_000)
    late = tp >= 10 * period
    brute = np.cos(np.outer(tp[late], omega1(amps))).mean(axis=1)
    assert np.max(np.abs(sig[late])) < 0.3
    assert np.max(np.abs(sig[late] - brute)) < 0.03


def test_gaussian_ensemble_envelope():
    rel = 0.02
    tp = np.linspace(0, 30e-6, 601)
    sig = pulses.rabi_nutation(TWO_LEVEL, B0, B1Distribution.gaussian(B1, rel * B1), tp)["signal"]
    w = omega1()
    exact = np.exp(-0.5 * (rel * w * tp) ** 2) * np.cos(w * tp)
    assert np.max(np.abs(sig - exact)) < 2e-3


def test_hahn_echo_detection_is_sine_of_first_pulse():
    tp = np.linspace(0, 4e-6, 201)
    sig = pulses.hahn_echo_rabi(TWO_LEVEL, B0, B1Distribution.delta(B1), tp, tau=1e-6)["signal"]
    assert np.max(np.abs(sig - np.sin(omega1() * tp))) < 1e-9


def test_hahn_echo_t2_factor():
    tp = np.linspace(0, 2e-6, 51)
    dist = B1Distribution.delta(B1)
    a = pulses.hahn_echo_rabi(TWO_LEVEL, B0, dist, tp, tau=1e-6)["signal"]
    b = pulses.hahn_echo_rabi(TWO_LEVEL, B0, dist, tp, tau=1e-6, t2=5e-6)["signal"]
    assert np.allclose(b, a * math.exp(-2 * 1e-6 / 5e-6), atol=1e-15)


def test_echo_refocuses_static_detuning_between_pulses():
    # a hard pi pulse refocuses free precession at any offset; with a strong
    # B1 the echo at t_p = pi/2 stays close to 1 despite the detuning
    b1 = 30 * C.GAUSS
    off = 2e6
    f = C.electron_larmor_hz(G, B0) + off
    t90 = 0.5 * math.pi / omega1(b1)
    sig = pulses.hahn_echo_rabi(TWO_LEVEL, B0, B1Distribution.delta(b1), [t90], 1e-6, frame_frequency=f)["signal"]
    assert sig[0] == pytest.approx(1.0, abs=0.02)


def test_hyperfine_line_selection():
    system = electron_nuclear_pair(1.9985, "31P", 117.53e6)
    b0 = C.resonant_field(1.9985, NU)
    f_line = C.electron_larmor_hz(1.9985, b0) + 117.53e6 / 2
    tp = np.linspace(0, 5e-6, 201)
    sig = pulses.rabi_nutation(system, b0, B1Distribution.delta(B1), tp, frame_frequency=f_line)["signal"]
    # only the resonant half of the population nutates
    assert sig.min() == pytest.approx(0.0, abs=0.01)
    assert sig.max() == pytest.approx(1.0, abs=1e-6)


def test_unitary_evolution_preserves_spectrum():
    system = electron_nuclear_pair(2.0, "13C", 20e6)
    rho = thermal_state(lab_hamiltonian(system, 1.0), 0.5, system)
    h = pulses.rotating_frame_hamiltonian(system, 1.0, PulseEvent("microwave", 1e-7, 5 * C.GAUSS), 28e9)
    out = pulses.evolve(rho, h, 3.7e-7)
    assert np.allclose(np.linalg.eigvalsh(out.matrix), np.linalg.eigvalsh(rho.matrix), atol=1e-12)
    still = pulses.evolve(rho, np.zeros_like(h), 1e-3)
    assert np.abs(still.matrix - rho.matrix).max() < 1e-12


@given(st.floats(1e-9, 1e-5), st.floats(0.0, 2 * math.pi))
def test_pi_pulse_inverts_populations(b1, phase):
    t_pi = pulses.pi_pulse_length(TWO_LEVEL.species[0], b1)
    rho0 = DensityState(np.diag([0.0, 1.0]), TWO_LEVEL)
    h = pulses.rotating_frame_hamiltonian(
        TWO_LEVEL, B0, PulseEvent("microwave", t_pi, b1, phase), C.electron_larmor_hz(G, B0)
    )
    out = pulses.evolve(rho0, h, t_pi)
    assert out.populations[0] == pytest.approx(1.0, abs=1e-9)


def test_simulate_sequence_equals_direct_propagation():
    rho0 = pulses.equilibrium_state(TWO_LEVEL, B0, 3.0)
    t90 = 0.5 * math.pi / omega1()
    seq = PulseSequence(
        (PulseEvent("microwave", t90, B1), Delay(1e-6), PulseEvent("microwave", 2 * t90, B1), Delay(1e-6)),
        Detection("echo"),
        C.electron_larmor_hz(G, B0),
    )
    _, value = pulses.simulate_sequence(TWO_LEVEL, B0, seq, rho0)
    assert value == pytest.approx(1.0, abs=1e-9)


def test_mims_sequence_skeleton():
    e = electron("e", 1.9985)
    from hfqubit.spin import nucleus

    n = nucleus("31P")
    seq = pulses.mims_endor_sequence(0.3e-6, 100e-6, 10 * C.GAUSS, 50 * C.GAUSS, 100e6, e, n, 240e9)
    kinds = [type(ev).__name__ for ev in seq.events]
    assert kinds == ["PulseEvent", "Delay", "PulseEvent", "PulseEvent", "Delay", "PulseEvent", "Delay"]
    rf = seq.events[3]
    assert rf.channel == "rf"
    assert rf.duration == pytest.approx(pulses.pi_pulse_length(n, 50 * C.GAUSS))
    with pytest.raises(ValueError, match="mixing"):
        pulses.mims_endor_sequence(0.3e-6, 1e-6, 10 * C.GAUSS, 1 * C.GAUSS, 100e6, e, n, 240e9)


def test_mims_rf_pulse_changes_the_echo():
    system = electron_nuclear_pair(1.9985, "31P", 117.53e6)
    b0 = C.resonant_field(1.9985, 240e9)
    e, n = system.species
    frame = C.electron_larmor_hz(1.9985, b0) + 117.53e6 / 2
    rho0 = pulses.equilibrium_state(system, b0, 3.0)
    h = lab_hamiltonian(system, b0) / (2 * math.pi)
    ev = np.sort(np.linalg.eigvalsh(h))
    gaps = sorted(abs(a - b) for a in ev for b in ev if 1e6 < abs(a - b) < 1e9)
    rf = gaps[0]  # lowest NMR transition
    tau = 0.25 / 117.53e6 * 7
    off = pulses.mims_endor_sequence(tau, 50e-6, 30 * C.GAUSS, 0.0, rf, e, n, frame)
    on = pulses.mims_endor_sequence(tau, 50e-6, 30 * C.GAUSS, 200 * C.GAUSS, rf, e, n, frame)
    _, s_off = pulses.simulate_sequence(system, b0, off, rho0)
    _, s_on = pulses.simulate_sequence(system, b0, on, rho0)
    assert abs(s_on - s_off) > 0.05


def test_b1_distribution_sampling():
    d = B1Distribution.gaussian(B1, 0.1 * B1, 128)
    a1, w1 = d.samples()
    a2, w2 = d.samples()
    assert np.array_equal(a1, a2) and w1.sum() == pytest.approx(1.0)
    assert np.all(np.diff(a1) > 0) and a1.min() >= 0
    assert d.nominal() == pytest.approx(B1, rel=1e-3)
    half = d.scaled(0.5)
    assert np.allclose(half.samples()[0], 0.5 * a1)
    emp = B1Distribution.empirical([(1e-5, 1.0), (3e-5, 3.0)])
    assert emp.nominal() == pytest.approx(2.5e-5)
    wide = B1Distribution.gaussian(1e-5, 2e-5)
    assert wide.samples()[0].min() >= 0


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"kind": "lorentz"}, "unknown"),
        ({"kind": "uniform", "low": 2.0, "high": 1.0}, "low <= high"),
        ({"kind": "gaussian", "mean": 1.0, "sd": -1.0}, "non-negative"),
        ({"kind": "empirical", "amplitudes": (1.0,), "weights": ()}, "matching"),
        ({"kind": "delta", "sample_count": 0}, "sample_count"),
    ],
)
def test_b1_distribution_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        B1Distribution(**kwargs)


def test_event_validation():
    with pytest.raises(ValueError, match="channel"):
        PulseEvent("optical", 1e-6, 1e-4)
    with pytest.raises(ValueError, match="duration"):
        PulseEvent("microwave", -1.0, 1e-4)
    with pytest.raises(ValueError, match="delay"):
        Delay(-1e-9)
    with pytest.raises(ValueError, match="detection"):
        Detection("w")
    with pytest.raises(ValueError, match="detection point"):
        PulseSequence((), None)


def test_grid_validation():
    with pytest.raises(ValueError, match="sorted"):
        pulses.rabi_nutation(TWO_LEVEL, B0, B1Distribution.delta(B1), [2e-6, 1e-6])
    with pytest.raises(ValueError, match="tau"):
        pulses.hahn_echo_rabi(TWO_LEVEL, B0, B1Distribution.delta(B1), [1e-6], tau=0.0)


def test_bandwidth_and_selectivity():
    assert pulses.excitation_bandwidth(50e-9) == pytest.approx(20e6)
    assert pulses.excitation_profile(0.0, 1e-6) == 1.0
    assert pulses.excitation_profile(3e6, 1e-6) == pytest.approx(0.0, abs=1e-30)
    sep_high = abs(C.isotope("13C").gamma_hz_per_t) * 8.55 - abs(C.isotope("29Si").gamma_hz_per_t) * 8.55
    assert pulses.selectively_addressable(sep_high, 1e-6)
    sep_low = sep_high * 0.35 / 8.55
    assert not pulses.selectively_addressable(sep_low, 1e-6)
    # sitting on a sinc zero does not count as selective
    assert not pulses.selectively_addressable(1.0e6, 1e-6)


def test_figure_of_merit():
    t_op = pulses.pi_pulse_length(TWO_LEVEL.species[0], B1)
    assert t_op == pytest.approx(0.5 / (G * C.BOHR_MAGNETON * B1 / C.PLANCK_H))
    assert pulses.figure_of_merit(200e-6, t_op) == pytest.approx(200e-6 / t_op)
    with pytest.raises(ValueError):
        pulses.figure_of_merit(0.0, t_op)


def test_extrema_and_damping_on_synthetic_trace():
    t = np.linspace(0, 20e-6, 4001)
    f, tau = 1e6, 5e-6
    sig = np.exp(-t / tau) * np.cos(2 * math.pi * f * t)
    # interior extrema every half period, until the envelope drops below the prominence
    n_expected = int(2 * f * t[-1]) - 1
    ext = pulses.resolvable_extrema(sig)
    assert 0 < ext.size < n_expected
    assert np.all(np.abs(sig[ext]) > 0.05)
    assert pulses.damping_time(t, sig) == pytest.approx(tau, rel=0.05)
    assert pulses.damping_time(t, np.cos(2 * math.pi * f * t)) == math.inf
