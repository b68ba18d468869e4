import numpy as np
import pytest
import scipy.constants as sc
from hypothesis import given, strategies as st

from hfqubit import spectra
from hfqubit.spectra import CenterDescriptor, EndorNucleus

NH = CenterDescriptor("nh", 2.0055, ((2.8e6, 1.0),), 1.0, 2e-5)
NC = CenterDescriptor("nc", 2.0043, ((50.4e6, 1.0),), 0.6, 2e-5)


# scipy may carry a newer CODATA release than the package, hence rel=1e-8 on absolute fields
def oracle_field(g, nu):
    return sc.h * nu / (g * sc.physical_constants["Bohr magneton"][0])


def test_resonance_field_matches_oracle():
    assert spectra.resonance_field(2.0023, 9.7e9) == pytest.approx(oracle_field(2.0023, 9.7e9), rel=1e-8)
    shifted = spectra.resonance_field(2.0, 9.7e9, 1.0, 10e6)
    assert shifted == pytest.approx(oracle_field(2.0, 9.7e9 - 10e6), rel=1e-8)


@given(st.floats(1.99, 2.01), st.floats(1e-5, 5e-3))
def test_g_separation_scales_with_frequency(g, dg):
    a = CenterDescriptor("a", g)
    b = CenterDescriptor("b", g + dg)
    sep = lambda nu: abs(spectra.centroid_field(a, nu) - spectra.centroid_field(b, nu))
    assert sep(336e9) / sep(9.7e9) == pytest.approx(336 / 9.7, rel=1e-9)
    # symbolic form: dB = h nu / muB * (1/g - 1/(g + dg))
    expected = oracle_field(1.0, 336e9) * (1 / g - 1 / (g + dg))
    assert sep(336e9) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("nu", [9.7e9, 95e9, 336e9])
def test_hyperfine_spacing_does_not_depend_on_frequency(nu):
    fields, weights = spectra.center_lines(NC, nu)
    spacing = np.diff(np.sort(fields))
    expected = sc.h * 50.4e6 / (NC.g * sc.physical_constants["Bohr magneton"][0])
    assert np.allclose(spacing, expected, rtol=1e-8)
    assert weights.sum() == pytest.approx(NC.relative_weight)
    assert fields.size == 3


def test_centroid_of_symmetric_ladder_is_bare_resonance():
    assert spectra.centroid_field(NC, 336e9) == pytest.approx(oracle_field(NC.g, 336e9), rel=1e-8)


def test_pair_ladders_multiply():
    pair = CenterDescriptor("pair", 2.0049, ((1.4e6, 1.0), (25.2e6, 1.0)), 0.15)
    fields, weights = spectra.center_lines(pair, 9.7e9)
    assert fields.size == 9
    assert np.allclose(weights, 0.15 / 9)
    assert spectra.pair_center_g(2.0055, 2.0043) == pytest.approx(2.0049)


def test_integral_equals_total_weight():
    nu = 9.7e9
    b0 = spectra.resonance_field(NH.g, nu)
    grid = np.linspace(b0 - 6e-3, b0 + 6e-3, 60001)
    spec = spectra.synthesize_epr_spectrum([NH, NC], nu, grid)
    assert spec.integral() == pytest.approx(1.6, rel=1e-6)
    assert spec.metadata["warnings"] == []


def test_derivative_spectrum_integrates_to_zero_and_crosses_at_line():
    nu = 9.7e9
    b0 = spectra.resonance_field(2.0, nu)
    grid = np.linspace(b0 - 5e-4, b0 + 5e-4, 20001)
    c = CenterDescriptor("c", 2.0, linewidth=2e-5)
    d = spectra.synthesize_epr_spectrum([c], nu, grid, derivative=True)
    assert abs(d.integral()) < 1e-6 * np.abs(d.intensity).max() * 1e-3
    crossing = grid[np.argmax(d.intensity)] < b0 < grid[np.argmin(d.intensity)]
    assert crossing


def test_spectrum_warns_when_grid_misses_lines():
    grid = np.linspace(0.3, 0.31, 101)
    spec = spectra.synthesize_epr_spectrum([NH], 336e9, grid)
    assert spec.metadata["warnings"]


def test_resolution_improves_with_frequency():
    broad = CenterDescriptor("nh", 2.0055, linewidth=3e-4)
    other = CenterDescriptor("x", 2.0043, linewidth=3e-4)
    lo = spectra.resolvability(broad, other, 9.7e9)
    hi = spectra.resolvability(broad, other, 336e9)
    assert not lo.resolved and hi.resolved
    assert hi.separation_over_width / lo.separation_over_width == pytest.approx(336 / 9.7, rel=1e-9)


def test_effective_g_inverts_resonance_field():
    b = spectra.resonance_field(2.0031, 240e9)
    assert spectra.effective_g(b, 240e9) == pytest.approx(2.0031, rel=1e-12)


@given(st.floats(1e6, 1e9), st.floats(0.1, 15.0), st.floats(0.0, 5e7))
def test_endor_pair_midpoint_and_splitting(gamma, b0, a):
    lo, hi = spectra.endor_frequencies(gamma, b0, a)
    nu_n = gamma * b0
    if a / 2 <= nu_n:
        assert (lo + hi) / 2 == pytest.approx(nu_n, rel=1e-12)
        assert hi - lo == pytest.approx(a, rel=1e-9, abs=1e-14 * nu_n)
    else:
        assert (lo + hi) / 2 == pytest.approx(a / 2, rel=1e-12)
        assert hi - lo == pytest.approx(2 * nu_n, rel=1e-9)


def test_unresolved_nucleus_gives_single_line():
    lo, hi = spectra.endor_frequencies(10.7084e6, 1.0, 0.0)
    assert lo == hi


def test_larmor_separation_between_silicon_and_carbon():
    gc, gsi = 10.7084e6, 8.465e6
    assert spectra.larmor_separation("13C", "29Si", 8.55) == pytest.approx((gc - gsi) * 8.55, rel=1e-3)
    assert spectra.larmor_separation("13C", "29Si", 8.55) == pytest.approx(19.1e6, rel=0.01)
    assert spectra.larmor_separation("13C", "29Si", 0.35) == pytest.approx(0.78e6, rel=0.01)


def test_endor_spectrum_area_and_peaks():
    nuclei = [EndorNucleus("29Si", -8.465e6, 1.2e6), EndorNucleus("13C", 10.7084e6, 0.6e6, 0.5)]
    grid = np.linspace(60e6, 110e6, 100001)
    spec = spectra.synthesize_endor_spectrum(nuclei, 8.55, grid, 50e3)
    assert spec.integral() == pytest.approx(1.5, rel=1e-6)
    assert spec.to_table().names == ["freq_hz", "intensity"]


@pytest.mark.parametrize(
    "kwargs",
    [dict(g=0.0), dict(g=2.0, relative_weight=-1), dict(g=2.0, linewidth=0), dict(g=2.0, lorentz_fraction=2)],
)
def test_center_validation(kwargs):
    with pytest.raises(ValueError):
        CenterDescriptor("bad", **kwargs)


def test_spectrum_axis_must_increase():
    with pytest.raises(ValueError, match="increasing"):
        spectra.Spectrum([1.0, 0.5], [0.0, 0.0])
