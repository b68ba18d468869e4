import math
import re
from pathlib import Path

import pytest
import scipy.constants as sc

from hfqubit import constants as C

SRC = Path(C.__file__).parent


def test_exact_si_constants_match_scipy():
    assert C.PLANCK_H == sc.h
    assert C.BOLTZMANN_K == sc.k
    assert C.SPEED_OF_LIGHT == sc.c


@pytest.mark.parametrize(
    "ours, key",
    [
        (C.BOHR_MAGNETON, "Bohr magneton"),
        (C.NUCLEAR_MAGNETON, "nuclear magneton"),
        (-C.FREE_ELECTRON_G, "electron g factor"),
    ],
)
def test_measured_constants_agree_with_scipy_table(ours, key):
    # scipy may ship a newer CODATA release; agreement to 1e-8 is what matters
    assert ours == pytest.approx(sc.physical_constants[key][0], rel=1e-8)


def test_signs_of_gyromagnetic_ratios():
    assert C.isotope("29Si").gamma_hz_per_t < 0
    for name in ("1H", "13C", "31P", "14N"):
        assert C.isotope(name).gamma_hz_per_t > 0


def test_proton_gamma_from_magnetic_moment():
    gamma = sc.physical_constants["proton gyromag. ratio in MHz/T"][0] * 1e6
    assert C.isotope("1H").gamma_hz_per_t == pytest.approx(gamma, rel=1e-8)


def test_isotope_table_is_read_only():
    with pytest.raises(TypeError):
        C.ISOTOPES["2H"] = C.Isotope(1, 6.5e6)


def test_unknown_isotope():
    with pytest.raises(ValueError, match="99X"):
        C.isotope("99X")


def test_unit_conversions():
    assert C.hz_to_kelvin(240e9) == pytest.approx(sc.h * 240e9 / sc.k, rel=1e-15)
    assert C.hz_to_kelvin(240e9) == pytest.approx(11.518, abs=1e-3)
    assert C.wavenumber_to_kelvin(50.0) == pytest.approx(sc.h * sc.c * 5000.0 / sc.k, rel=1e-15)
    assert C.wavenumber_to_kelvin(50.0) == pytest.approx(71.94, abs=0.01)
    assert C.kelvin_to_wavenumber(C.wavenumber_to_kelvin(17.0)) == pytest.approx(17.0, rel=1e-14)
    assert C.kelvin_to_hz(C.hz_to_kelvin(9.7e9)) == pytest.approx(9.7e9, rel=1e-14)


def test_resonant_field_round_trip():
    b = C.resonant_field(2.0023, 9.7e9)
    assert b == pytest.approx(0.34612, abs=1e-5)
    assert C.electron_larmor_hz(2.0023, b) == pytest.approx(9.7e9, rel=1e-14)


def test_no_duplicated_constant_literals():
    pattern = re.compile(r"6\.626|1\.3806|9\.274|5\.0507|2\.0023193")
    offenders = [
        p.name for p in SRC.rglob("*.py") if p.name != "constants.py" and pattern.search(p.read_text())
    ]
    assert offenders == []
