import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfqubit import _accel
from hfqubit.results import ResultTable

seeds = st.integers(0, 2**31)


@settings(max_examples=30)
@given(seeds, st.integers(1, 6), st.integers(2, 4))
def test_ensemble_signal_backends_agree(seed, n_samples, dim):
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(-1e7, 1e7, (n_samples, dim))
    coeff = rng.standard_normal((n_samples, dim, dim)) + 1j * rng.standard_normal((n_samples, dim, dim))
    times = np.linspace(0, 1e-5, 300)
    a = _accel.ensemble_signal_numba(freqs, coeff, times)
    b = _accel.ensemble_signal_numpy(freqs, coeff, times)
    assert a.shape == (n_samples, times.size)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(coeff).sum())


def test_ensemble_signal_matches_direct_sum():
    rng = np.random.default_rng(3)
    freqs = rng.uniform(-1e6, 1e6, (5, 3))
    coeff = rng.standard_normal((5, 3, 3)) + 1j * rng.standard_normal((5, 3, 3))
    times = np.linspace(0, 1e-5, 50)
    phase = np.exp(-1j * (freqs[:, :, None, None] - freqs[:, None, :, None]) * times)
    direct = np.real(np.einsum("sjk,sjkt->t", coeff, phase))
    assert np.allclose(_accel.ensemble_signal(freqs, coeff, times), direct, rtol=1e-10, atol=1e-10)


@settings(max_examples=30)
@given(seeds, st.integers(1, 20), st.booleans())
def test_pseudo_voigt_backends_agree(seed, n_lines, derivative):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, 500)
    centers = rng.uniform(0.2, 0.8, n_lines)
    fwhm = rng.uniform(0.01, 0.1, n_lines)
    weights = rng.uniform(0, 1, n_lines)
    eta = rng.uniform(0, 1, n_lines)
    a = _accel.pseudo_voigt_sum_numba(grid, centers, fwhm, weights, eta, derivative)
    b = _accel.pseudo_voigt_sum_numpy(grid, centers, fwhm, weights, eta, derivative)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


@given(st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=40))
def test_pairwise_reduction_is_a_sum(values):
    rows = np.array(values, float).reshape(-1, 1)
    assert _accel.pairwise_rows(rows)[0] == pytest.approx(sum(values), abs=1e-6)


def test_pseudo_voigt_gaussian_limit_matches_scipy():
    from scipy.stats import norm

    grid = np.linspace(-1, 1, 2001)
    fwhm = 0.2
    sd = fwhm / (2 * np.sqrt(2 * np.log(2)))
    got = _accel.pseudo_voigt_sum(grid, [0.1], [fwhm], [2.0], [0.0])
    assert np.allclose(got, 2.0 * norm.pdf(grid, 0.1, sd), rtol=1e-12)


def test_pseudo_voigt_lorentzian_limit_matches_scipy():
    from scipy.stats import cauchy

    grid = np.linspace(-1, 1, 2001)
    got = _accel.pseudo_voigt_sum(grid, [0.0], [0.2], [1.0], [1.0])
    assert np.allclose(got, cauchy.pdf(grid, 0.0, 0.1), rtol=1e-12)


@given(seeds)
def test_rk4_backends_agree_exactly(seed):
    rng = np.random.default_rng(seed)
    rate = rng.uniform(0, 1, (4, 4))
    np.fill_diagonal(rate, 0)
    rate -= np.diag(rate.sum(axis=0))
    p0 = rng.dirichlet(np.ones(4))
    a = _accel.rk4_linear_numba(rate, p0, 0.01, 100)
    b = _accel.rk4_linear_numpy(rate, p0, 0.01, 100)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-16)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)


def _subprocess(code, numba):
    env = {**os.environ, "HFQUBIT_NUMBA": numba}
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return proc.stdout


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_environment_flag_selects_backend(flag, expected):
    assert _subprocess("import hfqubit; print(hfqubit.BACKEND)", flag).strip() == expected


KERNEL_PRESETS = ["fig1-spectrum-336ghz", "fig2-endor-240ghz", "fig4a-pump", "fig5-edmr", "fig5-epr"]

RUN_PRESETS = """
import json, sys
from hfqubit.config import preset_config
from hfqubit.runner import compute
print(json.dumps({n: compute(preset_config(n)).to_csv() for n in sys.argv[1:]}))
"""


def _values(text):
    table = ResultTable.from_csv(text)
    return {k: v for k, v in table.columns.items() if v.dtype.kind == "f"}, table.metadata


def test_preset_outputs_agree_across_backends():
    # same reduction order on both paths; only libm vs SIMD exp/cos may differ by an ulp
    code = RUN_PRESETS.replace("sys.argv[1:]", repr(KERNEL_PRESETS))
    fast = json.loads(_subprocess(code, "1"))
    slow = json.loads(_subprocess(code, "0"))
    for name in KERNEL_PRESETS:
        (a, meta_a), (b, meta_b) = _values(fast[name]), _values(slow[name])
        assert meta_a.keys() == meta_b.keys() and meta_a["config_hash"] == meta_b["config_hash"], name
        for col in a:
            scale = np.abs(b[col]).max()
            assert np.allclose(a[col], b[col], rtol=1e-10, atol=1e-10 * scale), (name, col)
