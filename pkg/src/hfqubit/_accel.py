"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``HFQUBIT_NUMBA=0`` to force
the numpy path (numba is also skipped silently when it is not installed).
Both paths are always importable as ``*_numba`` / ``*_numpy`` so tests and the
benchmark can compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

def _env_enabled() -> bool:
    return os.environ.get("HFQUBIT_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and _env_enabled()
BACKEND = "numba" if USE_NUMBA else "numpy"

# ---------------------------------------------------------------------------
# fixed-order reduction shared by both backends


def pairwise_rows(parts: np.ndarray) -> np.ndarray:
    """Sum the rows of a 2-D array by recursive halving, in a fixed order.

    Both backends hand their per-item rows to this function, so the
    reduction order never depends on the backend or on scheduling.
    """
    n = parts.shape[0]
    if n == 0:
        return np.zeros(parts.shape[1])
    if n == 1:
        return parts[0].copy()
    half = n // 2
    return pairwise_rows(parts[:half]) + pairwise_rows(parts[half:])


# ---------------------------------------------------------------------------
# ensemble expectation: sum_s sum_jk Re[c_sjk exp(-i w_sjk t)]


@njit(cache=True)
def ensemble_signal_numba(freqs, coeff, times):
    """Per-sample rows (S, T); the j, k terms are accumulated in row-major order."""
    n_s, d = freqs.shape
    out = np.zeros((n_s, times.shape[0]))
    for s in range(n_s):
        for it in range(times.shape[0]):
            t = times[it]
            part = 0.0
            for j in range(d):
                for k in range(d):
                    c = coeff[s, j, k]
                    theta = (freqs[s, j] - freqs[s, k]) * t
                    part += c.real * math.cos(theta) + c.imag * math.sin(theta)
            out[s, it] = part
    return out


def ensemble_signal_numpy(freqs, coeff, times):
    n_s, d = freqs.shape
    omega = (freqs[:, :, None] - freqs[:, None, :]).reshape(n_s, d * d)
    c = coeff.reshape(n_s, d * d)
    out = np.zeros((n_s, times.shape[0]))
    for jk in range(d * d):
        theta = omega[:, jk, None] * times[None, :]
        out += c[:, jk, None].real * np.cos(theta) + c[:, jk, None].imag * np.sin(theta)
    return out


def ensemble_signal(freqs, coeff, times):
    """Weighted ensemble expectation of an observable versus evolution time.

    ``freqs`` (S, d) are eigenfrequencies (rad/s) of each sample's propagator,
    ``coeff[s, j, k] = w_s * rho_jk * D_kj`` in that sample's eigenbasis.
    """
    freqs = np.ascontiguousarray(freqs, dtype=np.float64)
    coeff = np.ascontiguousarray(coeff, dtype=np.complex128)
    times = np.ascontiguousarray(times, dtype=np.float64)
    kernel = ensemble_signal_numba if USE_NUMBA else ensemble_signal_numpy
    return pairwise_rows(kernel(freqs, coeff, times))


# ---------------------------------------------------------------------------
# pseudo-Voigt line accumulation (area-normalised, FWHM parameterised)

_GAUSS_NORM = math.sqrt(4.0 * math.log(2.0) / math.pi)
_FOUR_LN2 = 4.0 * math.log(2.0)


@njit(cache=True)
def pseudo_voigt_sum_numba(grid, centers, fwhm, weights, eta, derivative):
    """Weighted line rows (L, G)."""
    out = np.zeros((centers.shape[0], grid.shape[0]))
    g_norm = math.sqrt(4.0 * math.log(2.0) / math.pi)
    four_ln2 = 4.0 * math.log(2.0)
    for m in range(centers.shape[0]):
        w = fwhm[m]
        x0 = centers[m]
        amp = weights[m]
        e = eta[m]
        for i in range(grid.shape[0]):
            x = grid[i] - x0
            u = x / w
            gauss = g_norm / w * math.exp(-four_ln2 * u * u)
            lor_den = 1.0 + 4.0 * u * u
            lor = 2.0 / (math.pi * w) / lor_den
            if derivative:
                dg = gauss * (-2.0 * four_ln2 * x / (w * w))
                dl = lor * (-8.0 * x / (w * w)) / lor_den
                out[m, i] = amp * ((1.0 - e) * dg + e * dl)
            else:
                out[m, i] = amp * ((1.0 - e) * gauss + e * lor)
    return out


def pseudo_voigt_sum_numpy(grid, centers, fwhm, weights, eta, derivative):
    x = grid[None, :] - centers[:, None]
    w = fwhm[:, None]
    u = x / w
    gauss = _GAUSS_NORM / w * np.exp(-_FOUR_LN2 * u * u)
    lor_den = 1.0 + 4.0 * u * u
    lor = 2.0 / (np.pi * w) / lor_den
    e = eta[:, None]
    if derivative:
        dg = gauss * (-2.0 * _FOUR_LN2 * x / (w * w))
        dl = lor * (-8.0 * x / (w * w)) / lor_den
        lines = (1.0 - e) * dg + e * dl
    else:
        lines = (1.0 - e) * gauss + e * lor
    return weights[:, None] * lines


def pseudo_voigt_sum(grid, centers, fwhm, weights, eta, derivative=False):
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (grid, centers, fwhm, weights, eta)]
    kernel = pseudo_voigt_sum_numba if USE_NUMBA else pseudo_voigt_sum_numpy
    return pairwise_rows(kernel(*args, bool(derivative)))


# ---------------------------------------------------------------------------
# fixed-step RK4 for dp/dt = R p (independent of the matrix-exponential route)


@njit(cache=True)
def rk4_linear_numba(rate, p0, dt, n_steps):
    p = p0.copy()
    for _ in range(n_steps):
        k1 = rate @ p
        k2 = rate @ (p + 0.5 * dt * k1)
        k3 = rate @ (p + 0.5 * dt * k2)
        k4 = rate @ (p + dt * k3)
        p = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p


def rk4_linear_numpy(rate, p0, dt, n_steps):
    p = p0.copy()
    for _ in range(n_steps):
        k1 = rate @ p
        k2 = rate @ (p + 0.5 * dt * k1)
        k3 = rate @ (p + 0.5 * dt * k2)
        k4 = rate @ (p + dt * k3)
        p = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p


def rk4_linear(rate, p0, dt, n_steps):
    rate = np.ascontiguousarray(rate, dtype=np.float64)
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    if USE_NUMBA:
        return rk4_linear_numba(rate, p0, float(dt), int(n_steps))
    return rk4_linear_numpy(rate, p0, float(dt), int(n_steps))
