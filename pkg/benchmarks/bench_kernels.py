"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once first so numba compilation is not timed. The
script also checks that both paths agree before reporting a speed-up.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from hfqubit import _accel
from hfqubit.dnp import build_dnp_rate_matrix, boltzmann_populations, epr_line, si_p_system


def _ensemble_case(rng):
    n_s, d, n_t = 256, 4, 1201
    freqs = rng.normal(0.0, 5e6, (n_s, d))
    coeff = rng.normal(size=(n_s, d, d)) + 1j * rng.normal(size=(n_s, d, d))
    times = np.linspace(0.0, 30e-6, n_t)
    return (freqs, coeff, times)


def _voigt_case(rng):
    grid = np.linspace(0.34, 0.35, 8001)
    n = 60
    return (grid, rng.uniform(0.341, 0.349, n), np.full(n, 2e-5), rng.uniform(0.1, 1.0, n), rng.uniform(0, 1, n), True)


def _rk4_case(_rng):
    sys = si_p_system(w_e=10.0)
    rate = build_dnp_rate_matrix(sys, [epr_line(sys, "high", 1e3)])
    return (rate, boltzmann_populations(sys), 1e-5, 20000)


CASES = {
    "ensemble_signal": _ensemble_case,
    "pseudo_voigt_sum": _voigt_case,
    "rk4_linear": _rk4_case,
}


def bench(repeat: int) -> list[tuple[str, float, float, float]]:
    rng = np.random.default_rng(0)
    rows = []
    for name, make in CASES.items():
        args = make(rng)
        fast = getattr(_accel, f"{name}_numba")
        slow = getattr(_accel, f"{name}_numpy")
        a, b = fast(*args), slow(*args)  # warm-up / JIT compile
        err = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        t_fast = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
        t_slow = min(timeit.repeat(lambda: slow(*args), number=1, repeat=repeat))
        rows.append((name, t_fast, t_slow, err))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; both columns time the numpy path")
    print(f"{'kernel':<18} {'numba [ms]':>11} {'numpy [ms]':>11} {'speed-up':>9} {'max rel diff':>13}")
    for name, tf, ts, err in bench(args.repeat):
        print(f"{name:<18} {tf * 1e3:11.3f} {ts * 1e3:11.3f} {ts / tf:9.1f} {err:13.2e}")


if __name__ == "__main__":
    main()
