"""Time the compiled integration kernels against the pure-numpy fallback.

Runs the same decay cascades through both backend modules directly (no
subprocesses, no env vars) and prints a small table.  Typical output on one
core shows the compiled trapezoid kernel 30-100x ahead, growing with ladder
size because the numpy fallback pays per-step array overhead.

Usage: python3 benchmarks/compare_backends.py [--sizes 1000 10000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from decayladder import CloudConfig, PhysicalParams, sample_rates
from decayladder._kernels import _ladder_py

try:
    from decayladder._kernels import _ladder_cy
except ImportError:
    _ladder_cy = None

PHYS = PhysicalParams()


def make_case(n_exc, seed):
    cloud = CloudConfig(n_total=2 * n_exc, f_exc=0.5,
                        radius=40.0 * np.sqrt(n_exc / 100.0) / PHYS.kappa_a,
                        xi=1.0)
    rng = np.random.Generator(np.random.Philox(key=seed))
    rates = sample_rates(cloud, PHYS, rng).rates
    rho0 = np.zeros(rates.size)
    rho0[-1] = 1.0
    times = np.linspace(0.0, 9.0 * PHYS.tau_a, 181)
    return rates, rho0, times


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1000, 10_000, 100_000],
                        help="ladder sizes n_exc for the trapezoid kernel")
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions (best is reported)")
    args = parser.parse_args()

    if _ladder_cy is None:
        print("compiled kernels unavailable; timing the numpy fallback only")

    header = f"{'kernel':<22}{'n_exc':>9}{'numpy':>12}{'cython':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))

    for n_exc in args.sizes:
        rates, rho0, times = make_case(n_exc, seed=1234)
        t_py, (e_py, _, _, _) = best_of(args.repeat, lambda: _ladder_py.run_trapezoid(
            rates, rho0.copy(), times, 1e-6, 1e-14, False))
        if _ladder_cy is not None:
            t_cy, (e_cy, _, _, _) = best_of(args.repeat, lambda: _ladder_cy.run_trapezoid(
                rates, rho0.copy(), times, 1e-6, 1e-14, False))
            drift = np.max(np.abs(e_cy - e_py)) / e_py[0]
            assert drift < 1e-6, f"backends disagree: {drift:.2e}"
            print(f"{'trapezoid (tol 1e-6)':<22}{n_exc:>9}{t_py:>11.3f}s"
                  f"{t_cy:>11.3f}s{t_py / t_cy:>8.1f}x")
        else:
            print(f"{'trapezoid (tol 1e-6)':<22}{n_exc:>9}{t_py:>11.3f}s{'-':>12}{'-':>9}")

    rates, rho0, times = make_case(100, seed=99)
    dt = 0.1 / rates.max()
    t_py, (e_py, _, _, _) = best_of(args.repeat, lambda: _ladder_py.run_rk4(
        rates, rho0.copy(), times, dt, False))
    if _ladder_cy is not None:
        t_cy, (e_cy, _, _, _) = best_of(args.repeat, lambda: _ladder_cy.run_rk4(
            rates, rho0.copy(), times, dt, False))
        drift = np.max(np.abs(e_cy - e_py)) / e_py[0]
        assert drift < 1e-9, f"backends disagree: {drift:.2e}"
        print(f"{'rk4 (dt 0.1/maxG)':<22}{100:>9}{t_py:>11.3f}s"
              f"{t_cy:>11.3f}s{t_py / t_cy:>8.1f}x")
    else:
        print(f"{'rk4 (dt 0.1/maxG)':<22}{100:>9}{t_py:>11.3f}s{'-':>12}{'-':>9}")


if __name__ == "__main__":
    main()
