"""Benchmark the compiled propagation kernel against the NumPy fallback.

Runs the century-scale ensemble propagation that dominates every experiment
and the tipping sweep, twice per backend, and reports timings plus the
bitwise agreement of the results.

    python benchmarks/kernel_benchmark.py [--members 100] [--months 1200] [--repeats 3]
"""

import argparse
import time

import numpy as np

from stommelbox import _kernels, core, defaults


def workload(members, rng):
    base = defaults.initial_state().as_array()
    states = base[None, :] + rng.normal(0.0, [0.5, 0.3, 0.07, 0.07], (members, 4))
    p = defaults.params()
    kT = p.kT * np.exp(rng.normal(0, 0.26, members))
    kS = p.kS * np.exp(rng.normal(0, 0.26, members))
    gm = p.gamma * np.exp(rng.normal(0, 0.26, members))
    scen = defaults.scenario(enabled=True, warm_e=0.07, warm_p=0.14, melt_period_yr=1000.0)
    args = core._kernel_args(defaults.context(scenario_override=scen))
    return states, kT, kS, gm, args


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--members", type=int, default=100)
    parser.add_argument("--months", type=int, default=1200)
    parser.add_argument("--repeats", type=int, default=3)
    opts = parser.parse_args()

    rng = np.random.default_rng(0)
    states, kT, kS, gm, args = workload(opts.members, rng)

    backends = {"reference": _kernels.get_impl("reference")}
    try:
        backends["compiled"] = _kernels.get_impl("compiled")
    except ImportError:
        print("compiled kernel not built; benchmarking the fallback only")

    results = {}
    timings = {}
    for name, impl in backends.items():
        best = float("inf")
        for _ in range(opts.repeats):
            t0 = time.perf_counter()
            out = _kernels.propagate_ensemble(
                states, kT, kS, gm, 0.0, core.MONTH_SECONDS, opts.months, args, impl=impl
            )
            best = min(best, time.perf_counter() - t0)
        results[name] = out
        timings[name] = best

    member_steps = opts.members * opts.months
    print(f"\nensemble propagation: {opts.members} members x {opts.months} monthly RK4 steps")
    print(f"{'backend':<12} {'best time':>12} {'member-steps/s':>16}")
    for name, t in timings.items():
        print(f"{name:<12} {t:>11.4f}s {member_steps / t:>16.3g}")
    if len(timings) == 2:
        print(f"\nspeedup: {timings['reference'] / timings['compiled']:.1f}x")
        same = np.array_equal(results["reference"], results["compiled"])
        print(f"bitwise identical results: {same}")


if __name__ == "__main__":
    main()
