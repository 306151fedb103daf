"""Time the per-gate click kernels under both backends.

    python3 benchmarks/bench_kernels.py [--gates 1e7] [--repeat 3]

The first numba call compiles (or loads the on-disk cache); it is excluded.
"""
import argparse
import time

from phaseremap.montecarlo import HAVE_NUMBA, DetectorParams, SourceModel, simulate_counts


def best_time(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--gates", type=float, default=1e7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    n = int(args.gates)
    params = DetectorParams(transmittance=0.22)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'source':<14}{'backend':<8}{'gates':>12}{'seconds':>10}{'Mgates/s':>10}")
    for name, source in (("single_photon", SourceModel.single_photon()), ("weak_coherent", SourceModel.weak_coherent())):
        times = {}
        for backend in backends:
            run = lambda: simulate_counts(0.1, params, source, n, seed=1, backend=backend)  # noqa: E731
            simulate_counts(0.1, params, source, 1000, seed=1, backend=backend)  # warm-up / compile
            times[backend] = best_time(run, args.repeat)
            print(f"{name:<14}{backend:<8}{n:>12}{times[backend]:>10.3f}{n / times[backend] / 1e6:>10.1f}")
        if len(times) == 2:
            print(f"{'':<14}numpy/numba speed ratio: {times['numpy'] / times['numba']:.2f}")


if __name__ == "__main__":
    main()
