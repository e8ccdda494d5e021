"""Compare the compiled kernel extension against the numpy fallback.

Times the two hot kernels (diagonal SSM scan, Jacobi symmetric eigensolver)
on representative shapes and prints the median per-call time for each
backend plus the speedup. Run from the repo root:

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from chorekit._kernels import _ref

try:
    from chorekit._kernels import _core
except ImportError:
    _core = None


def _median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _scan_case(rng, t, d, n):
    abar = np.exp(-rng.uniform(0.05, 1.0, (t, d, n)))
    bx = rng.standard_normal((t, d, n))
    c = rng.standard_normal((t, n))
    return abar, bx, c


def _eigh_case(rng, n):
    root = rng.standard_normal((n, n))
    return (root @ root.T + 1e-3 * np.eye(n),)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repeats per case (median reported)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = [
        ("ssm_scan T=90  D=128  N=8", "ssm_scan", _scan_case(rng, 90, 128, 8)),
        ("ssm_scan T=360 D=1024 N=16", "ssm_scan", _scan_case(rng, 360, 1024, 16)),
        ("jacobi_eigh n=64", "jacobi_eigh", _eigh_case(rng, 64)),
        ("jacobi_eigh n=147", "jacobi_eigh", _eigh_case(rng, 147)),
    ]

    if _core is None:
        print("compiled extension not importable; timing the fallback only")

    header = f"{'case':<28} {'fallback':>12} {'compiled':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, fn_name, case_args in cases:
        ref_t = _median_time(getattr(_ref, fn_name), case_args, args.repeats)
        if _core is None:
            print(f"{label:<28} {ref_t * 1e3:>10.2f}ms {'-':>12} {'-':>9}")
            continue
        core_t = _median_time(getattr(_core, fn_name), case_args, args.repeats)
        ref_out = getattr(_ref, fn_name)(*case_args)
        core_out = getattr(_core, fn_name)(*case_args)
        if fn_name == "jacobi_eigh":
            agree = all(np.allclose(r, c, atol=1e-10)
                        for r, c in zip(ref_out, core_out))
        else:
            agree = np.allclose(ref_out, core_out, atol=1e-10)
        flag = "" if agree else "  (MISMATCH)"
        print(f"{label:<28} {ref_t * 1e3:>10.2f}ms {core_t * 1e3:>10.2f}ms "
              f"{ref_t / core_t:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
