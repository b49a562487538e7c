"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Each kernel runs on inputs sized like a default run (R=20, dr=0.01, six
components); the table reports the best wall time per backend, the speedup
and the maximum relative disagreement between the two outputs.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from cusplab import _backend


def cases(n=2001, dr=0.01):
    rng = np.random.default_rng(0)
    u = rng.normal(size=n)
    mid = 0.5 * (u[:-1] + u[1:])
    init = np.array([0.3, -0.7], dtype=np.longdouble)
    inc = rng.normal(size=n - 1)
    f = np.ascontiguousarray(rng.normal(size=(6, n)))
    return {
        "rk4_linear2 forward": lambda k: k.rk4_linear2(-2.0, -3.0, u, mid, dr, init, True, 1e300),
        "rk4_linear2 backward": lambda k: k.rk4_linear2(-2.0, -3.0, u, mid, dr, init, False, 1e300),
        "exp_recurrence": lambda k: k.exp_recurrence(np.exp(-dr), inc, True),
        "fd4 (6 components)": lambda k: k.fd4(f, dr),
    }


def _flat(out):
    parts = out if isinstance(out, tuple) else (out,)
    return np.concatenate([np.ravel(np.asarray(p, dtype=float)) for p in parts
                           if np.ndim(p) or isinstance(p, np.ndarray)])


def disagreement(a, b):
    a, b = _flat(a), _flat(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20, help="timing repetitions (best is kept)")
    parser.add_argument("--json", help="also write the results to this file")
    args = parser.parse_args(argv)
    py = _backend.load("python")
    try:
        cy = _backend.load("cython")
    except ImportError:
        print("compiled kernels are not built; only the fallback can be timed", file=sys.stderr)
        cy = None
    rows = []
    for name, call in cases().items():
        row = {"kernel": name,
               "python_ms": 1e3 * min(timeit.repeat(lambda: call(py), number=1, repeat=args.repeat))}
        if cy is not None:
            row["cython_ms"] = 1e3 * min(timeit.repeat(lambda: call(cy), number=1, repeat=args.repeat))
            row["speedup"] = row["python_ms"] / row["cython_ms"]
            row["max_rel_diff"] = disagreement(call(py), call(cy))
        rows.append(row)
    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}{'max rel diff':>14}")
    for r in rows:
        print(f"{r['kernel']:<24}{r['python_ms']:>12.3f}{r.get('cython_ms', float('nan')):>12.3f}"
              f"{r.get('speedup', float('nan')):>10.1f}{r.get('max_rel_diff', float('nan')):>14.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
