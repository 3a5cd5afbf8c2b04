"""Compare the compiled and pure-Python moment/cumulant kernels.

Run from the repository root::

    python benchmarks/bench_kernels.py [--rows 1000] [--order 12] [--repeat 5]

Each backend runs in its own interpreter so the import-time backend
selection is exercised exactly as in normal use.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from freedeconv import BACKEND, freeconv as fc
rows, order, repeat = map(int, sys.argv[1:4])
data = np.random.default_rng(0).uniform(-1, 1, (rows, order))

def single():
    for r in data:
        fc.cumulants_to_moments(fc.moments_to_cumulants(r))

def batch():
    hi, lo = fc.batch_moments_to_cumulants(data)
    fc.batch_cumulants_to_moments(hi, lo)

out = {"backend": BACKEND}
for name, fn in (("single", single), ("batch", batch)):
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
hi, lo = fc.batch_moments_to_cumulants(data)
back, _ = fc.batch_cumulants_to_moments(hi, lo)
out["max_error"] = float(np.max(np.abs(back - data)))
print(json.dumps(out))
"""


def run(pure, rows, order, repeat):
    env = dict(os.environ)
    env.pop("FREEDECONV_PURE_PYTHON", None)
    if pure:
        env["FREEDECONV_PURE_PYTHON"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(rows), str(order), str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1000)
    ap.add_argument("--order", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    results = [run(False, args.rows, args.order, args.repeat), run(True, args.rows, args.order, args.repeat)]
    print(f"roundtrip of {args.rows} sequences, K={args.order}, best of {args.repeat}")
    print(f"{'backend':<10}{'single (s)':>12}{'batch (s)':>12}{'max error':>12}")
    for r in results:
        print(f"{r['backend']:<10}{r['single']:>12.4f}{r['batch']:>12.4f}{r['max_error']:>12.1e}")
    if results[0]["backend"] == "cython":
        py, cy = results[1], results[0]
        print(f"speedup: single {py['single'] / cy['single']:.1f}x, batch {py['batch'] / cy['batch']:.1f}x")
    else:
        print("compiled kernels not built; both runs used the Python backend")


if __name__ == "__main__":
    main()
