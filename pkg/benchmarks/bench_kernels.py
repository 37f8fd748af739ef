"""Compare the compiled and pure-Python eigen kernels.

    python3 benchmarks/bench_kernels.py [--batch 2000] [--dim 16] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dicert import _backend, _pykernels


def _stack(batch: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(batch, dim, dim))
    b = rng.normal(size=(batch, dim, dim))
    return (a + a.transpose(0, 2, 1)) / 2, (b + b.transpose(0, 2, 1)) / 2


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--mus", type=int, default=48)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ms, bs = _stack(args.batch, args.dim, args.seed)
    mus = np.geomspace(1e-2, 512, args.mus)
    kernels = {"python": _pykernels}
    if _backend.compiled_available():
        from dicert import _ckernels
        kernels["compiled"] = _ckernels
    ref = np.linalg.eigvalsh(ms)[:, 0]
    print(f"batch={args.batch} dim={args.dim} mus={args.mus}")
    print(f"{'backend':<10}{'lambda_min_batch [s]':>22}{'pencil [s]':>14}{'max |err|':>12}")
    times = {}
    for name, k in kernels.items():
        t1 = _time(lambda: k.lambda_min_batch(ms), args.repeat)
        small = max(1, args.batch // 10)
        t2 = _time(lambda: k.pencil_lambda_min(ms[:small], bs[:small], mus), 1)
        err = float(np.max(np.abs(np.asarray(k.lambda_min_batch(ms)) - ref)))
        times[name] = t1
        print(f"{name:<10}{t1:>22.4f}{t2:>14.4f}{err:>12.2e}")
    if "compiled" in times:
        print(f"speed-up (lambda_min_batch): {times['python'] / times['compiled']:.1f}x")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
