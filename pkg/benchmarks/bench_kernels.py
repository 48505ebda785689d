"""Benchmark the numba kernels against their pure-numpy fallbacks.

Times each hot kernel on both backends and a full deterministic DDIM
trajectory end to end. The first numba call includes JIT compilation and is
excluded via warmup. Run:

    python benchmarks/bench_kernels.py --size 256 --repeats 200
"""

import argparse
import time

import numpy as np

from astn import _kernels as k
from astn.denoiser import GaussianDataModel, GaussianOracle
from astn.metrics import _gaussian_window
from astn.samplers import SamplerSpec, run_sampler
from astn.schedule import make_linear_schedule, make_timestep_grid


def bench(fn, args, repeats):
    fn(*args)  # warmup / JIT
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    if not k.NUMBA_ENABLED:
        print("numba backend unavailable (disabled or not installed); nothing to compare")
        return

    rng = np.random.default_rng(0)
    a = rng.random((args.size, args.size))
    b = rng.random((args.size, args.size))
    c = rng.random((args.size, args.size))
    win = _gaussian_window(11, 1.5)
    ells = np.array([[0.1, -0.2, 4.0, 2.5, 0.8, 0.6, 0.3]] * 8)

    cases = [
        ("lincomb2", k._numba_lincomb2, k._numpy_lincomb2, (0.7, a, 0.3, b)),
        ("lincomb3", k._numba_lincomb3, k._numpy_lincomb3, (0.7, a, 0.2, b, 0.1, c)),
        ("ssim_map", k._numba_ssim_map, k._numpy_ssim_map, (a, b, win, 1e-4, 9e-4)),
        ("add_ellipses", k._numba_add_ellipses, k._numpy_add_ellipses, (a, ells)),
    ]
    print(f"array size {args.size}x{args.size}, {args.repeats} repeats")
    print(f"{'kernel':<14} {'numba':>12} {'numpy':>12} {'speedup':>9}  agreement")
    for name, jit_fn, np_fn, fn_args in cases:
        tj = bench(jit_fn, fn_args, args.repeats)
        tn = bench(np_fn, fn_args, args.repeats)
        out_j, out_n = jit_fn(*fn_args), np_fn(*fn_args)
        diff = float(np.abs(out_j - out_n).max())
        tag = "bitwise" if diff == 0.0 else f"max|diff|={diff:.1e}"
        print(f"{name:<14} {tj * 1e6:>10.1f}us {tn * 1e6:>10.1f}us {tn / tj:>8.2f}x  {tag}")

    # end-to-end: deterministic DDIM trajectory (kernels selected at import,
    # so this reflects whichever backend ASTN_DISABLE_NUMBA picked)
    sched = make_linear_schedule(1000)
    model = GaussianDataModel(mean=np.full((args.size, args.size), 0.4), var=0.25)
    pred = GaussianOracle(model, sched)
    spec = SamplerSpec(kind="ddim", grid=make_timestep_grid(1000, 150, 1000))
    x = rng.standard_normal((args.size, args.size))
    run_sampler(spec, x, pred, None, sched)  # warmup
    t0 = time.perf_counter()
    run_sampler(spec, x, pred, None, sched)
    print(f"\nddim 150-step trajectory [{k.active_backend()} backend]: "
          f"{time.perf_counter() - t0:.3f}s")


if __name__ == "__main__":
    main()
