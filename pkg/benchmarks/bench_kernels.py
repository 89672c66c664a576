"""Benchmark the compiled kernels against the pure-numpy fallback.

Run from the repo root after an editable install:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --batch 64 --size 28 --repeats 30

Each op runs on identical inputs through both backends; the report shows the
median wall time per call and the speedup of the compiled path. Output
agreement on the float32 path is asserted bit for bit.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from fedforget.nn.backend import get_kernels


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _cases(batch: int, size: int, seed: int):
    rng = np.random.default_rng(seed)
    f32 = lambda *shape: rng.standard_normal(shape).astype(np.float32)
    for cin, cout, k in ((1, 8, 3), (8, 16, 3)):
        x = f32(batch, cin, size, size)
        w = f32(cout, cin, k, k)
        bias = f32(cout)
        out_hw = size - k + 1
        dout = f32(batch, cout, out_hw, out_hw)
        yield f"conv2d_forward  {cin:>2}->{cout:<2} k{k}", "conv2d_forward", (x, w, bias)
        yield f"conv2d_backward {cin:>2}->{cout:<2} k{k}", "conv2d_backward", (x, w, dout)
        size = out_hw  # feed the next conv a plausibly shaped input
    xp = f32(batch, 16, 24, 24)
    yield "maxpool2_forward 16ch 24x24", "maxpool2_forward", (xp,)
    _, arg = get_kernels("python").maxpool2_forward(xp)
    dp = f32(batch, 16, 12, 12)
    yield "maxpool2_backward 16ch", "maxpool2_backward", (xp.shape, arg, dp)


def _first_array(result):
    return result[0] if isinstance(result, tuple) else result


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--size", type=int, default=28, help="input image side")
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    py = get_kernels("python")
    try:
        cy = get_kernels("cython")
    except ImportError:
        print("compiled backend not available; build it with pip install -e .")
        return 1

    print(f"batch={args.batch} size={args.size} repeats={args.repeats}")
    print(f"{'op':<32}{'python':>12}{'cython':>12}{'speedup':>10}")
    for label, op, inputs in _cases(args.batch, args.size, args.seed):
        ref = _first_array(getattr(py, op)(*inputs))
        got = _first_array(getattr(cy, op)(*inputs))
        if ref.dtype == np.float32 and ref.tobytes() != got.tobytes():
            raise AssertionError(f"{op}: backends disagree on float32 output")
        t_py = _time(lambda: getattr(py, op)(*inputs), args.repeats)
        t_cy = _time(lambda: getattr(cy, op)(*inputs), args.repeats)
        print(f"{label:<32}{t_py * 1e3:>10.3f}ms{t_cy * 1e3:>10.3f}ms{t_py / t_cy:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
