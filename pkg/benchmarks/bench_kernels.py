"""Time the compiled relevance kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 64 128 256 400] [--repeat 5]
"""
import argparse
import time

import numpy as np

from ctxattr import kernels
from ctxattr.model import ModelConfig, forward_trace, random_weights


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 400])
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--d-head", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = ["python"] + (["compiled"] if kernels._compiled is not None else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the numpy fallback only")
    cfg = ModelConfig(num_layers=1, num_heads=args.heads, d_model=args.heads * args.d_head,
                      d_head=args.d_head, d_ff=4 * args.heads * args.d_head, vocab_size=258,
                      max_seq_len=max(args.sizes))
    w = random_weights(cfg, 0)
    print(f"H={args.heads} d_model={cfg.d_model}, best of {args.repeat}")
    print(f"{'n':>6}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for n in args.sizes:
        _, trace = forward_trace(w, np.random.default_rng(n).integers(0, 256, size=n))
        lt = trace.layers[0]
        call = (lt.attn, lt.head_values, lt.residual, lt.outputs)
        results = {b: kernels.alti_relevance(*call, backend=b) for b in backends}
        if len(backends) == 2:
            assert np.allclose(results["python"], results["compiled"], rtol=1e-10, atol=1e-12)
        t = {b: best_of(lambda: kernels.alti_relevance(*call, backend=b), args.repeat) for b in backends}
        line = f"{n:>6}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{t['python'] / t['compiled']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
