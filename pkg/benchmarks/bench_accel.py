"""Wall-clock comparison of the JIT kernels against the numpy fallbacks.

The package selects the fallback path when URBAN_ACOUSTICS_NO_NUMBA is set,
so this script runs each kernel in both modes by re-importing the module in
a subprocess. Usage:

    python3 benchmarks/bench_accel.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKER = textwrap.dedent("""
    import json, sys, time
    import numpy as np

    from urban_acoustics import accel
    from urban_acoustics.fourier import fft_batch
    from urban_acoustics.layers import conv2d_backward, conv2d_forward

    repeat = int(sys.argv[1])
    rng = np.random.default_rng(0)

    # shapes mirror the third conv stage, the hottest in training
    x32 = rng.standard_normal((4, 64, 35, 172)).astype(np.float32)
    w32 = rng.standard_normal((128, 64, 5, 5)).astype(np.float32)
    b32 = rng.standard_normal(128).astype(np.float32)
    x64 = x32[:2].astype(np.float64)
    w64 = w32.astype(np.float64)
    b64 = b32.astype(np.float64)
    g32 = rng.standard_normal((4, 128, 35, 172)).astype(np.float32)
    frames = rng.standard_normal((345, 1024))

    def timed(fn, *args):
        fn(*args)  # warm-up includes any JIT compile
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn(*args)
            best = min(best, time.perf_counter() - t0)
        return best

    out = {
        "mode": "numpy" if not accel.NUMBA_ENABLED else "numba",
        "conv_fwd_f32": timed(conv2d_forward, x32, w32, b32, (1, 1), (2, 2)),
        "conv_bwd_f32": timed(conv2d_backward, g32, x32, w32, (1, 1), (2, 2)),
        "conv_fwd_f64": timed(conv2d_forward, x64, w64, b64, (1, 1), (2, 2)),
        "fft_345x1024": timed(fft_batch, frames),
    }
    print(json.dumps(out))
""")


def run_mode(no_numba, repeat):
    env = dict(os.environ)
    if no_numba:
        env["URBAN_ACOUSTICS_NO_NUMBA"] = "1"
    else:
        env.pop("URBAN_ACOUSTICS_NO_NUMBA", None)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.splitlines()[-1])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed repetitions per kernel (best-of)")
    args = parser.parse_args()

    results = [run_mode(no_numba=False, repeat=args.repeat),
               run_mode(no_numba=True, repeat=args.repeat)]
    keys = [k for k in results[0] if k != "mode"]

    print(f"{'kernel':<16s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for key in keys:
        jit, plain = results[0][key], results[1][key]
        print(f"{key:<16s} {jit * 1e3:>8.1f}ms {plain * 1e3:>8.1f}ms "
              f"{plain / jit:>7.2f}x")


if __name__ == "__main__":
    main()
