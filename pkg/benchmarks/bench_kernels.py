#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-NumPy fallback.

Times each hot kernel under both implementations, then the end-to-end
candidate evaluation (composite + downscale + CNN forward) under the pure
fallback and the package's selected routing. The measurements behind the
routing in stickerforge._kernels: convolution stays on the im2col + BLAS
path, everything else goes to the extension when built.

Run after `python setup.py build_ext --inplace` (or an editable install).
"""

import time

import numpy as np

from stickerforge import _kernels
from stickerforge._kernels import pure

try:
    from stickerforge._kernels import _core as compiled
except ImportError:
    compiled = None

from stickerforge.victim.cnn import default_architecture, init_params

FRAME = 256
INPUT = 32


def timeit(fn, repeats=500):
    fn()  # warm up
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats // 5):
            fn()
        best = min(best, (time.perf_counter() - start) / (repeats // 5))
    return best


def forward(kernels, params, arch, x):
    a = x
    for i, layer in enumerate(arch.conv_layers, start=1):
        a = kernels.conv2d_valid(a, params[f"conv{i}.weight"],
                                 params[f"conv{i}.bias"], layer.stride)
        np.maximum(a, 0.0, out=a)
        if layer.pool:
            a = kernels.maxpool2(a)
    f = a.reshape(-1)
    return params["output.weight"] @ f + params["output.bias"]


def candidate_eval(kernels, canon, rects, params, arch):
    small = kernels.composite_resize_rgb8(canon, rects, INPUT, INPUT)
    xin = np.ascontiguousarray(
        small.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))
    forward(kernels, params, arch, xin)


def main():
    rng = np.random.default_rng(0)
    canon = rng.integers(0, 256, size=(FRAME, FRAME, 3), dtype=np.uint8)
    rects = np.array([[70, 70, 160, 150, 0]], dtype=np.int64)
    arch = default_architecture(5)
    params = init_params(arch, rng)
    conv_in = rng.random((16, 14, 14)).astype(np.float32)
    pool_in = rng.random((16, 28, 28)).astype(np.float32)

    kernels = {
        "composite+resize 256->32": lambda impl: impl.composite_resize_rgb8(
            canon, rects, INPUT, INPUT),
        "conv 16ch 14x14 -> 32ch": lambda impl: impl.conv2d_valid(
            conv_in, params["conv2.weight"], params["conv2.bias"], 1),
        "maxpool 16x28x28": lambda impl: impl.maxpool2(pool_in),
    }

    print(f"{'kernel':<28} {'python':>10} {'compiled':>10}")
    print("-" * 50)
    for name, call in kernels.items():
        t_pure = timeit(lambda: call(pure)) * 1e6
        if compiled is not None:
            t_c = timeit(lambda: call(compiled)) * 1e6
            print(f"{name:<28} {t_pure:>8.0f}us {t_c:>8.0f}us")
        else:
            print(f"{name:<28} {t_pure:>8.0f}us {'n/a':>10}")

    t_fallback = timeit(lambda: candidate_eval(pure, canon, rects, params, arch))
    t_selected = timeit(lambda: candidate_eval(_kernels, canon, rects, params, arch))
    print(f"\nper-candidate composite+forward, pure fallback: "
          f"{t_fallback * 1e6:.0f}us ({1 / t_fallback:.0f} cand/s)")
    print(f"per-candidate composite+forward, selected ({_kernels.BACKEND}): "
          f"{t_selected * 1e6:.0f}us ({1 / t_selected:.0f} cand/s)")
    if _kernels.BACKEND == "c":
        print(f"speedup: {t_fallback / t_selected:.1f}x")


if __name__ == "__main__":
    main()
