"""Compare the compiled kernels with the numpy fallback.

Times each kernel on shapes taken from the two reference models, then one
forward+backward training step of each model with either backend swapped in.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from harkit import _kernels_py, kernels, layers
from harkit.models import build_convlstm, build_single_frame_cnn
from harkit.train import categorical_crossentropy, one_hot_matrix

try:
    from harkit import _kernels as _compiled
except ImportError:
    _compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    xp = rng.random((32, 66, 66, 64))
    dcols = rng.random((32 * 64 * 64, 9 * 64))
    pool_in = rng.random((32, 64, 64, 64))
    _, arg = _kernels_py.maxpool_forward(pool_in, 2, 2)
    dpool = rng.random((32, 32, 32, 64))
    z = rng.standard_normal((4, 64, 64, 16))
    c = rng.standard_normal((4, 64, 64, 4))
    act, c2, tc, _ = _kernels_py.lstm_gates_forward(z, c)
    dh = rng.standard_normal(c.shape)
    return {
        "im2col 32x66x66x64": lambda k: k.im2col(xp, 3, 3, 64, 64),
        "col2im 32x64x64 3x3x64": lambda k: k.col2im(dcols, xp.shape, 3, 3, 64, 64),
        "maxpool fwd 32x64x64x64": lambda k: k.maxpool_forward(pool_in, 2, 2),
        "maxpool bwd 32x32x32x64": lambda k: k.maxpool_backward(dpool, arg, 2, 2),
        "lstm gates fwd 4x64x64x4": lambda k: k.lstm_gates_forward(z, c),
        "lstm gates bwd 4x64x64x4": lambda k: k.lstm_gates_backward(act, c, tc, dh, dh),
    }


def train_step(model, x, y):
    probs, caches = model.forward(x, training=True, rng=np.random.default_rng(0))
    _, d = categorical_crossentropy(probs, one_hot_matrix(y, model.num_classes))
    model.backward(caches, d)


def with_backend(impl, fn):
    saved = layers.kernels
    layers.kernels = impl
    try:
        return fn()
    finally:
        layers.kernels = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"default backend: {kernels.BACKEND}")
    if _compiled is None:
        print("compiled extension not built; only the fallback can be timed")
    backends = [("python", _kernels_py)] + ([("compiled", _compiled)] if _compiled else [])

    print(f"\n{'kernel':30s}" + "".join(f"{name:>12s}" for name, _ in backends) + "     speedup")
    for label, fn in kernel_cases(rng).items():
        t = [best_of(lambda: fn(impl), args.repeat) for _, impl in backends]
        ratio = f"{t[0] / t[1]:9.2f}x" if len(t) == 2 else ""
        print(f"{label:30s}" + "".join(f"{v * 1e3:10.1f}ms" for v in t) + "  " + ratio)

    steps = {
        "cnn step, 32 frames": (build_single_frame_cnn(3, seed=0), rng.random((32, 64, 64, 3)), np.arange(32) % 3),
        "convlstm step, 4x20 frames": (build_convlstm(2, 20, seed=0), rng.random((4, 20, 64, 64, 3)),
                                       np.arange(4) % 2),
    }
    print()
    for label, (model, x, y) in steps.items():
        t = [with_backend(impl, lambda: best_of(lambda: train_step(model, x, y), max(1, args.repeat // 2)))
             for _, impl in backends]
        ratio = f"{t[0] / t[1]:9.2f}x" if len(t) == 2 else ""
        print(f"{label:30s}" + "".join(f"{v:11.2f}s" for v in t) + "  " + ratio)


if __name__ == "__main__":
    main()
