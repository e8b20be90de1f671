"""Time the pure and compiled kernel backends on representative inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from casmlab import _kernels


def cases(rng):
    x = rng.normal(size=(32, 16, 32, 32))
    cols = _kernels.pure.im2col(x, 3, 3, 1)
    binary = rng.random((64, 64)) < 0.5
    img = rng.random((3, 32, 32))
    mask = np.zeros((32, 32), dtype=np.uint8)
    mask[8:24, 6:22] = 1
    return {
        "im2col 32x16x32x32 k3": lambda k: k.im2col(x, 3, 3, 1),
        "col2im 32x16x32x32 k3": lambda k: k.col2im(cols, 34, 34, 1),
        "label_components 64x64": lambda k: k.label_components(binary, 4),
        "telea_inpaint 3x32x32 hole 16x16": lambda k: k.telea_inpaint(img, mask, 3),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _kernels.backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s}" + "".join(f"{name:>14s}" for name in backends) + "   speedup")
    for label, fn in cases(rng).items():
        times = {}
        for name, mod in backends.items():
            number = 1 if name == "pure" else 5
            times[name] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
        row = f"{label:36s}" + "".join(f"{times[n] * 1e3:12.3f}ms" for n in backends)
        if "compiled" in times:
            row += f"   {times['pure'] / times['compiled']:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
