"""Compare the compiled and pure-Python pixel kernels.

    python3 benchmarks/bench_kernels.py [--frames N] [--width W] [--height H]
"""

import argparse
import random
import timeit

from streamfn import kernels


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=20)
    parser.add_argument("--width", type=int, default=160)
    parser.add_argument("--height", type=int, default=120)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = random.Random(0)
    frames = [rng.randbytes(args.width * args.height * 3) for _ in range(args.frames)]
    pairs = list(zip(frames, frames[1:] + frames[:1]))

    backends = {"python": kernels.python}
    if kernels.compiled is not None:
        backends["cython"] = kernels.compiled
    else:
        print("compiled extension not built; only the Python backend is timed")

    print(f"{args.frames} frames of {args.width}x{args.height}, best of {args.repeat}")
    results = {}
    for name, mod in backends.items():
        gray = min(timeit.repeat(lambda: [mod.grayscale_rgb(f) for f in frames], number=1, repeat=args.repeat))
        diff = min(timeit.repeat(lambda: [mod.count_diff(a, b) for a, b in pairs], number=1, repeat=args.repeat))
        results[name] = (gray, diff)
        print(f"{name:8s} grayscale {gray / args.frames * 1e3:9.3f} ms/frame   "
              f"count_diff {diff / args.frames * 1e3:9.3f} ms/frame")
    if len(results) == 2:
        (pg, pd), (cg, cd) = results["python"], results["cython"]
        print(f"speedup  grayscale {pg / cg:8.1f}x          count_diff {pd / cd:8.1f}x")


if __name__ == "__main__":
    main()
