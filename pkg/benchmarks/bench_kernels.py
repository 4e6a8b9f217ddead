"""Compare the compiled and pure-Python kernel backends.

The last column times the dispatching entry points used by the package;
speedup is python time over dispatched time.

    python benchmarks/bench_kernels.py --repeats 20
"""
import argparse
import timeit

import numpy as np

from scalebridge.numerics import kernels


def cases(rng, channels, size, n_assign):
    x = rng.normal(size=(channels, size, size))
    w = rng.normal(size=(channels, channels, 3, 3))
    b = rng.normal(size=channels)
    gy = rng.normal(size=(channels, size, size))
    cost = rng.uniform(size=(n_assign, n_assign // 2))
    return {
        "conv3x3 forward": lambda k: k.conv3x3_forward(x, w, b),
        "conv3x3 backward": lambda k: k.conv3x3_backward(x, w, gy),
        "linear assignment": lambda k: k.linear_assignment(cost),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--channels", type=int, default=32)
    parser.add_argument("--size", type=int, default=32, help="feature map side")
    parser.add_argument("--assign", type=int, default=80, help="cost-matrix rows")
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args(argv)

    if kernels.compiled is None:
        print("compiled kernels are not built; only the Python backend is timed")
    backends = [("python", kernels.python)] + ([("compiled", kernels.compiled)] if kernels.compiled else [])
    backends.append(("dispatched", kernels))
    rng = np.random.default_rng(0)
    print(f"{'kernel':20s} " + " ".join(f"{name:>12s}" for name, _ in backends) + f" {'speedup':>8s}")
    for label, fn in cases(rng, args.channels, args.size, args.assign).items():
        times = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeats)) * 1e3 for _, mod in backends]
        speedup = f"{times[0] / times[-1]:7.1f}x"
        print(f"{label:20s} " + " ".join(f"{t:10.3f}ms" for t in times) + f" {speedup}")


if __name__ == "__main__":
    main()
