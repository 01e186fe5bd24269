"""Compare the compiled and pure-Python hot kernels.

Usage::

    python benchmarks/bench_backends.py [--repeat 5] [--steps 5000] [--samples 800]

Times the RK4 integrator on the 7-D benchmark and the reduction map with its
Jacobian on a degree-3 polynomial kernel, checks that both backends return
the same numbers and prints a speedup table.
"""
import argparse
import timeit

import numpy as np

from kernel_mor import _pykernels, benchmark_7d
from kernel_mor.kernels import KernelSpec

try:
    from kernel_mor import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def cases(steps, samples, seed):
    rng = np.random.default_rng(seed)
    c, t, se, ue = benchmark_7d().term_arrays
    U = rng.uniform(-1, 1, (steps, 1))
    x0 = rng.uniform(-0.5, 0.5, 7)
    rk4 = ("rk4_polynomial", f"7-D benchmark, {steps} steps", "rk4_polynomial", (c, t, se, ue, x0, U, 1e-3, 10))
    x = rng.uniform(-0.5, 0.5, 7)
    Y = rng.uniform(-0.5, 0.5, (samples, 7))
    W = rng.standard_normal((samples, 2))
    out = [rk4]
    for k in (KernelSpec.polynomial(3), KernelSpec.gaussian(0.5)):
        out.append(("pi_and_jacobian", f"{k.family}, {samples} samples, q = 2", "pi_and_jacobian",
                    (x, Y, W, *k.backend_args)))
    return out


def best_time(fn, args, repeat, number):
    return min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--samples", type=int, default=800)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _ckernels is None:
        parser.exit(1, "compiled extension is not built; run `pip install -e . --no-build-isolation`\n")

    print(f"{'kernel':<18}{'case':<36}{'python [ms]':>13}{'cython [ms]':>13}{'speedup':>10}{'max diff':>11}")
    for name, label, attr, fargs in cases(args.steps, args.samples, args.seed):
        py, cy = getattr(_pykernels, attr), getattr(_ckernels, attr)
        a, b = py(*fargs), cy(*fargs)
        diff = max(float(np.max(np.abs(np.asarray(u, float) - np.asarray(v, float)))) for u, v in zip(a, b))
        number = 1 if attr == "rk4_polynomial" else 20
        tp = best_time(py, fargs, args.repeat, number)
        tc = best_time(cy, fargs, args.repeat, number)
        print(f"{name:<18}{label:<36}{1e3 * tp:>13.3f}{1e3 * tc:>13.3f}{tp / tc:>9.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
