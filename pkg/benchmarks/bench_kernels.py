"""Compare the compiled and pure-Python RK4 plant kernels.

    python benchmarks/bench_kernels.py --steps 20000 --repeat 5
"""

import argparse
import timeit

import numpy as np

from cdfilter.equilibrium import SteadyKnowns, solve_steady_state
from cdfilter.kernels import integrate_compiled, integrate_python
from cdfilter.model import PlantParams


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=20_000, help="RK4 steps per call")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--h", type=float, default=0.01)
    args = parser.parse_args()

    params = PlantParams()
    op = solve_steady_state(params, SteadyKnowns())
    p = params.kernel_vector()
    x = op.x_ss.as_array() * 1.01
    u = op.u_ss.as_array()

    backends = {"python": integrate_python}
    if integrate_compiled is not None:
        backends["cython"] = integrate_compiled
    else:
        print("compiled extension not built; timing the Python kernel only")

    results = {}
    timings = {}
    for name, fn in backends.items():
        results[name] = fn(p, x, u, args.h, args.steps)
        best = min(timeit.repeat(lambda: fn(p, x, u, args.h, args.steps), number=1, repeat=args.repeat))
        timings[name] = best
        print(f"{name:<7} {args.steps} steps: {best * 1e3:9.2f} ms  ({best / args.steps * 1e9:8.1f} ns/step)")

    if "cython" in results:
        same = np.array_equal(results["cython"][0], results["python"][0]) and (
            results["cython"][1:] == results["python"][1:]
        )
        print(f"speed-up: {timings['python'] / timings['cython']:.1f}x; bit-identical results: {same}")


if __name__ == "__main__":
    main()
