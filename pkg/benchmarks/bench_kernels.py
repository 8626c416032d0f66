"""Compare the compiled kernel backend against the pure-Python reference.

Runs the three hot kernels on representative workloads and reports the
best-of-k wall time per call for each backend. Usage:

    python benchmarks/bench_kernels.py [--repeats K]
"""

import argparse
import math
import time

import numpy as np

from trapshuttle import _kernels_py, kernels, protocols
from trapshuttle.dynamics import _allocate_steps, _segment_arrays
from trapshuttle.model import TransportSpec


def best_of(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads():
    spec = TransportSpec(mass=1.44269e-25, omega0=2 * math.pi * 20, distance=0.01)
    d, w = spec.distance, spec.omega0
    p = protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2)
    starts, lengths, q0 = _segment_arrays(p)
    seg_steps = _allocate_steps(lengths, 10_000)
    rng = np.random.default_rng(0)
    u_nodes = rng.uniform(-0.1 * d, 0.1 * d, 100)

    return [
        ("rk4_protocol (10^4 steps)",
         lambda impl: impl.rk4_protocol(starts, lengths, q0, w, seg_steps)),
        ("transcribe_terminal (N=100, M=10)",
         lambda impl: impl.transcribe_terminal(u_nodes, p.t_f, w, 10)),
        ("transcribe_adjoint (N=100, M=10)",
         lambda impl: impl.transcribe_adjoint(100, p.t_f, w, 10, 1.0, 0.5)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="timing repeats (default 7)")
    args = parser.parse_args()

    if not kernels.COMPILED_AVAILABLE:
        print("compiled extension not built; timing the pure backend only")
    backends = [("python", _kernels_py)]
    if kernels.COMPILED_AVAILABLE:
        from trapshuttle import _kernels
        backends.append(("compiled", _kernels))

    width = max(len(name) for name, _ in workloads())
    print(f"{'workload':<{width}}  " + "".join(f"{n:>12}" for n, _ in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for name, call in workloads():
        times = [best_of(lambda impl=impl: call(impl), args.repeats) for _, impl in backends]
        row = f"{name:<{width}}  " + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
