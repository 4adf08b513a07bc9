#!/usr/bin/env python3
"""Benchmark the two sweep backends on representative problem sizes.

Usage: python benchmarks/bench_sweep.py [--quick]

The numba backend evaluates the correlation norms by direct support-bounded
sums parallelized over probes; the numpy backend batches FFT correlations
per probe.  Which one wins depends on the trace length and sensor count,
so both are timed on a small 2D layout and a reduced 3D layout.
"""

import argparse
import time

import numpy as np

import tdscat as td
from tdscat._kernels import HAVE_NUMBA

SPEC = td.SignalSpec(4.0, 1.6, 3.0)
MED = td.MediumSpec(1.0)


def time_sweep(data, grid, kind, backend, repeat=1):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        field = td.sweep(data, grid, kind, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, field


def run_case(name, data, grid, kind, repeat):
    rows = []
    ref = None
    for backend in ("numpy", "numba") if HAVE_NUMBA else ("numpy",):
        if backend == "numba":  # compile outside the timed region
            tiny = td.make_sampling_grid(
                [list(b) for b in grid.bounds], [2] * grid.dimension
            )
            td.sweep(data, tiny, kind, backend="numba")
        secs, field = time_sweep(data, grid, kind, backend, repeat)
        if ref is None:
            ref = field.values
            agree = 0.0
        else:
            agree = np.abs(field.values - ref).max() / np.abs(ref).max()
        rows.append((backend, secs, agree))
    print(f"\n{name}: {grid.n_points} probes, indicator {kind}")
    for backend, secs, agree in rows:
        print(f"  {backend:6s} {secs:8.2f} s   max rel. deviation {agree:.2e}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller grids")
    args = parser.parse_args()

    sensors = td.make_circle_sensors(20, 4.0)
    tg = td.TimeGrid(25.0, 128)
    data2d = td.synth_point_model([[0.0, 0.0]], [1.0], sensors, sensors, tg, SPEC, MED, 3)
    n2 = 11 if args.quick else 21
    grid2d = td.make_sampling_grid([[-2.6, 2.6]] * 2, [n2, n2])
    run_case("2D full circle (20 sensors, 129 samples)", data2d, grid2d, "i1", repeat=2)
    run_case("2D full circle (20 sensors, 129 samples)", data2d, grid2d, "i3", repeat=2)

    sph = td.make_fibonacci_sphere_sensors(50, 4.0)
    tg3 = td.TimeGrid(19.0, 256)
    data3d = td.synth_point_model(
        [[0.4, -0.8, 0.2]], [1.0], sph, sph, tg3, SPEC, MED, 3
    )
    n3 = 7 if args.quick else 11
    grid3d = td.make_sampling_grid([[-2, 2]] * 3, [n3, n3, n3])
    run_case("3D sphere (50 sensors, 257 samples)", data3d, grid3d, "i3", repeat=1)


if __name__ == "__main__":
    main()
