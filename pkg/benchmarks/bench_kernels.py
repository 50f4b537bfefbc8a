"""Compare the numba kernels with the pure-numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Both backends are imported
directly, so the ``MORSEFLOW_DISABLE_NUMBA`` flag does not matter here.
Each row reports the best of ``--repeat`` timings after one warm-up call
(which also absorbs numba compilation) and the largest difference between
the two results.
"""

import argparse
import timeit

import numpy as np

from morseflow import _kernels_numba as nb
from morseflow import _kernels_numpy as npk
from morseflow.cocycle import double_well
from morseflow.noise import TimeGrid, sample_wiener


def cases(scale: int):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, 1000 * scale)
    z = rng.uniform(-20.0, 20.0, 200)
    yield "double_well_grid", (x, z)
    xp = rng.uniform(-1.0, 1.0, 200_000 * scale)
    zp = rng.uniform(-20.0, 20.0, xp.size)
    yield "double_well_pairs", (xp, zp)

    sde = double_well("stratonovich-sde")
    path = sample_wiener(TimeGrid(-5.0, 5.0, 0.01), 0)
    W = path.evaluate(np.linspace(0.0, 1.0, 1001))
    X = rng.uniform(-0.99, 0.99, (500 * scale, 1))
    coeffs = (sde.drift.coef, sde.drift.powers, sde.diffusion.coef, sde.diffusion.powers)
    yield "heun_forward", (X, W, 1e-3) + coeffs
    Y = nb.heun_forward(X, W, 1e-3, *coeffs)
    yield "heun_inverse", (Y, W, 1e-3) + coeffs


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=int, default=1, help="multiply the problem sizes")
    args = ap.parse_args(argv)
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max |diff|':>12}")
    for name, inputs in cases(args.scale):
        f_np, f_nb = getattr(npk, name), getattr(nb, name)
        a, b = f_np(*inputs), f_nb(*inputs)
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=1, repeat=args.repeat)) * 1e3
        diff = float(np.max(np.abs(a - b)))
        print(f"{name:<20}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
