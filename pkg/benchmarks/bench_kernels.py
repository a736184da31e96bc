"""Time the compiled and numpy kernel backends on simulation-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from pilotadapt.kernels import get_backend

T_S = 71.875e-6


def cases(rng):
    # one SISO epoch: 4 taps x 2 branches, 32 sinusoids each, 1500 symbols
    nu = rng.uniform(-925, 925, (8, 32))
    ph = rng.uniform(0, 2 * np.pi, (8, 32))
    # one 4x4 MIMO epoch: 16 pairs x 4 taps x 2 branches
    nu_m = rng.uniform(-925, 925, (128, 32))
    ph_m = rng.uniform(0, 2 * np.pi, (128, 32))
    # correlation estimation over a 72 x 1500 grid
    H = rng.standard_normal((72, 1500)) + 1j * rng.standard_normal((72, 1500))
    return {
        "sos_taps siso epoch": lambda k: k.sos_taps(nu, ph, 1500, T_S, 0.0),
        "sos_taps mimo epoch": lambda k: k.sos_taps(nu_m, ph_m, 1500, T_S, 0.0),
        "lagged rows (freq)": lambda k: k.lagged_row_products(H, 31),
        "lagged rows (time)": lambda k: k.lagged_row_products(np.ascontiguousarray(H.T), 20),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"python": get_backend("python")}
    try:
        backends["cython"] = get_backend("cython")
    except ImportError:
        print("compiled kernels not built; timing numpy only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s}" + "".join(f"{b:>14s}" for b in backends) + ("      speedup" if len(backends) > 1 else ""))
    for name, fn in cases(rng).items():
        times = {}
        for b, k in backends.items():
            number = 3
            times[b] = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number
        line = f"{name:24s}" + "".join(f"{times[b] * 1e3:11.3f} ms" for b in backends)
        if len(backends) > 1:
            line += f"{times['python'] / times['cython']:12.1f}x"
        print(line)


if __name__ == "__main__":
    main()
