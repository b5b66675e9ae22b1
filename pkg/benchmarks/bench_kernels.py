"""Timing of the per-frequency kernels: compiled extension vs numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 1024 8192 65536] [--repeat 5]

Also times a full optimal-profile solve with each backend (the solver is run
in a subprocess with ``MACDETECT_BACKEND`` set, since the backend is fixed at
import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from macdetect import kernels
from macdetect.spectra import FrequencyGrid, psd1

V, W = 10 ** -0.5, 10 ** -0.5


def inputs(size):
    phi = psd1().samples(FrequencyGrid(1, size))
    lam_e, xi_e = kernels.backends()["python"].oep_entry(phi, V, W, True)
    lam = float(np.quantile(lam_e, 0.4))
    return phi, lam, lam_e, xi_e


def bench(mod, size, repeat):
    phi, lam, lam_e, xi_e = inputs(size)
    coeffs = kernels.oep_coefficients(phi, lam, V, W)
    cases = {
        "cubic_roots": lambda: mod.cubic_roots(*coeffs),
        "oep_entry": lambda: mod.oep_entry(phi, V, W, True),
        "oep_allocate": lambda: mod.oep_allocate(phi, lam, V, W, lam_e, xi_e),
    }
    out = {}
    for name, fn in cases.items():
        number = max(1, int(2e5 // size))
        out[name] = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    return out


SOLVE = (
    "import timeit;"
    "from macdetect.energy import EnergyParams, solve_oep;"
    "from macdetect.spectra import FrequencyGrid, psd2;"
    "p = EnergyParams.from_snr(5, 0); g = FrequencyGrid(1, {size});"
    "print(min(timeit.repeat(lambda: solve_oep(psd2(), 0.6, p, g), number=1, repeat={repeat})))"
)


def bench_solve(backend, size, repeat):
    env = dict(os.environ, MACDETECT_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", SOLVE.format(size=size, repeat=repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return float(res.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 8192, 65536])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    if "compiled" not in mods:
        print("compiled extension not built; timing the python backend only")
    print(f"{'kernel':<14}{'size':>8}" + "".join(f"{k:>14}" for k in mods) + f"{'speedup':>10}")
    for size in args.sizes:
        res = {k: bench(m, size, args.repeat) for k, m in mods.items()}
        for name in res["python"]:
            row = f"{name:<14}{size:>8}" + "".join(f"{res[k][name] * 1e3:>12.3f}ms" for k in mods)
            if "compiled" in res:
                row += f"{res['python'][name] / res['compiled'][name]:>9.1f}x"
            print(row)
    for size in args.sizes:
        t = {k: bench_solve(k, size, args.repeat) for k in mods}
        row = f"{'solve_oep':<14}{size:>8}" + "".join(f"{t[k] * 1e3:>12.3f}ms" for k in mods)
        if "compiled" in t:
            row += f"{t['python'] / t['compiled']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
