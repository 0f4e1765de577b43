"""Compiled core versus pure-Python core.

Times the three hot kernels on identical inputs with both backends and
checks that they agree:

* ``w_value``: one reduced kernel value ``W(x, y, z)``,
* ``x_integral``: one ``J[phi](y, z)`` evaluation for a bump test function,
* ``assemble_pair``: one ``(y, z)`` slice of the Galerkin tensors.

Run with ``python benchmarks/bench_core.py [--repeat N]``.  The compiled
core must be built (``pip install -e . --no-build-isolation``).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from semiclassical import _pycore
from semiclassical.kernels import KernelQuadConfig, SplineFamily, TestFunction
from semiclassical.potential import gaussian, normalize

try:
    from semiclassical import _ccore
except ImportError:  # pragma: no cover
    _ccore = None


def _setup(mod):
    hat = normalize(gaussian())
    cfg = KernelQuadConfig()
    prof = mod.Profile(hat.core_kind, hat.scale, 0.25, -1, r_cut=hat.r_cut, phimax=hat.phimax)
    return prof, cfg.tol(mod)


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(mod):
    prof, tol = _setup(mod)
    phi = TestFunction.bump(1.5, 1.0)
    fam = SplineFamily(16, 0.5).core_family()
    return {
        "w_value": lambda: mod.w_value(prof, 1.3, 1.0, 2.0, tol),
        "x_integral": lambda: mod.x_integral(prof, phi.breaks, phi.coeffs, 1.0, 2.0, tol),
        "assemble_pair": lambda: mod.assemble_pair(prof, fam, 1.5, 3.0, tol, True, ())[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ccore is None:
        raise SystemExit("compiled core not built; nothing to compare")
    py, cc = cases(_pycore), cases(_ccore)
    print(f"{'kernel':<14}{'python [s]':>12}{'compiled [s]':>14}{'speed-up':>10}{'max rel diff':>14}")
    for name in py:
        tp, vp = _time(py[name], args.repeat)
        tc, vc = _time(cc[name], args.repeat)
        vp, vc = np.atleast_1d(vp), np.atleast_1d(vc)
        diff = float(np.max(np.abs(vp - vc)) / max(np.max(np.abs(vp)), 1e-300))
        print(f"{name:<14}{tp:>12.4g}{tc:>14.4g}{tp / tc:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
