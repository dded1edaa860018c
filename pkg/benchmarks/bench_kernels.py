"""Compiled vs pure-Python collision kernels.

    python benchmarks/bench_kernels.py --nv 8 --repeat 3

Both backends assemble the same strong-form matrices and evaluate the
bilinear term on a batch of random fields; the script reports wall time per
call, the speed-up and the largest difference between the two results.
"""
import argparse
import time

import numpy as np

from softbolt.collision import kernels
from softbolt.collision.cells import offset_table
from softbolt.collision.grid import VelocityGrid
from softbolt.collision.operator import AngularRule, _raw_assembly


def _best(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(nv: int, vmax: float, n_omega: int, repeat: int, batch: int, interpolation: str = "ratio"):
    g = VelocityGrid(vmax, nv)
    rule = AngularRule.build(n_omega)
    table = offset_table(g.n, g.spacing, -1.0, "full")
    rng = np.random.default_rng(0)
    F = np.ascontiguousarray(rng.standard_normal((batch, g.size)))
    G = np.ascontiguousarray(rng.standard_normal((batch, g.size)))
    results = {}
    for name in ("compiled", "python"):
        try:
            mod = kernels.get(name)
        except ImportError:
            print(f"{name:9s} unavailable")
            continue
        t_asm, mats = _best(lambda: _raw_assembly(g, table, rule, name, interpolation), repeat)

        def gam():
            out = np.zeros_like(F)
            mod.gamma_batch(g.n, g.half_width, g.spacing, g.sqrt_mu, g.weights, table, *rule.args(), F, G, out,
                            int(interpolation == "direct"))
            return out

        t_gam, out = _best(gam, repeat)
        results[name] = (t_asm, t_gam, mats, out)
        print(f"{name:9s} assemble {t_asm:8.3f} s   gamma[{batch}] {t_gam:8.3f} s")
    if len(results) == 2:
        c, p = results["compiled"], results["python"]
        diff = max(np.max(np.abs(a - b)) for a, b in zip(c[2], p[2]))
        diff_g = np.max(np.abs(c[3] - p[3]))
        print(f"speed-up  assemble {p[0] / c[0]:7.1f}x   gamma {p[1] / c[1]:7.1f}x")
        print(f"max |compiled - python|: matrices {diff:.2e}, gamma {diff_g:.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nv", type=int, default=8)
    ap.add_argument("--vmax", type=float, default=6.0)
    ap.add_argument("--n-omega", type=int, default=72)
    ap.add_argument("--repeat", type=int, default=1)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--interpolation", choices=("ratio", "direct"), default="ratio")
    a = ap.parse_args()
    print(f"grid {a.nv}^3 = {a.nv ** 3} nodes, {a.n_omega} directions, default backend: {kernels.BACKEND}")
    bench(a.nv, a.vmax, a.n_omega, a.repeat, a.batch, a.interpolation)


if __name__ == "__main__":
    main()
