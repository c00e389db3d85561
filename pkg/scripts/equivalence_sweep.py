"""Sweep the step size and Richardson depth of the fiber differential against the covariant one.

Prints one row per (chart, function, order, step, levels) with the relative error and the wall time,
so the cost/accuracy trade-off of the numerical path can be read off directly.

    python3 scripts/equivalence_sweep.py --chart sphere --steps 1e-2 1e-3 --levels 1 2
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from tensorquant.charts import shipped
from tensorquant.expr import parse
from tensorquant.expmap import FDConfig, IntegratorConfig, verify_equivalence

FUNCTIONS = ("{a}", "{b}", "sin({a})*cos({b})", "{a}^2*{b}", "exp({a})")


@dataclass(frozen=True)
class Sweep:
    chart: str
    point: tuple[float, ...]
    orders: tuple[int, ...]
    steps: tuple[float, ...]
    levels: tuple[int, ...]
    h0: float


def run(sweep: Sweep) -> list[dict]:
    g = shipped()[sweep.chart]
    coords = g.chart.coords
    a, b = coords[0], coords[-1]
    rows = []
    for template in FUNCTIONS:
        f = parse(template.format(a=a, b=b))
        for r in sweep.orders:
            for step in sweep.steps:
                for levels in sweep.levels:
                    start = time.perf_counter()
                    rep = verify_equivalence(f, sweep.point, r, g.connection,
                                             cfg=IntegratorConfig(step=step),
                                             fd=FDConfig(h0=sweep.h0, levels=levels))
                    rows.append({"f": template.format(a=a, b=b), "r": r, "step": step, "levels": levels,
                                 "rel_err": rep.rel_err, "seconds": time.perf_counter() - start})
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--chart", default="sphere", choices=sorted(shipped()))
    parser.add_argument("--point", type=float, nargs="+", default=None)
    parser.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3])
    parser.add_argument("--steps", type=float, nargs="+", default=[1e-2, 1e-3])
    parser.add_argument("--levels", type=int, nargs="+", default=[1, 2])
    parser.add_argument("--h0", type=float, default=1e-2)
    args = parser.parse_args()
    dim = shipped()[args.chart].chart.dim
    point = tuple(args.point) if args.point else (1.0, 0.3, 0.2)[:dim]
    sweep = Sweep(args.chart, point, tuple(args.orders), tuple(args.steps), tuple(args.levels), args.h0)
    print(f"{'function':<18} {'r':>2} {'step':>8} {'lv':>3} {'rel_err':>10} {'s':>7}")
    for row in run(sweep):
        print(f"{row['f']:<18} {row['r']:>2} {row['step']:>8.0e} {row['levels']:>3} "
              f"{row['rel_err']:>10.2e} {row['seconds']:>7.3f}")


if __name__ == "__main__":
    main()
