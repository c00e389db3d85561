"""Tabulate the s-scaled quantization value against s^r times the unscaled one.

    python3 scripts/scaling_family.py --chart sphere --order 2 --s 0.25 0.5 2 4
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from tensorquant.charts import shipped
from tensorquant.expr import parse
from tensorquant.expmap import scaled_quantization_check
from tensorquant.geometry import COVARIANT, SymTensor


@dataclass(frozen=True)
class Family:
    chart: str
    order: int
    function: str
    point: tuple[float, ...]
    scales: tuple[float, ...]


def magnitude(chart, order: int) -> SymTensor:
    """``(dx^0)^r`` plus a mixed term when the chart has a second coordinate."""
    first, last = chart.coords[0], chart.coords[-1]
    comps = {" ".join([first] * order): "1"}
    if order and first != last:
        comps[" ".join([first] * (order - 1) + [last])] = "0.5"
    return SymTensor.from_names(chart, COVARIANT, order, comps)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--chart", default="sphere", choices=sorted(shipped()))
    parser.add_argument("--order", type=int, default=2)
    parser.add_argument("--function", default=None, help="defaults to sin(a)*cos(b) + a^2 in chart coordinates")
    parser.add_argument("--point", type=float, nargs="+", default=None)
    parser.add_argument("--s", type=float, nargs="+", default=[0.25, 0.5, 2.0, 4.0])
    args = parser.parse_args()

    g = shipped()[args.chart]
    a, b = g.chart.coords[0], g.chart.coords[-1]
    family = Family(args.chart, args.order, args.function or f"sin({a})*cos({b}) + {a}^2",
                    tuple(args.point) if args.point else (1.0, 0.3, 0.2)[: g.chart.dim], tuple(args.s))
    tensor = magnitude(g.chart, family.order)
    f = parse(family.function)
    print(f"{family.chart}: r={family.order}, f={family.function}, x0={family.point}")
    print(f"{'s':>6} {'value_s':>24} {'s^r value_1':>24} {'error':>9}")
    for s in family.scales:
        rep = scaled_quantization_check(tensor, f, family.point, s, g)
        print(f"{s:>6g} {rep.value_s.real:>+12.6e}{rep.value_s.imag:>+12.6e}i "
              f"{rep.expected.real:>+12.6e}{rep.expected.imag:>+12.6e}i {rep.error:>9.1e}")


if __name__ == "__main__":
    main()
