"""The example geometries shipped with the package."""

from __future__ import annotations

import math

from .geometry import Chart, Metric

SPHERE_MARGIN = 0.2


def flat(n: int = 2) -> Metric:
    """Euclidean metric on R^n in coordinates x, y, z (or x1..xn beyond three)."""
    names = ("x", "y", "z") if n <= 3 else tuple(f"x{j + 1}" for j in range(n))
    chart = Chart(names[:n], sample=tuple((-1.5, 1.5) for _ in range(n)))
    return Metric.diagonal(chart, [1] * n)


def sphere() -> Metric:
    """Round unit sphere ``dth^2 + sin(th)^2 dph^2`` away from the poles."""
    chart = Chart(
        ("th", "ph"),
        domain=((SPHERE_MARGIN, math.pi - SPHERE_MARGIN), (-math.inf, math.inf)),
        sample=((SPHERE_MARGIN, math.pi - SPHERE_MARGIN), (0.0, 2 * math.pi)),
    )
    return Metric.diagonal(chart, ["1", "sin(th)^2"])


def conformal_plane() -> Metric:
    """``exp(2x) (dx^2 + dy^2)``."""
    chart = Chart(("x", "y"), sample=((-1.0, 1.5), (-1.5, 1.5)))
    return Metric.diagonal(chart, ["exp(2*x)", "exp(2*x)"])


def shipped() -> dict[str, Metric]:
    return {
        "flat1": flat(1),
        "flat2": flat(2),
        "flat3": flat(3),
        "sphere": sphere(),
        "conformal": conformal_plane(),
    }
