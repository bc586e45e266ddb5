"""Two-piece cubic friction curve.

The rising piece runs from the origin to the extremum, the falling piece from
the extremum to the asymptote. Both are cubic Hermite segments converted to
power-basis coefficients ``a*S^3 + b*S^2 + c*S + d`` in absolute slip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import SplineControlPoints


def _hermite_coefficients(x0, y0, m0, x1, y1, m1) -> tuple[float, float, float, float]:
    h = x1 - x0
    # cubic in t = (S - x0) / h
    A = 2.0 * y0 + h * m0 - 2.0 * y1 + h * m1
    B = -3.0 * y0 - 2.0 * h * m0 + 3.0 * y1 - h * m1
    C = h * m0
    D = y0
    h2, h3 = h * h, h * h * h
    a = A / h3
    b = B / h2 - 3.0 * A * x0 / h3
    c = C / h - 2.0 * B * x0 / h2 + 3.0 * A * x0 * x0 / h3
    d = D - C * x0 / h + B * x0 * x0 / h2 - A * x0 ** 3 / h3
    return a, b, c, d


@dataclass(frozen=True)
class TireSpline:
    f0: tuple[float, float, float, float]
    f1: tuple[float, float, float, float]
    s0: float
    se: float
    sa: float
    force_origin: float
    force_asymptote: float

    def __call__(self, s: float) -> float:
        return self.evaluate(s)[0]

    def evaluate(self, s: float) -> tuple[float, float]:
        """Force and slope at non-negative slip ``s`` (flat outside [S0, Sa])."""
        if s >= self.sa:
            return self.force_asymptote, 0.0
        if s < self.s0:
            return self.force_origin, 0.0
        a, b, c, d = self.f0 if s < self.se else self.f1
        return ((a * s + b) * s + c) * s + d, (3.0 * a * s + 2.0 * b) * s + c

    def derivative(self, s: float) -> float:
        return self.evaluate(s)[1]


def fit_tire_spline(points: SplineControlPoints) -> TireSpline:
    (s0, f0), (se, fe), (sa, fa) = points.origin, points.extremum, points.asymptote
    # free slope at the origin: twice the secant keeps the rise monotone
    m0 = 2.0 * (fe - f0) / (se - s0)
    return TireSpline(
        f0=_hermite_coefficients(s0, f0, m0, se, fe, 0.0),
        f1=_hermite_coefficients(se, fe, 0.0, sa, fa, 0.0),
        s0=s0, se=se, sa=sa,
        force_origin=f0, force_asymptote=fa,
    )


def tire_force(spline: TireSpline, slip: float, normal_load: float, traction: float = 1.0) -> float:
    """Signed tire force for a slip value; odd in slip."""
    if slip == 0.0:
        return 0.0
    f, _ = spline.evaluate(abs(slip))
    return math.copysign(f, slip) * normal_load * traction
