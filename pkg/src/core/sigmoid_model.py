"""Closed-form evaluation of the edged-plateau model and its derived metrics.

    F(x) = F0 - a * (1 / (1 + exp(b*x - c)) - 1 / (1 + exp(d*x - e)))

The rising edge is governed by (b, c), the falling edge by (d, e). Both
logistic terms are evaluated with ``scipy.special.expit`` so large exponent
arguments saturate to 0 or 1 instead of overflowing.
"""
import math
from typing import Any, Dict, NamedTuple, Union

import numpy as np
from scipy.special import expit

from src.models import AccuracyPolicy, Edge, EdgeMetrics, ModelCoefficients
from src.utils.errors import IllFormedModelError
from src.utils.validation import make_report

ArrayLike = Union[float, np.ndarray]


class PlateauWidth(NamedTuple):
    value: float
    degenerate: bool


def _terms(coeffs: ModelCoefficients, x: ArrayLike):
    """Rising and falling logistic terms 1/(1+exp(u))"""
    x = np.asarray(x, dtype=float)
    rising = expit(coeffs.c - coeffs.b * x)
    falling = expit(coeffs.e - coeffs.d * x)
    return x, rising, falling


def _scalar_or_array(x: np.ndarray, values: np.ndarray) -> ArrayLike:
    return float(values) if x.ndim == 0 else values


def evaluate(coeffs: ModelCoefficients, x: ArrayLike) -> ArrayLike:
    """Model value (HU) at x (px); accepts scalars or arrays"""
    x, rising, falling = _terms(coeffs, x)
    return _scalar_or_array(x, coeffs.f0 - coeffs.a * (rising - falling))


def derivative(coeffs: ModelCoefficients, x: ArrayLike) -> ArrayLike:
    """Analytic first derivative (HU/px): sum of the rising and falling edge terms"""
    x, rising, falling = _terms(coeffs, x)
    values = (coeffs.a * coeffs.b * rising * (1.0 - rising)
              - coeffs.a * coeffs.d * falling * (1.0 - falling))
    return _scalar_or_array(x, values)


def gradient(coeffs: ModelCoefficients, x: ArrayLike) -> np.ndarray:
    """
    Partial derivatives of the model with respect to (f0, a, b, c, d, e)

    Args:
        coeffs: point at which the partials are taken
        x: sample coordinates (px)

    Returns:
        array of shape (len(x), 6)
    """
    x, rising, falling = _terms(coeffs, np.atleast_1d(x))
    a = coeffs.a
    rising_slope = rising * (1.0 - rising)
    falling_slope = falling * (1.0 - falling)

    jac = np.empty((x.size, 6), dtype=float)
    jac[:, 0] = 1.0
    jac[:, 1] = falling - rising
    jac[:, 2] = a * rising_slope * x
    jac[:, 3] = -a * rising_slope
    jac[:, 4] = -a * falling_slope * x
    jac[:, 5] = a * falling_slope
    return jac


def theta(policy: AccuracyPolicy) -> float:
    """Accuracy constant |ln(delta_y)|"""
    return abs(math.log(policy.delta_y))


def exact_theta(policy: AccuracyPolicy) -> float:
    """Exact solution of the endpoint condition, |ln(delta_y / (1 - delta_y))|"""
    return abs(math.log(policy.delta_y / (1.0 - policy.delta_y)))


def validate(coeffs: ModelCoefficients) -> Dict[str, Any]:
    """
    Check sign constraints and edge ordering
    Returns a validation report; empty violations iff the coefficients are usable
    """
    violations = []
    values = coeffs.as_array()
    if not np.all(np.isfinite(values)):
        violations.append('coefficients must be finite')
    if coeffs.a < 0:
        violations.append('a >= 0')
    if coeffs.b <= 0:
        violations.append('b > 0')
    if coeffs.c < 0:
        violations.append('c >= 0')
    if coeffs.d <= 0:
        violations.append('d > 0')
    if coeffs.e < 0:
        violations.append('e >= 0')
    if coeffs.b > 0 and coeffs.d > 0 and coeffs.rising_inflection > coeffs.falling_inflection:
        violations.append('rising precedes falling')
    return make_report(violations)


def _require_well_formed(coeffs: ModelCoefficients):
    if coeffs.b <= 0 or coeffs.d <= 0:
        raise IllFormedModelError('b and d must be > 0')
    if coeffs.rising_inflection > coeffs.falling_inflection:
        raise IllFormedModelError(
            f'Rising inflection {coeffs.rising_inflection:.4g} after falling '
            f'inflection {coeffs.falling_inflection:.4g}')


def edge_metrics(coeffs: ModelCoefficients, policy: AccuracyPolicy, edge: Edge) -> EdgeMetrics:
    """
    Inflection point, slope tangent and transition-zone endpoints of one edge

    Raises:
        IllFormedModelError: if c/b > e/d
    """
    _require_well_formed(coeffs)
    t = theta(policy)
    midpoint = coeffs.f0 + coeffs.a / 2.0

    if edge is Edge.RISING:
        return EdgeMetrics(
            edge=edge,
            inflection_x=coeffs.c / coeffs.b,
            inflection_value=midpoint,
            slope_tangent=coeffs.a * coeffs.b / 4.0,
            x1=(coeffs.c - t) / coeffs.b,
            x2=(coeffs.c + t) / coeffs.b
        )
    return EdgeMetrics(
        edge=edge,
        inflection_x=coeffs.e / coeffs.d,
        inflection_value=midpoint,
        slope_tangent=-coeffs.a * coeffs.d / 4.0,
        x1=(coeffs.e - t) / coeffs.d,
        x2=(coeffs.e + t) / coeffs.d
    )


def plateau_width(coeffs: ModelCoefficients, policy: AccuracyPolicy) -> PlateauWidth:
    """
    Distance between the inner transition endpoints, e/d - c/b - theta*(1/b + 1/d)

    Negative values (overlapping transition zones) are returned as-is and
    flagged degenerate.
    """
    _require_well_formed(coeffs)
    t = theta(policy)
    value = (coeffs.falling_inflection - coeffs.rising_inflection
             - t * (1.0 / coeffs.b + 1.0 / coeffs.d))
    return PlateauWidth(value, value <= 0)


def estimated_diameter(coeffs: ModelCoefficients, policy: AccuracyPolicy) -> float:
    """Plateau width plus both transition zones, e/d - c/b + theta*(1/b + 1/d)"""
    _require_well_formed(coeffs)
    t = theta(policy)
    return (coeffs.falling_inflection - coeffs.rising_inflection
            + t * (1.0 / coeffs.b + 1.0 / coeffs.d))
