import enum
import math
from dataclasses import dataclass, asdict
from typing import Any, Dict, Sequence

import numpy as np

COEFFICIENT_NAMES = ('f0', 'a', 'b', 'c', 'd', 'e')


class Edge(enum.Enum):
    RISING = 'rising'
    FALLING = 'falling'


@dataclass(frozen=True)
class ModelCoefficients:
    """Six coefficients of the edged-plateau model.

    f0 is the baseline level (HU), a the plateau amplitude (HU), b/c the rising
    edge steepness (1/px) and offset, d/e the falling edge steepness and offset.
    Construction never validates; see ``sigmoid_model.validate``.
    """
    f0: float
    a: float
    b: float
    c: float
    d: float
    e: float

    @property
    def rising_inflection(self) -> float:
        return self.c / self.b

    @property
    def falling_inflection(self) -> float:
        return self.e / self.d

    @property
    def plateau_level(self) -> float:
        return self.f0 + self.a

    def as_array(self) -> np.ndarray:
        return np.array([self.f0, self.a, self.b, self.c, self.d, self.e], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'ModelCoefficients':
        if len(values) != 6:
            raise ValueError('Expected six coefficients')
        return cls(*(float(v) for v in values))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelCoefficients':
        return cls(*(float(data[name]) for name in COEFFICIENT_NAMES))

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def __repr__(self):
        values = ', '.join(f'{name}={getattr(self, name):.6g}' for name in COEFFICIENT_NAMES)
        return f'<ModelCoefficients {values}>'


@dataclass(frozen=True)
class AccuracyPolicy:
    """Relative accuracy used to place transition-zone endpoints.

    The default of 0.002 corresponds to 1 HU at the largest expected
    amplitude of 500 HU.
    """
    delta_y: float = 0.002

    def __post_init__(self):
        if not (0.0 < self.delta_y < 0.5):
            raise ValueError('delta_y must lie in (0, 0.5)')

    def to_dict(self) -> Dict[str, float]:
        return {'delta_y': self.delta_y}


@dataclass(frozen=True)
class EdgeMetrics:
    """Inflection, slope and transition-zone endpoints of one edge"""
    edge: Edge
    inflection_x: float
    inflection_value: float
    slope_tangent: float
    x1: float
    x2: float

    @property
    def transition_width(self) -> float:
        return abs(self.x2 - self.x1)

    @property
    def slope_angle_deg(self) -> float:
        """Tilting angle whose tangent is the slope"""
        return math.degrees(math.atan(self.slope_tangent))

    @property
    def outer_x(self) -> float:
        """Endpoint on the baseline side of the edge"""
        return self.x1 if self.edge is Edge.RISING else self.x2

    @property
    def inner_x(self) -> float:
        """Endpoint on the plateau side of the edge"""
        return self.x2 if self.edge is Edge.RISING else self.x1

    def with_outer(self, outer_x: float) -> 'EdgeMetrics':
        """Copy with the baseline-side endpoint moved"""
        if self.edge is Edge.RISING:
            return EdgeMetrics(self.edge, self.inflection_x, self.inflection_value,
                               self.slope_tangent, outer_x, self.x2)
        return EdgeMetrics(self.edge, self.inflection_x, self.inflection_value,
                           self.slope_tangent, self.x1, outer_x)

    def contains(self, x: float) -> bool:
        return min(self.x1, self.x2) <= x <= max(self.x1, self.x2)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'edge': self.edge.value,
            'inflection_x': self.inflection_x,
            'inflection_value': self.inflection_value,
            'slope_tangent': self.slope_tangent,
            'slope_angle_deg': self.slope_angle_deg,
            'x1': self.x1,
            'x2': self.x2,
            'transition_width': self.transition_width
        }
