import enum
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .coefficients import ModelCoefficients

MIN_PROFILE_LENGTH = 8

# Lower bounds in coefficient order (f0, a, b, c, d, e)
DEFAULT_LOWER_BOUNDS = (-np.inf, 0.0, 1e-6, 0.0, 1e-6, 0.0)


class Axis(enum.Enum):
    ROW = 'row'
    COLUMN = 'column'


class TerminationReason(enum.Enum):
    COST_TOLERANCE = 'cost_tolerance'
    STEP_TOLERANCE = 'step_tolerance'
    MAX_ITERATIONS = 'max_iterations'
    SINGULAR_NORMAL_EQUATIONS = 'singular_normal_equations'
    LOWER_BOUND = 'lower_bound'


@dataclass(frozen=True, eq=False)
class LineProfile:
    """HU samples along one row or column of a slice.

    Sample k sits at pixel coordinate ``x0 + k``; ``span`` holds the
    coordinates of the first and last P-region pixel on the line.
    """
    values: np.ndarray
    x0: int = 0
    axis: Axis = Axis.ROW
    index: int = 0
    span: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, 'values', values)
        if values.ndim != 1 or values.size < MIN_PROFILE_LENGTH:
            raise ValueError(f'Profile needs at least {MIN_PROFILE_LENGTH} samples')
        last = self.x0 + values.size - 1
        start, end = self.span
        if not (self.x0 <= start <= end <= last):
            raise ValueError(f'Span {self.span} outside profile range [{self.x0}, {last}]')

    @property
    def coordinates(self) -> np.ndarray:
        return self.x0 + np.arange(self.values.size, dtype=float)

    def __len__(self):
        return int(self.values.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'axis': self.axis.value,
            'index': self.index,
            'x0': self.x0,
            'length': len(self),
            'span': list(self.span)
        }


@dataclass(frozen=True)
class FitConfig:
    """Levenberg-Marquardt settings"""
    max_iterations: int = 100
    cost_tolerance: float = 1e-10
    step_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-4
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_escalations: int = 20
    lower_bounds: Tuple[float, ...] = DEFAULT_LOWER_BOUNDS

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError('max_iterations must be >= 1')
        if min(self.cost_tolerance, self.step_tolerance, self.gradient_tolerance) <= 0:
            raise ValueError('Tolerances must be > 0')
        if self.damping_init <= 0 or self.damping_up <= 1 or not (0 < self.damping_down < 1):
            raise ValueError('Damping factors must be > 0 with up > 1 and down < 1')
        if len(self.lower_bounds) != 6:
            raise ValueError('lower_bounds needs six entries')
        bounds = self.lower_bounds
        if bounds[1] < 0 or bounds[3] < 0 or bounds[5] < 0:
            raise ValueError('Lower bounds of a, c, e must be >= 0')
        if bounds[2] < 1e-6 or bounds[4] < 1e-6:
            raise ValueError('Lower bounds of b, d must be >= 1e-6')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'max_iterations': self.max_iterations,
            'cost_tolerance': self.cost_tolerance,
            'step_tolerance': self.step_tolerance,
            'gradient_tolerance': self.gradient_tolerance,
            'damping_init': self.damping_init,
            'damping_up': self.damping_up,
            'damping_down': self.damping_down,
            'max_escalations': self.max_escalations
        }


@dataclass(frozen=True, eq=False)
class FitResult:
    """Converged (or abandoned) coefficients for one line"""
    coefficients: ModelCoefficients
    rmse: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    termination_reason: TerminationReason
    profile: Optional[LineProfile] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        data = self.coefficients.to_dict()
        data['rmse'] = self.rmse
        data['iterations'] = self.iterations
        data['converged'] = self.converged
        data['termination_reason'] = self.termination_reason.value
        return data
