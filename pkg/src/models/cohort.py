import enum
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .coefficients import EdgeMetrics
from .profile import Axis


class DiameterClass(enum.Enum):
    NORM = 'norm'
    DILATATION = 'dilatation'
    ANEURYSM = 'aneurysm'


@dataclass(frozen=True)
class LineMetrics:
    """Hemodynamic metrics of one fitted line"""
    slice_index: int
    axis: Axis
    rising: EdgeMetrics
    falling: EdgeMetrics
    plateau_width: float
    dx_over_wpl_rising: Optional[float]
    dx_over_wpl_falling: Optional[float]
    estimated_diameter_mm: float

    @property
    def degenerate(self) -> bool:
        return self.plateau_width <= 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'slice_index': self.slice_index,
            'axis': self.axis.value,
            'rising': self.rising.to_dict(),
            'falling': self.falling.to_dict(),
            'plateau_width': self.plateau_width,
            'dx_over_wpl_rising': self.dx_over_wpl_rising,
            'dx_over_wpl_falling': self.dx_over_wpl_falling,
            'estimated_diameter_mm': self.estimated_diameter_mm
        }


@dataclass(frozen=True)
class CohortReport:
    """Outcome of one group comparison; secondary comparisons live in ``details``"""
    metric: str
    groups: Tuple[str, ...]
    samples: Tuple[Tuple[float, ...], ...]
    test: str
    statistic: float
    p_value: float
    direction: str
    excluded_lines: int = 0
    details: Tuple['CohortReport', ...] = ()
    notes: Tuple[str, ...] = ()
    flagged_slices: Tuple[int, ...] = ()
    pairwise: Tuple[Dict[str, Any], ...] = ()

    @property
    def n(self) -> List[int]:
        return [len(sample) for sample in self.samples]

    def detail(self, metric: str) -> 'CohortReport':
        for report in self.details:
            if report.metric == metric:
                return report
        raise KeyError(metric)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'metric': self.metric,
            'groups': list(self.groups),
            'n': self.n,
            'test': self.test,
            'statistic': self.statistic,
            'p_value': self.p_value,
            'direction': self.direction,
            'excluded_lines': self.excluded_lines
        }
        if self.details:
            data['details'] = [report.to_dict() for report in self.details]
        if self.notes:
            data['notes'] = list(self.notes)
        if self.flagged_slices:
            data['flagged_slices'] = list(self.flagged_slices)
        if self.pairwise:
            data['pairwise'] = list(self.pairwise)
        return data


def as_sample(values: Sequence[float]) -> Tuple[float, ...]:
    return tuple(float(v) for v in values)
