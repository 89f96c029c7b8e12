import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.utils.errors import GeometryError
from .profile import Axis, FitResult
from .statistics import TestResult


class Zone(enum.Enum):
    BASELINE = 'baseline'
    TRANSITION = 'transition'
    PLATEAU = 'plateau'
    UNFITTED = 'unfitted'


@dataclass(frozen=True, eq=False)
class SliceData:
    """One axial slice with its lumen (S) and propagated (P) masks"""
    pixels: np.ndarray
    s_mask: np.ndarray
    p_mask: np.ndarray
    spacing: Tuple[float, float] = (1.0, 1.0)
    slice_index: int = 0

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        s_mask = np.asarray(self.s_mask, dtype=bool)
        p_mask = np.asarray(self.p_mask, dtype=bool)
        object.__setattr__(self, 'pixels', pixels)
        object.__setattr__(self, 's_mask', s_mask)
        object.__setattr__(self, 'p_mask', p_mask)

        if pixels.ndim != 2:
            raise GeometryError('Slice pixels must be a 2D matrix')
        if s_mask.shape != pixels.shape or p_mask.shape != pixels.shape:
            raise GeometryError('Masks and pixels must share dimensions')
        if np.any(s_mask & ~p_mask):
            raise GeometryError('S-region must lie inside the P-region')
        if len(self.spacing) != 2 or min(self.spacing) <= 0:
            raise GeometryError('Spacing must be two positive values')

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def with_pixels(self, pixels: np.ndarray) -> 'SliceData':
        return SliceData(pixels, self.s_mask, self.p_mask, self.spacing, self.slice_index)

    def spacing_along(self, axis: Axis) -> float:
        """Physical size of one step along a row (columns) or along a column (rows)"""
        return float(self.spacing[1] if axis is Axis.ROW else self.spacing[0])


@dataclass(frozen=True, eq=False)
class LineFit:
    """One maximal P-region span on a row or column and its fit, if any"""
    axis: Axis
    index: int
    start: int
    end: int
    result: Optional[FitResult] = None
    error: Optional[str] = None

    @property
    def fitted(self) -> bool:
        return self.result is not None

    @property
    def usable(self) -> bool:
        """Fitted and converged; only these lines define zones and metrics"""
        return self.result is not None and self.result.converged

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def covers(self, position: int) -> bool:
        return self.start <= position <= self.end

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'axis': self.axis.value,
            'index': self.index,
            'start': self.start,
            'end': self.end,
            'fitted': self.fitted,
            'error': self.error
        }
        if self.result is not None:
            data.update(self.result.to_dict())
        return data


LineFits = Dict[int, List[LineFit]]


@dataclass(frozen=True, eq=False)
class CaidcField:
    """Composed deterministic component of one slice.

    ``zone`` and ``source`` are object matrices holding Zone / Axis members
    (None outside the P-region, and in ``source`` for unfitted pixels).
    """
    values: np.ndarray
    zone: np.ndarray
    source: np.ndarray
    row_fits: LineFits = field(default_factory=dict)
    column_fits: LineFits = field(default_factory=dict)
    row_model: Optional[np.ndarray] = None
    column_model: Optional[np.ndarray] = None
    pointwise: Optional[np.ndarray] = None
    transition_direction: Axis = Axis.ROW

    def zone_mask(self, zone: Zone) -> np.ndarray:
        return np.vectorize(lambda z: z is zone, otypes=[bool])(self.zone)

    def source_mask(self, axis: Axis) -> np.ndarray:
        return np.vectorize(lambda s: s is axis, otypes=[bool])(self.source)

    def zone_counts(self) -> Dict[str, int]:
        return {zone.value: int(self.zone_mask(zone).sum()) for zone in Zone}


@dataclass(frozen=True)
class DirectionReport:
    """Outcome of the transition-zone direction check"""
    kruskal: TestResult
    dunn: Tuple[TestResult, ...]
    direction: Axis
    overridden: bool
    field: Optional[CaidcField] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kruskal': self.kruskal.to_dict(),
            'dunn': [result.to_dict() for result in self.dunn],
            'direction': self.direction.value,
            'overridden': self.overridden
        }


@dataclass(frozen=True)
class GoodnessOfFit:
    p_value: float
    rmse: float
    n_pixels: int

    def to_dict(self) -> Dict[str, Any]:
        return {'p_value': self.p_value, 'rmse_hu': self.rmse, 'n_pixels': self.n_pixels}


@dataclass(frozen=True, eq=False)
class SliceOutcome:
    """Everything the per-slice pipeline produces"""
    slice_index: int
    field: CaidcField
    goodness: GoodnessOfFit
    direction: Optional[DirectionReport]
    calcinates_replaced: int

    @property
    def direction_override(self) -> bool:
        return bool(self.direction is not None and self.direction.overridden)

    def diagnostics_row(self) -> Dict[str, Any]:
        """Row of the per-slice diagnostics CSV"""
        return {
            'slice_index': self.slice_index,
            'p_value': self.goodness.p_value,
            'rmse_hu': self.goodness.rmse,
            'n_pixels': self.goodness.n_pixels,
            'direction_override': int(self.direction_override),
            'calcinates_replaced': self.calcinates_replaced
        }
