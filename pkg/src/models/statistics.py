import enum
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple


class TestMethod(enum.Enum):
    EXACT = 'exact'
    NORMAL = 'normal'
    CHI_SQUARE = 'chi_square'
    PERMUTATION = 'permutation'


@dataclass(frozen=True)
class TestResult:
    """Result of one rank-based test.

    ``pair`` and ``p_adjusted`` are only set for post-hoc pairwise results.
    """
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    method: TestMethod
    n: Tuple[int, ...]
    tie_correction_applied: bool = False
    name: str = ''
    pair: Optional[Tuple[int, int]] = None
    p_adjusted: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f'p_value {self.p_value} outside [0, 1]')

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'name': self.name,
            'statistic': self.statistic,
            'p_value': self.p_value,
            'method': self.method.value,
            'n': list(self.n),
            'tie_correction_applied': self.tie_correction_applied
        }
        if self.pair is not None:
            data['pair'] = list(self.pair)
            data['p_adjusted'] = self.p_adjusted
        return data
