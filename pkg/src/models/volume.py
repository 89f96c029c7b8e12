from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class Volume:
    """3D image in HU (scale and intercept already applied).

    ``header_bytes`` keeps the original 348-byte NIfTI-1 header so fields this
    toolkit does not interpret survive a read-modify-write cycle.
    """
    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    datatype_code: int = 64
    header_bytes: Optional[bytes] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError('Volume data must be 3D')
        if min(data.shape) <= 0:
            raise ValueError('Volume dims must be > 0')
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ValueError('Volume spacing must be three positive values')
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, 'spacing', tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def n_slices(self) -> int:
        return self.dims[2]

    def slice_pixels(self, index: int) -> np.ndarray:
        return np.asarray(self.data[:, :, index], dtype=float)

    def with_data(self, data: np.ndarray) -> 'Volume':
        return Volume(data, self.spacing, self.datatype_code, self.header_bytes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dims': list(self.dims),
            'spacing': list(self.spacing),
            'datatype_code': self.datatype_code
        }
