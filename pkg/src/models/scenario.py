import enum
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from .coefficients import ModelCoefficients


class ScenarioKind(enum.Enum):
    NORM = 'norm'
    ANEURYSM = 'aneurysm'
    THROMBUS = 'thrombus'
    BRANCHING = 'branching'


@dataclass(frozen=True)
class Scenario:
    """Phantom generation settings; ``seed`` fully determines the output.

    Background level and spread are plumbing defaults, not measured values.
    """
    kind: ScenarioKind = ScenarioKind.NORM
    lumen_diameter_mm: float = 20.0
    noise_sigma: float = 10.0
    seed: int = 0
    dims: Tuple[int, int] = (64, 64)
    spacing: Tuple[float, float] = (1.0, 1.0)
    slice_thickness: float = 1.0
    amplitude: float = 300.0
    steepness: float = 1.0
    background_hu: float = -80.0
    background_sigma: float = 15.0
    w_th: float = 2.0
    w_pix: float = 1.0
    z_variation: float = 0.05

    # Thrombus: band of rows whose rising edge touches the clot
    clot_rows: int = 10
    clot_steepness_factor: float = 0.5
    clot_amplitude_factor: float = 0.85

    # Branching: lateral lobe on the branch slices
    branch_slices: Tuple[int, ...] = ()
    branch_lobe_factor: float = 1.0
    branch_amplitude_factor: float = 0.6

    def with_changes(self, **changes) -> 'Scenario':
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = {}
        for item in fields(self):
            value = getattr(self, item.name)
            if isinstance(value, enum.Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            data[item.name] = value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Scenario':
        known = {item.name for item in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f'Unknown scenario fields: {", ".join(sorted(unknown))}')
        values = dict(data)
        if 'kind' in values:
            values['kind'] = ScenarioKind(values['kind'])
        if 'dims' in values:
            values['dims'] = tuple(int(n) for n in values['dims'])
        if 'spacing' in values:
            values['spacing'] = tuple(float(s) for s in values['spacing'])
        if 'branch_slices' in values:
            values['branch_slices'] = tuple(int(z) for z in values['branch_slices'])
        return cls(**values)

    @classmethod
    def from_json_file(cls, path) -> 'Scenario':
        with open(Path(path), 'r', encoding='utf-8') as handle:
            return cls.from_dict(json.load(handle))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding='utf-8')
        return path


@dataclass(frozen=True, eq=False)
class SliceTruth:
    """Ground truth of one generated slice.

    ``row_coefficients`` maps every row the P-region reaches to the
    coefficients it was generated from; ``model_rows`` lists the rows whose
    profile is exactly that model (rows touched by a branch lobe are not).
    """
    slice_index: int
    image: np.ndarray
    f0: float
    lumen_diameter_mm: float
    row_coefficients: Dict[int, ModelCoefficients] = field(default_factory=dict)
    model_rows: Tuple[int, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'slice_index': self.slice_index,
            'f0': self.f0,
            'lumen_diameter_mm': self.lumen_diameter_mm,
            'model_rows': list(self.model_rows),
            'rows': {str(row): coeffs.to_dict() for row, coeffs in sorted(self.row_coefficients.items())}
        }
