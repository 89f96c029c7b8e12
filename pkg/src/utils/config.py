"""Run configuration with layered sources.

Precedence, highest first: command-line flags, JSON config file (``--config``),
environment (CAIDC_JOBS, CAIDC_DELTA_Y, CAIDC_BLOOD_BASELINE,
CAIDC_CALC_THRESHOLD), built-in defaults.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.core.stats import PERMUTATION_SEED
from src.models import AccuracyPolicy, FitConfig
from src.utils.errors import IoFailureError
from src.utils.validation import parse_slice_range

logger = logging.getLogger(__name__)

ENVIRONMENT = {
    'jobs': 'CAIDC_JOBS',
    'delta_y': 'CAIDC_DELTA_Y',
    'blood_baseline': 'CAIDC_BLOOD_BASELINE',
    'calc_threshold': 'CAIDC_CALC_THRESHOLD',
}


@dataclass
class RunConfig:
    volume: Optional[str] = None
    mask: Optional[str] = None
    out: Optional[str] = None
    truth: Optional[str] = None
    delta_y: float = 0.002
    blood_baseline: float = 40.0
    calc_threshold: float = 600.0
    w_th: float = 2.0
    w_pix: float = 1.0
    max_iterations: int = 100
    cost_tolerance: float = 1e-10
    step_tolerance: float = 1e-10
    # Seeds the permutation null of small Kruskal-Wallis tests
    seed: int = PERMUTATION_SEED
    jobs: int = 1

    # Slice ranges such as '10-30' or '3,5,7-9'
    slices: Optional[str] = None
    normal_slices: Optional[str] = None
    aneurysm_slices: Optional[str] = None
    branch_slices: Optional[str] = None
    thrombus_slice: Optional[int] = None
    rows: Optional[str] = None

    def policy(self) -> AccuracyPolicy:
        return AccuracyPolicy(delta_y=self.delta_y)

    def fit_config(self) -> FitConfig:
        return FitConfig(max_iterations=self.max_iterations, cost_tolerance=self.cost_tolerance,
                         step_tolerance=self.step_tolerance)

    def slice_list(self, name: str) -> Optional[List[int]]:
        """Parsed slice range field, or None when unset"""
        value = getattr(self, name)
        if value is None or value == '':
            return None
        return parse_slice_range(value)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    kind = {item.name: item.type for item in fields(RunConfig)}[name]
    if kind is int or name == 'thrombus_slice':
        return int(value)
    if kind is float:
        return float(value)
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    return str(value)


def _from_environment() -> Dict[str, Any]:
    values = {}
    for name, variable in ENVIRONMENT.items():
        raw = os.getenv(variable)
        if raw not in (None, ''):
            values[name] = raw
    return values


def _from_file(path) -> Dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise IoFailureError(f'Cannot read config {path}: {str(e)}') from e
    if not isinstance(data, dict):
        raise ValueError(f'Config {path} must hold a JSON object')
    return data


def load_run_config(overrides: Optional[Dict[str, Any]] = None, config_path=None) -> RunConfig:
    """
    Merge defaults, environment, config file and explicit overrides

    ``overrides`` entries that are None are ignored so unset CLI flags fall
    through to the lower layers.

    Raises:
        ValueError: on unknown config keys or unconvertible values
    """
    known = {item.name for item in fields(RunConfig)}
    layers = [_from_environment()]
    if config_path:
        layers.append(_from_file(config_path))
    layers.append({k: v for k, v in (overrides or {}).items() if v is not None})

    merged: Dict[str, Any] = {}
    for layer in layers:
        unknown = set(layer) - known
        if unknown:
            raise ValueError(f'Unknown config fields: {", ".join(sorted(unknown))}')
        merged.update(layer)

    config = RunConfig(**{name: _coerce(name, value) for name, value in merged.items()})
    logger.debug(f'Run config: {config.to_dict()}')
    return config
