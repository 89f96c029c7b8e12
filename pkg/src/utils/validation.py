import math
from typing import Any, Dict, Iterable, List

# Bounds shared by config and scenario checks
MIN_DELTA_Y = 0.0
MAX_DELTA_Y = 0.5
AMPLITUDE_RANGE_HU = (100.0, 500.0)


def make_report(violations: Iterable[str]) -> Dict[str, Any]:
    """
    Build a validation report from a list of violation messages
    Returns dict with 'valid' boolean, 'message' string and 'violations' list
    """
    violations = list(violations)
    if not violations:
        return {'valid': True, 'message': 'All checks passed', 'violations': []}
    return {
        'valid': False,
        'message': '; '.join(violations),
        'violations': violations
    }


def validate_positive(value: Any, name: str) -> List[str]:
    """Check that a value is a finite number greater than zero"""
    try:
        number = float(value)
    except (TypeError, ValueError):
        return [f'{name} must be a number']
    if not math.isfinite(number) or number <= 0:
        return [f'{name} must be > 0']
    return []


def validate_delta_y(delta_y: Any) -> List[str]:
    """Check the relative accuracy lies in (0, 0.5)"""
    try:
        value = float(delta_y)
    except (TypeError, ValueError):
        return ['delta_y must be a number']
    if not (MIN_DELTA_Y < value < MAX_DELTA_Y):
        return ['delta_y must lie in (0, 0.5)']
    return []


def validate_slice_range(value: Any, name: str) -> List[str]:
    """Validate a slice range string such as '10-30' or '3,5,7-9'"""
    if value is None or value == '':
        return []
    try:
        parse_slice_range(value)
    except ValueError as e:
        return [f'{name}: {str(e)}']
    return []


def parse_slice_range(value: str) -> List[int]:
    """
    Parse a slice range string into a sorted list of unique indices

    Args:
        value: comma separated indices or inclusive ranges, e.g. '3,5,7-9'

    Returns:
        list of int
    """
    indices = set()
    for part in str(value).split(','):
        part = part.strip()
        if not part:
            continue
        if '-' in part:
            start_text, end_text = part.split('-', 1)
            start, end = int(start_text), int(end_text)
            if start < 0 or end < start:
                raise ValueError(f'invalid range {part!r}')
            indices.update(range(start, end + 1))
        else:
            index = int(part)
            if index < 0:
                raise ValueError(f'negative index {part!r}')
            indices.add(index)
    if not indices:
        raise ValueError('empty slice range')
    return sorted(indices)


def validate_run_config(config) -> Dict[str, Any]:
    """
    Validate a RunConfig against the preconditions of the pipeline modules
    Returns a validation report
    """
    violations = []
    violations += validate_delta_y(config.delta_y)
    violations += validate_positive(config.w_th, 'w_th')
    violations += validate_positive(config.w_pix, 'w_pix')
    violations += validate_positive(config.max_iterations, 'max_iterations')
    violations += validate_positive(config.cost_tolerance, 'cost_tolerance')
    violations += validate_positive(config.step_tolerance, 'step_tolerance')
    violations += validate_positive(config.jobs, 'jobs')

    if not math.isfinite(float(config.blood_baseline)):
        violations.append('blood_baseline must be finite')
    if not math.isfinite(float(config.calc_threshold)):
        violations.append('calc_threshold must be finite')

    for name in ('slices', 'normal_slices', 'aneurysm_slices', 'branch_slices', 'rows'):
        violations += validate_slice_range(getattr(config, name, None), name)

    return make_report(violations)


def validate_scenario(scenario) -> Dict[str, Any]:
    """
    Validate a phantom scenario against the diameter thresholds and amplitude contract
    Returns a validation report
    """
    violations = []
    kind = scenario.kind.value
    diameter = float(scenario.lumen_diameter_mm)

    if diameter <= 0:
        violations.append('lumen_diameter_mm must be > 0')
    elif kind == 'norm' and diameter >= 25.0:
        violations.append('norm scenarios need lumen_diameter_mm < 25')
    elif kind == 'aneurysm' and diameter < 30.0:
        violations.append('aneurysm scenarios need lumen_diameter_mm >= 30')

    low, high = AMPLITUDE_RANGE_HU
    if not (low <= float(scenario.amplitude) <= high):
        violations.append(f'amplitude must lie in [{low:g}, {high:g}] HU')
    if float(scenario.noise_sigma) < 0:
        violations.append('noise_sigma must be >= 0')
    violations += validate_positive(scenario.steepness, 'steepness')
    violations += validate_positive(scenario.slice_thickness, 'slice_thickness')
    for value in scenario.spacing:
        violations += validate_positive(value, 'spacing')
    if min(scenario.dims) < 8:
        violations.append('dims must be at least 8 x 8')

    return make_report(violations)
