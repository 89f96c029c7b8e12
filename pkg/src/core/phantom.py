"""Deterministic synthetic lines, slices and volumes with known ground truth.

Slices are separable: every row and column of a plain lumen is an exact
edged-plateau profile whose inflections sit on the lumen border, so fits of
noiseless slices can be checked against the generating coefficients. Noise
is additive Gaussian from ``numpy.random.default_rng`` seeded with
``[scenario.seed, slice_index]``.
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import expit

from src.core import sigmoid_model
from src.core.slice_engine import propagate_mask, propagation_radius
from src.models import (Axis, LineProfile, ModelCoefficients, Scenario, ScenarioKind,
                        SliceData, SliceTruth, Volume)
from src.utils.errors import DataError, IoFailureError, ScenarioGeometryTooLargeForDimsError
from src.utils.validation import validate_scenario

logger = logging.getLogger(__name__)

# Pixels added on both sides of the lumen when a single line emulates segmentation
LINE_SPAN_MARGIN = 4

# Lobe support is truncated this many transition scales beyond its radius
LOBE_SUPPORT_SCALES = 8.0


def generate_line(truth: ModelCoefficients, n: int, noise_sigma: float = 0.0,
                  seed: int = 0) -> Tuple[LineProfile, ModelCoefficients]:
    """
    Sample the model at x = 0 .. n-1 and add seeded Gaussian noise

    The profile span covers the lumen (between the inflections) widened by
    four pixels on each side and clipped to the line.
    """
    if n < 8:
        raise ValueError('A line needs at least 8 samples')
    x = np.arange(n, dtype=float)
    values = sigmoid_model.evaluate(truth, x)
    if noise_sigma > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise_sigma, n)

    start = int(np.clip(math.ceil(truth.rising_inflection) - LINE_SPAN_MARGIN, 0, n - 1))
    end = int(np.clip(math.floor(truth.falling_inflection) + LINE_SPAN_MARGIN, 0, n - 1))
    if start > end:
        start, end = 0, n - 1
    return LineProfile(values, x0=0, axis=Axis.ROW, index=0, span=(start, end)), truth


def background_level(scenario: Scenario) -> float:
    """Baseline F0 shared by every slice of a scenario"""
    rng = np.random.default_rng(scenario.seed)
    return float(rng.normal(scenario.background_hu, scenario.background_sigma))


def radius_factor(scenario: Scenario, z: int, n_slices: int) -> float:
    if n_slices <= 1:
        return 1.0
    return 1.0 + scenario.z_variation * math.sin(2.0 * math.pi * z / n_slices)


def _check_geometry(scenario: Scenario, extent_rows: Tuple[float, float],
                    extent_cols: Tuple[float, float]):
    rows, cols = scenario.dims
    margin = propagation_radius(scenario.w_th, scenario.w_pix)
    top, bottom = extent_rows
    left, right = extent_cols
    if top - margin < 0 or left - margin < 0 or bottom + margin > rows - 1 or right + margin > cols - 1:
        raise ScenarioGeometryTooLargeForDimsError(
            f'{scenario.kind.value} lumen of {scenario.lumen_diameter_mm:g} mm plus a '
            f'{margin:g} px P-region does not fit in {rows}x{cols} pixels')


def edge_profile(coordinates: np.ndarray, start: float, end: float, rising: float,
                 falling: float) -> np.ndarray:
    """Unit-height edged plateau with inflections at ``start`` and ``end``"""
    return expit(falling * (end - coordinates)) - expit(rising * (start - coordinates))


def generate_slice(scenario: Scenario, z: int = 0, scale: float = 1.0) -> Tuple[SliceData, SliceTruth]:
    """
    Build one slice of the scenario

    The lumen is the outer product of a vertical and a horizontal edged
    plateau, so every row and every column is an exact model. Clot rows
    scale their amplitude and flatten their rising edge; a branch lobe
    overrides the pixels where it is brighter. The S-region is the half
    maximum of the lumen.

    Args:
        scenario: geometry, amplitude and noise settings
        z: slice index; selects the noise stream
        scale: lumen radius multiplier (volumes vary it smoothly along z)

    Returns:
        (SliceData with S- and P-masks, SliceTruth)

    Raises:
        ScenarioGeometryTooLargeForDimsError: if the lumen and its P-region
            do not fit inside the matrix
    """
    report = validate_scenario(scenario)
    if not report['valid']:
        raise ValueError(f"Invalid scenario: {report['message']}")

    rows, cols = scenario.dims
    row_mm, col_mm = scenario.spacing
    radius_mm = scenario.lumen_diameter_mm / 2.0 * scale
    ry, rx = radius_mm / row_mm, radius_mm / col_mm
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0

    branched = scenario.kind is ScenarioKind.BRANCHING and z in scenario.branch_slices
    lobe_radius = scenario.branch_lobe_factor * rx
    right_extent = cx + rx + lobe_radius if branched else cx + rx
    _check_geometry(scenario, (cy - ry, cy + ry), (cx - rx, right_extent))

    f0 = background_level(scenario)
    steepness = scenario.steepness
    y = np.arange(rows, dtype=float)
    x = np.arange(cols, dtype=float)
    vertical = edge_profile(y, cy - ry, cy + ry, steepness, steepness)

    # Rows nearest the center carry the clot
    crossing = [i for i in range(rows) if abs(i - cy) < ry]
    clot = set()
    if scenario.kind is ScenarioKind.THROMBUS:
        clot = set(sorted(crossing, key=lambda i: (abs(i - cy), i))[:scenario.clot_rows])

    image = np.empty((rows, cols), dtype=float)
    row_coefficients: Dict[int, ModelCoefficients] = {}
    for i in range(rows):
        rising_b = steepness
        amplitude = scenario.amplitude * float(vertical[i])
        if i in clot:
            rising_b *= scenario.clot_steepness_factor
            amplitude *= scenario.clot_amplitude_factor
        coeffs = ModelCoefficients(f0=f0, a=amplitude, b=rising_b, c=rising_b * (cx - rx),
                                   d=steepness, e=steepness * (cx + rx))
        row_coefficients[i] = coeffs
        image[i] = sigmoid_model.evaluate(coeffs, x)
    s_mask = image - f0 >= scenario.amplitude / 2.0

    model_rows = set(range(rows))
    if branched:
        ii, jj = np.mgrid[0:rows, 0:cols].astype(float)
        lobe_x = cx + rx
        distance = np.hypot(ii - cy, jj - lobe_x)
        support = distance <= lobe_radius + LOBE_SUPPORT_SCALES / steepness
        lobe = np.where(
            support,
            f0 + scenario.amplitude * scenario.branch_amplitude_factor
            * expit(steepness * (lobe_radius - distance)),
            f0)
        touched = lobe > image
        image = np.where(touched, lobe, image)
        s_mask |= distance <= lobe_radius
        model_rows -= set(np.flatnonzero(touched.any(axis=1)).tolist())

    observed = image
    if scenario.noise_sigma > 0:
        rng = np.random.default_rng([scenario.seed, z])
        observed = image + rng.normal(0.0, scenario.noise_sigma, image.shape)

    p_mask = propagate_mask(s_mask, scenario.w_th, scenario.w_pix)
    covered = set(np.flatnonzero(p_mask.any(axis=1)).tolist())
    slice_data = SliceData(observed, s_mask, p_mask, spacing=(row_mm, col_mm), slice_index=z)
    truth = SliceTruth(
        slice_index=z,
        image=image,
        f0=f0,
        lumen_diameter_mm=2.0 * radius_mm,
        row_coefficients={i: row_coefficients[i] for i in sorted(covered)},
        model_rows=tuple(sorted(model_rows & covered))
    )
    return slice_data, truth


def generate_volume(scenario: Scenario, n_slices: int) -> Tuple[Volume, Volume, List[SliceTruth]]:
    """
    Stack ``n_slices`` slices along the third axis

    The lumen radius follows 1 + z_variation * sin(2 pi z / n_slices), so a
    single slice reproduces ``generate_slice(scenario)``.

    Returns:
        (HU volume, uint8 S-mask volume, per-slice truth)
    """
    if n_slices < 1:
        raise ValueError('n_slices must be >= 1')
    rows, cols = scenario.dims
    data = np.empty((rows, cols, n_slices), dtype=float)
    masks = np.zeros((rows, cols, n_slices), dtype=np.uint8)
    truths = []
    for z in range(n_slices):
        slice_data, truth = generate_slice(scenario, z, radius_factor(scenario, z, n_slices))
        data[:, :, z] = slice_data.pixels
        masks[:, :, z] = slice_data.s_mask
        truths.append(truth)

    spacing = (scenario.spacing[0], scenario.spacing[1], scenario.slice_thickness)
    logger.info(f'Generated {scenario.kind.value} phantom: {rows}x{cols}x{n_slices}, '
                f'sigma {scenario.noise_sigma:g} HU, seed {scenario.seed}')
    return (Volume(data, spacing, datatype_code=16),
            Volume(masks, spacing, datatype_code=2),
            truths)


def save_truth(path, scenario: Scenario, truths: List[SliceTruth]) -> Path:
    """Write the scenario and per-slice ground truth as JSON"""
    path = Path(path)
    payload = {'scenario': scenario.to_dict(), 'slices': [truth.to_dict() for truth in truths]}
    try:
        path.write_text(json.dumps(payload, indent=2), encoding='utf-8')
    except OSError as e:
        raise IoFailureError(f'Cannot write {path}: {str(e)}') from e
    return path


def load_truth(path) -> Dict[int, Dict[int, ModelCoefficients]]:
    """
    Read a truth file back as {slice_index: {row: coefficients}}

    Only rows whose profile is exactly the model are returned.

    Raises:
        IoFailureError, DataError: if the file is unreadable or malformed
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise IoFailureError(f'Cannot read {path}: {str(e)}') from e
    except ValueError as e:
        raise DataError(f'{path}: not a JSON truth file: {str(e)}') from e

    truth = {}
    try:
        for entry in payload.get('slices', []):
            model_rows = set(entry.get('model_rows', []))
            truth[int(entry['slice_index'])] = {
                int(row): ModelCoefficients.from_dict(coeffs)
                for row, coeffs in entry.get('rows', {}).items()
                if int(row) in model_rows
            }
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f'{path}: malformed truth entry: {str(e)}') from e
    return truth
