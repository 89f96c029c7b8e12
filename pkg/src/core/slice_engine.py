"""Per-slice CAiDC pipeline.

Order of work for one slice: calcinate suppression, independent fits of every
P-region span on every row and column, pointwise merge of the two model
surfaces, zone classification from the row fits, composition (transition
pixels from one direction, everything else from the merge), the optional
direction check, goodness-of-fit and CA elimination.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.core import sigmoid_model, stats
from src.core.lm_fitter import fit_line, initial_guess, rmse
from src.models import (AccuracyPolicy, Axis, CaidcField, DirectionReport, Edge, EdgeMetrics,
                        FitConfig, GoodnessOfFit, LineFit, LineFits, LineProfile,
                        MIN_PROFILE_LENGTH, SliceData, SliceOutcome, Volume, Zone)
from src.utils.errors import (AllCalcinateError, CaidcError, EmptyMaskError,
                              EndpointCollapseError, GeometryError, InsufficientDataError)

logger = logging.getLogger(__name__)

CALCINATE_REPLACEMENT_FRACTION = 0.6
DEFAULT_CALC_THRESHOLD = 600.0
DEFAULT_BLOOD_BASELINE = 40.0
DIRECTION_ALPHA = 0.05
MIN_DIRECTION_SAMPLES = 3


@dataclass(frozen=True)
class SliceSettings:
    """Everything ``process_slice`` needs besides the slice itself"""
    policy: AccuracyPolicy = field(default_factory=AccuracyPolicy)
    fit_config: FitConfig = field(default_factory=FitConfig)
    calc_threshold: float = DEFAULT_CALC_THRESHOLD
    w_th: float = 2.0
    w_pix: float = 1.0
    check_direction: bool = True
    seed: int = stats.PERMUTATION_SEED


# ---------------------------------------------------------------- masks

def propagation_radius(w_th: float, w_pix: float) -> float:
    """P-region radius in pixels, 2 * wall thickness (mm) * pixels per mm"""
    if w_th <= 0 or w_pix <= 0:
        raise ValueError('w_th and w_pix must be > 0')
    return 2.0 * w_th * w_pix


def propagate_mask(s_mask: np.ndarray, w_th: float, w_pix: float) -> np.ndarray:
    """
    Dilate the S-region by a Euclidean disk of radius 2 * w_th * w_pix pixels

    Raises:
        EmptyMaskError: if the S-region has no pixel
    """
    s_mask = np.asarray(s_mask, dtype=bool)
    if not s_mask.any():
        raise EmptyMaskError('S-region is empty')
    radius = propagation_radius(w_th, w_pix)
    reach = int(math.floor(radius))
    yy, xx = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    structure = yy ** 2 + xx ** 2 <= radius ** 2
    return ndimage.binary_dilation(s_mask, structure=structure)


def suppress_calcinates(slice_data: SliceData,
                        calc_threshold: float = DEFAULT_CALC_THRESHOLD) -> Tuple[SliceData, int]:
    """
    Replace P-region pixels above ``calc_threshold`` by 60% of the brightest
    non-calcinate lumen pixel

    Returns:
        (slice copy, number of replaced pixels); the input is returned
        unchanged when nothing exceeds the threshold

    Raises:
        AllCalcinateError: if every S-region pixel exceeds the threshold
    """
    pixels = slice_data.pixels
    calcinate = slice_data.p_mask & (pixels > calc_threshold)
    count = int(calcinate.sum())
    if count == 0:
        return slice_data, 0

    reference = slice_data.s_mask & ~calcinate
    if not reference.any():
        raise AllCalcinateError(
            f'slice {slice_data.slice_index}: every lumen pixel exceeds {calc_threshold:g} HU')

    level = CALCINATE_REPLACEMENT_FRACTION * float(pixels[reference].max())
    suppressed = pixels.copy()
    suppressed[calcinate] = level
    logger.debug(f'slice {slice_data.slice_index}: {count} calcinate pixels set to {level:.1f} HU')
    return slice_data.with_pixels(suppressed), count


# ---------------------------------------------------------------- fitting

def line_spans(mask_line: Sequence[bool]) -> List[Tuple[int, int]]:
    """Maximal runs of True as inclusive (start, end) pairs"""
    padded = np.concatenate([[0], np.asarray(mask_line, dtype=np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return [(int(start), int(stop) - 1) for start, stop in zip(edges[::2], edges[1::2])]


def _fit_span(values: np.ndarray, axis: Axis, index: int, start: int, end: int,
              config: FitConfig) -> LineFit:
    if end - start + 1 < MIN_PROFILE_LENGTH:
        return LineFit(axis, index, start, end)
    try:
        profile = LineProfile(values[start:end + 1], x0=start, axis=axis, index=index,
                              span=(float(start), float(end)))
        result = fit_line(profile, initial_guess(profile), config)
        return LineFit(axis, index, start, end, result=result)
    except CaidcError as e:
        logger.debug(f'{axis.value} {index} [{start}, {end}] fit error: {str(e)}')
        return LineFit(axis, index, start, end, error=str(e))


def fit_directions(slice_data: SliceData, config: FitConfig = FitConfig()) -> Tuple[LineFits, LineFits]:
    """
    Fit every maximal P-region span of every row and every column

    Spans shorter than 8 pixels are recorded without a fit; a failing line
    keeps its error text and never aborts the slice.
    """
    if not slice_data.p_mask.any():
        raise EmptyMaskError(f'slice {slice_data.slice_index}: P-region is empty')

    row_fits: LineFits = {}
    for i in range(slice_data.shape[0]):
        spans = line_spans(slice_data.p_mask[i])
        if spans:
            row_fits[i] = [_fit_span(slice_data.pixels[i], Axis.ROW, i, s, e, config) for s, e in spans]

    column_fits: LineFits = {}
    for j in range(slice_data.shape[1]):
        spans = line_spans(slice_data.p_mask[:, j])
        if spans:
            column_fits[j] = [_fit_span(slice_data.pixels[:, j], Axis.COLUMN, j, s, e, config)
                              for s, e in spans]
    return row_fits, column_fits


def _iter_fitted(fits: LineFits, usable: bool = False) -> Iterable[LineFit]:
    for index in sorted(fits):
        for line in fits[index]:
            if (line.usable if usable else line.fitted):
                yield line


def model_matrix(fits: LineFits, shape: Tuple[int, int], axis: Axis, usable: bool = False) -> np.ndarray:
    """Model values of every fitted (or only converged) span placed on the slice grid; NaN elsewhere"""
    values = np.full(shape, np.nan)
    for line in _iter_fitted(fits, usable):
        coordinates = np.arange(line.start, line.end + 1, dtype=float)
        model = sigmoid_model.evaluate(line.result.coefficients, coordinates)
        if axis is Axis.ROW:
            values[line.index, line.start:line.end + 1] = model
        else:
            values[line.start:line.end + 1, line.index] = model
    return values


def _object_matrix(shape: Tuple[int, int]) -> np.ndarray:
    return np.full(shape, None, dtype=object)


def _matches(matrix: np.ndarray, member) -> np.ndarray:
    return np.vectorize(lambda item: item is member, otypes=[bool])(matrix)


# ---------------------------------------------------------------- merge and zones

def merge_pointwise(row_fits: LineFits, column_fits: LineFits, slice_data: SliceData) -> CaidcField:
    """
    Per pixel, keep the direction whose model is closer to the observation

    Ties go to the row. With a single direction available that direction is
    used; with none the pixel is unfitted (NaN). Only ``values``, ``source``
    and the model matrices are filled; zones are left to ``classify_zones``
    except for unfitted pixels.
    """
    shape = slice_data.shape
    observed = slice_data.pixels
    row_model = model_matrix(row_fits, shape, Axis.ROW)
    column_model = model_matrix(column_fits, shape, Axis.COLUMN)

    has_row = np.isfinite(row_model) & slice_data.p_mask
    has_column = np.isfinite(column_model) & slice_data.p_mask
    with np.errstate(invalid='ignore'):
        use_row = has_row & (~has_column | (np.abs(row_model - observed) <= np.abs(column_model - observed)))
    use_column = has_column & ~use_row

    values = np.where(use_row, row_model, np.where(use_column, column_model, np.nan))
    source = _object_matrix(shape)
    source[use_row] = Axis.ROW
    source[use_column] = Axis.COLUMN
    zone = _object_matrix(shape)
    zone[slice_data.p_mask & ~(use_row | use_column)] = Zone.UNFITTED

    return CaidcField(values=values, zone=zone, source=source, row_fits=row_fits,
                      column_fits=column_fits, row_model=row_model, column_model=column_model,
                      pointwise=values.copy())


def adjust_transition_endpoints(profile: LineProfile, metrics: EdgeMetrics,
                                caidc_values: Sequence[float]) -> EdgeMetrics:
    """
    Move the outer endpoint one pixel at a time toward the lumen until the
    CAiDC there is strictly positive

    Values between samples are linearly interpolated from ``caidc_values``,
    which are aligned with ``profile.coordinates``.

    Raises:
        EndpointCollapseError: if the endpoint reaches the inflection point
    """
    coordinates = profile.coordinates
    caidc_values = np.asarray(caidc_values, dtype=float)
    step = 1.0 if metrics.edge is Edge.RISING else -1.0

    outer = metrics.outer_x
    while float(np.interp(outer, coordinates, caidc_values)) <= 0.0:
        outer += step
        if (outer - metrics.inflection_x) * step >= 0:
            raise EndpointCollapseError(
                f'{profile.axis.value} {profile.index}: {metrics.edge.value} endpoint '
                f'reached the inflection at {metrics.inflection_x:.2f}')

    if outer == metrics.outer_x:
        return metrics
    return metrics.with_outer(outer)


def line_edges(line: LineFit, policy: AccuracyPolicy) -> Tuple[EdgeMetrics, EdgeMetrics]:
    """
    Rising and falling edges of a fitted line with adjusted outer endpoints

    Falls back to the closed-form endpoints when adjustment collapses an edge.

    Raises:
        IllFormedModelError: if the fitted inflections are out of order
    """
    coeffs = line.result.coefficients
    rising = sigmoid_model.edge_metrics(coeffs, policy, Edge.RISING)
    falling = sigmoid_model.edge_metrics(coeffs, policy, Edge.FALLING)
    profile = line.result.profile
    if profile is None:
        return rising, falling

    caidc = sigmoid_model.evaluate(coeffs, profile.coordinates)
    try:
        return (adjust_transition_endpoints(profile, rising, caidc),
                adjust_transition_endpoints(profile, falling, caidc))
    except EndpointCollapseError as e:
        logger.debug(f'Endpoint adjustment skipped: {str(e)}')
        return rising, falling


def _zone_at(x: float, rising: EdgeMetrics, falling: EdgeMetrics) -> Zone:
    if rising.contains(x) or falling.contains(x):
        return Zone.TRANSITION
    if rising.inner_x < x < falling.inner_x:
        return Zone.PLATEAU
    return Zone.BASELINE


def _line_zones(fits: LineFits, policy: AccuracyPolicy, shape: Tuple[int, int], axis: Axis) -> np.ndarray:
    zones = _object_matrix(shape)
    for line in _iter_fitted(fits, usable=True):
        try:
            rising, falling = line_edges(line, policy)
        except CaidcError as e:
            logger.debug(f'{axis.value} {line.index}: no zones from this line: {str(e)}')
            continue
        for position in range(line.start, line.end + 1):
            zone = _zone_at(float(position), rising, falling)
            if axis is Axis.ROW:
                zones[line.index, position] = zone
            else:
                zones[position, line.index] = zone
    return zones


def classify_zones(row_fits: LineFits, policy: AccuracyPolicy, p_mask: np.ndarray,
                   column_fits: Optional[LineFits] = None) -> np.ndarray:
    """
    Label every P-region pixel baseline, transition, plateau or unfitted

    Zones come from the pixel's row fit; the column fit decides only where no
    usable row fit covers the pixel. Pixels no fit covers are unfitted.
    """
    p_mask = np.asarray(p_mask, dtype=bool)
    zones = _line_zones(row_fits, policy, p_mask.shape, Axis.ROW)
    if column_fits:
        column_zones = _line_zones(column_fits, policy, p_mask.shape, Axis.COLUMN)
        missing = _matches(zones, None)
        zones[missing] = column_zones[missing]
    zones[p_mask & _matches(zones, None)] = Zone.UNFITTED
    zones[~p_mask] = None
    return zones


# ---------------------------------------------------------------- composition

def compose_caidc(slice_data: SliceData, row_fits: LineFits, column_fits: LineFits,
                  policy: AccuracyPolicy, transition_direction: Axis = Axis.ROW) -> CaidcField:
    """
    Compose the CAiDC of a slice from stored fits

    Transition pixels take the converged model of ``transition_direction``
    (the row by default); plateau and baseline pixels, and transition pixels
    that direction has no converged fit for, take the pointwise merge. A pixel
    the merge could fill but no fit could classify is labelled baseline.
    """
    merged = merge_pointwise(row_fits, column_fits, slice_data)
    zone = classify_zones(row_fits, policy, slice_data.p_mask, column_fits)

    values = merged.values.copy()
    source = merged.source.copy()
    filled = np.isfinite(values)
    unclassified = filled & _matches(zone, Zone.UNFITTED)
    zone[unclassified] = Zone.BASELINE
    zone[slice_data.p_mask & ~filled] = Zone.UNFITTED

    fits = row_fits if transition_direction is Axis.ROW else column_fits
    preferred = model_matrix(fits, slice_data.shape, transition_direction, usable=True)
    transition = _matches(zone, Zone.TRANSITION) & np.isfinite(preferred)
    values[transition] = preferred[transition]
    source[transition] = transition_direction

    return CaidcField(values=values, zone=zone, source=source, row_fits=row_fits,
                      column_fits=column_fits, row_model=merged.row_model,
                      column_model=merged.column_model, pointwise=merged.pointwise,
                      transition_direction=transition_direction)


def compare_edge_directions(slice_data: SliceData, row_fits: LineFits, column_fits: LineFits,
                            composed: CaidcField, policy: AccuracyPolicy = AccuracyPolicy(),
                            seed: int = stats.PERMUTATION_SEED) -> DirectionReport:
    """
    Test whether the row model, the column model and the pointwise merge agree
    on transition pixels

    Kruskal-Wallis over the three samples; when p < 0.05 the direction whose
    Dunn comparison against the pointwise sample has the larger unadjusted p
    is kept for transition pixels and the field is recomposed. ``seed`` drives
    the permutation null used when there are few transition pixels.

    Raises:
        InsufficientDataError: fewer than 3 transition pixels with all three values
    """
    mask = (composed.zone_mask(Zone.TRANSITION) & np.isfinite(composed.row_model)
            & np.isfinite(composed.column_model) & np.isfinite(composed.pointwise))
    if int(mask.sum()) < MIN_DIRECTION_SAMPLES:
        raise InsufficientDataError(
            f'slice {slice_data.slice_index}: {int(mask.sum())} transition pixels with both directions')

    samples = [composed.row_model[mask], composed.column_model[mask], composed.pointwise[mask]]
    kruskal = stats.kruskal_wallis(samples, seed=seed)
    dunn = stats.dunn_posthoc(samples)

    direction = composed.transition_direction
    if kruskal.p_value < DIRECTION_ALPHA:
        p_row = next(r.p_value for r in dunn if r.pair == (0, 2))
        p_column = next(r.p_value for r in dunn if r.pair == (1, 2))
        direction = Axis.COLUMN if p_column > p_row else Axis.ROW

    overridden = direction is not Axis.ROW
    recomposed = composed
    if direction is not composed.transition_direction:
        logger.info(f'slice {slice_data.slice_index}: transition zones taken from {direction.value} fits '
                    f'(Kruskal-Wallis p={kruskal.p_value:.3g})')
        recomposed = compose_caidc(slice_data, row_fits, column_fits, policy, direction)

    return DirectionReport(kruskal=kruskal, dunn=tuple(dunn), direction=direction,
                           overridden=overridden, field=recomposed)


# ---------------------------------------------------------------- outputs

def goodness_of_fit(slice_data: SliceData, composed: CaidcField) -> GoodnessOfFit:
    """Two-sided U-test and RMSE between observed and composed P-region values"""
    mask = slice_data.p_mask & np.isfinite(composed.values)
    observed = slice_data.pixels[mask]
    predicted = composed.values[mask]
    if observed.size == 0:
        raise InsufficientDataError(f'slice {slice_data.slice_index}: no composed pixel')
    test = stats.mann_whitney_u(observed, predicted)
    return GoodnessOfFit(p_value=test.p_value, rmse=rmse(observed, predicted), n_pixels=int(observed.size))


def eliminate_ca(slice_data: SliceData, composed: CaidcField,
                 blood_baseline: float = DEFAULT_BLOOD_BASELINE) -> SliceData:
    """Inside the S-region, observed - CAiDC + blood_baseline; other pixels pass through"""
    mask = slice_data.s_mask & np.isfinite(composed.values)
    pixels = slice_data.pixels.copy()
    pixels[mask] = slice_data.pixels[mask] - composed.values[mask] + blood_baseline
    return slice_data.with_pixels(pixels)


def geometric_center(s_mask: np.ndarray) -> Tuple[int, int]:
    """
    Centroid of the mask rounded half toward the smaller index

    A centroid outside the mask snaps to the nearest mask pixel, ties going to
    the smaller row and then the smaller column.
    """
    s_mask = np.asarray(s_mask, dtype=bool)
    if not s_mask.any():
        raise EmptyMaskError('S-region is empty')
    center = ndimage.center_of_mass(s_mask)
    row, col = (int(math.ceil(c - 0.5)) for c in center)
    if s_mask[row, col]:
        return row, col

    candidates = np.argwhere(s_mask)
    distances = (candidates[:, 0] - center[0]) ** 2 + (candidates[:, 1] - center[1]) ** 2
    nearest = candidates[int(np.argmin(distances))]
    return int(nearest[0]), int(nearest[1])


def estimate_roi(composed: CaidcField, threshold_hu: Optional[float] = None) -> np.ndarray:
    """
    Pixels where the CAiDC stands out from its baseline F0

    Without a threshold the ROI is the union of transition and plateau zones;
    with one it is every composed value above ``threshold_hu``.
    """
    if threshold_hu is None:
        return composed.zone_mask(Zone.TRANSITION) | composed.zone_mask(Zone.PLATEAU)
    with np.errstate(invalid='ignore'):
        return np.isfinite(composed.values) & (composed.values > threshold_hu)


# ---------------------------------------------------------------- drivers

def process_slice(slice_data: SliceData, settings: SliceSettings = SliceSettings()) -> SliceOutcome:
    """Run the whole per-slice pipeline and collect its diagnostics"""
    suppressed, replaced = suppress_calcinates(slice_data, settings.calc_threshold)
    row_fits, column_fits = fit_directions(suppressed, settings.fit_config)
    composed = compose_caidc(suppressed, row_fits, column_fits, settings.policy)

    direction = None
    if settings.check_direction:
        try:
            direction = compare_edge_directions(suppressed, row_fits, column_fits, composed, settings.policy,
                                                settings.seed)
            composed = direction.field
        except InsufficientDataError as e:
            logger.info(f'Direction check skipped: {str(e)}')

    goodness = goodness_of_fit(suppressed, composed)
    logger.debug(f'slice {slice_data.slice_index}: rmse {goodness.rmse:.2f} HU, p {goodness.p_value:.3g}')
    return SliceOutcome(slice_index=slice_data.slice_index, field=composed, goodness=goodness,
                        direction=direction, calcinates_replaced=replaced)


def _process_safely(slice_data: SliceData, settings: SliceSettings) -> Optional[SliceOutcome]:
    try:
        return process_slice(slice_data, settings)
    except CaidcError as e:
        logger.error(f'slice {slice_data.slice_index} error: {str(e)}')
        return None


def volume_slices(volume: Volume, s_mask_volume: Volume, w_th: float, w_pix: float,
                  slices: Optional[Iterable[int]] = None) -> List[SliceData]:
    """
    SliceData for every requested slice with a nonempty S-region

    Raises:
        GeometryError: if the mask volume does not match the image volume
    """
    if volume.dims != s_mask_volume.dims:
        raise GeometryError(f'Mask dims {s_mask_volume.dims} differ from volume dims {volume.dims}')
    indices = range(volume.n_slices) if slices is None else sorted(set(slices))
    result = []
    for z in indices:
        if not 0 <= z < volume.n_slices:
            raise GeometryError(f'Slice {z} outside volume of {volume.n_slices} slices')
        s_mask = np.asarray(s_mask_volume.data[:, :, z]) != 0
        if not s_mask.any():
            logger.debug(f'slice {z}: empty S-region, skipped')
            continue
        p_mask = propagate_mask(s_mask, w_th, w_pix)
        result.append(SliceData(volume.slice_pixels(z), s_mask, p_mask,
                                spacing=(volume.spacing[0], volume.spacing[1]), slice_index=z))
    return result


def process_volume(volume: Volume, s_mask_volume: Volume, settings: SliceSettings = SliceSettings(),
                   jobs: int = 1, slices: Optional[Iterable[int]] = None) -> List[SliceOutcome]:
    """
    Process every slice with a nonempty S-region, in slice order

    ``jobs`` > 1 spreads slices over a process pool; results are identical to
    a sequential run. Slices that fail are logged and left out.
    """
    work = volume_slices(volume, s_mask_volume, settings.w_th, settings.w_pix, slices)
    logger.info(f'Processing {len(work)} slices with {jobs} worker(s)')
    if jobs <= 1 or len(work) <= 1:
        outcomes = [_process_safely(slice_data, settings) for slice_data in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(_process_safely, work, repeat(settings)))
    return [outcome for outcome in outcomes if outcome is not None]


def eliminate_volume(volume: Volume, s_mask_volume: Volume, outcomes: Sequence[SliceOutcome],
                     blood_baseline: float = DEFAULT_BLOOD_BASELINE) -> Volume:
    """Synthetic non-contrast volume; slices without an outcome pass through"""
    data = np.array(volume.data, dtype=float)
    for outcome in outcomes:
        z = outcome.slice_index
        s_mask = np.asarray(s_mask_volume.data[:, :, z]) != 0
        original = SliceData(data[:, :, z], s_mask, s_mask | np.isfinite(outcome.field.values),
                             spacing=(volume.spacing[0], volume.spacing[1]), slice_index=z)
        data[:, :, z] = eliminate_ca(original, outcome.field, blood_baseline).pixels
    return volume.with_data(data)
