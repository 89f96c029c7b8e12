"""Hemodynamic analyses built on fitted lines: flow-profile flatness, diameter
classes, branching heterogeneity and thrombus edge asymmetry."""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core import sigmoid_model, stats
from src.core.slice_engine import adjust_transition_endpoints, geometric_center
from src.models import (AccuracyPolicy, Axis, CaidcField, CohortReport, DiameterClass, Edge,
                        LineFit, LineMetrics, LineProfile, ModelCoefficients, SliceData,
                        TestMethod, TestResult)
from src.models.cohort import as_sample
from src.utils.errors import (AllZeroDifferencesError, CaidcError, DegeneratePlateauError,
                              EndpointCollapseError, InsufficientDataError, InsufficientRowsError,
                              InsufficientSlicesError, NonPositiveDiameterError)

logger = logging.getLogger(__name__)

ANEURYSM_THRESHOLD_MM = 30.0
DILATATION_THRESHOLD_MM = 25.0
MIN_COHORT_SLICES = 10
MIN_BRANCHING_SLICES = 3
MIN_THROMBUS_ROWS = 5
ALPHA = 0.05


def line_metrics(coeffs: ModelCoefficients, policy: AccuracyPolicy, slice_index: int = 0,
                 axis: Axis = Axis.ROW, spacing_mm: float = 1.0,
                 profile: Optional[LineProfile] = None) -> LineMetrics:
    """
    Edge metrics, plateau width, width ratios and estimated diameter of one line

    When the fitted ``profile`` is given the outer transition endpoints are
    moved inward until the CAiDC there is positive; a collapsing edge keeps
    its closed-form endpoints.
    """
    rising = sigmoid_model.edge_metrics(coeffs, policy, Edge.RISING)
    falling = sigmoid_model.edge_metrics(coeffs, policy, Edge.FALLING)
    if profile is not None:
        caidc = sigmoid_model.evaluate(coeffs, profile.coordinates)
        try:
            rising = adjust_transition_endpoints(profile, rising, caidc)
            falling = adjust_transition_endpoints(profile, falling, caidc)
        except EndpointCollapseError as e:
            logger.debug(f'slice {slice_index}: {str(e)}')
            rising = sigmoid_model.edge_metrics(coeffs, policy, Edge.RISING)
            falling = sigmoid_model.edge_metrics(coeffs, policy, Edge.FALLING)

    width = sigmoid_model.plateau_width(coeffs, policy)
    ratio_rising = ratio_falling = None
    if not width.degenerate:
        ratio_rising = rising.transition_width / width.value
        ratio_falling = falling.transition_width / width.value

    return LineMetrics(
        slice_index=slice_index,
        axis=axis,
        rising=rising,
        falling=falling,
        plateau_width=width.value,
        dx_over_wpl_rising=ratio_rising,
        dx_over_wpl_falling=ratio_falling,
        estimated_diameter_mm=sigmoid_model.estimated_diameter(coeffs, policy) * spacing_mm
    )


def _covering_fit(fits, index: int, position: int) -> Optional[LineFit]:
    for line in fits.get(index, []):
        if line.usable and line.covers(position):
            return line
    return None


def central_line_metrics(slice_data: SliceData, composed: CaidcField,
                         policy: AccuracyPolicy) -> Tuple[LineMetrics, LineMetrics]:
    """
    Metrics of the row and the column through the geometric center

    Raises:
        InsufficientDataError: if either central line has no fit
        DegeneratePlateauError: if either central line has w_pl <= 0
    """
    row, col = geometric_center(slice_data.s_mask)
    lines = ((Axis.ROW, _covering_fit(composed.row_fits, row, col)),
             (Axis.COLUMN, _covering_fit(composed.column_fits, col, row)))

    metrics = []
    for axis, line in lines:
        if line is None:
            raise InsufficientDataError(
                f'slice {slice_data.slice_index}: no fitted central {axis.value}')
        result = line.result
        item = line_metrics(result.coefficients, policy, slice_data.slice_index, axis,
                            slice_data.spacing_along(axis), result.profile)
        if item.degenerate:
            raise DegeneratePlateauError(
                f'slice {slice_data.slice_index}: central {axis.value} plateau width '
                f'{item.plateau_width:.2f} px')
        metrics.append(item)
    return metrics[0], metrics[1]


def classify_diameter(diameter_mm: float) -> DiameterClass:
    """< 25 mm norm, 25 to < 30 mm dilatation, >= 30 mm aneurysm"""
    if not math.isfinite(diameter_mm) or diameter_mm <= 0:
        raise NonPositiveDiameterError(f'Diameter must be > 0, got {diameter_mm}')
    if diameter_mm < DILATATION_THRESHOLD_MM:
        return DiameterClass.NORM
    if diameter_mm < ANEURYSM_THRESHOLD_MM:
        return DiameterClass.DILATATION
    return DiameterClass.ANEURYSM


def slice_estimated_diameter(composed: CaidcField, policy: AccuracyPolicy,
                             spacing_mm: Tuple[float, float] = (1.0, 1.0)) -> float:
    """Largest model-estimated diameter (mm) over all well-formed fitted lines"""
    best = None
    for fits, axis in ((composed.row_fits, Axis.ROW), (composed.column_fits, Axis.COLUMN)):
        step = spacing_mm[1] if axis is Axis.ROW else spacing_mm[0]
        for lines in fits.values():
            for line in lines:
                if not line.usable:
                    continue
                try:
                    diameter = sigmoid_model.estimated_diameter(line.result.coefficients, policy) * step
                except CaidcError:
                    continue
                best = diameter if best is None else max(best, diameter)
    if best is None:
        raise InsufficientDataError('No well-formed fitted line')
    return best


def _direction(first: Sequence[float], second: Sequence[float], labels: Tuple[str, str]) -> str:
    a, b = float(np.median(first)), float(np.median(second))
    if a > b:
        return f'{labels[0]} > {labels[1]}'
    if a < b:
        return f'{labels[0]} < {labels[1]}'
    return 'equal medians'


def _u_report(metric: str, first: Sequence[float], second: Sequence[float],
              labels: Tuple[str, str], excluded: int = 0) -> CohortReport:
    test = stats.mann_whitney_u(first, second)
    return CohortReport(
        metric=metric,
        groups=labels,
        samples=(as_sample(first), as_sample(second)),
        test=test.name,
        statistic=test.statistic,
        p_value=test.p_value,
        direction=_direction(first, second, labels),
        excluded_lines=excluded
    )


def _require_slices(cohort: Sequence[LineMetrics], label: str, minimum: int):
    distinct = len({m.slice_index for m in cohort})
    if distinct < minimum:
        raise InsufficientSlicesError(f'{label} cohort spans {distinct} slices, need {minimum}')


def flow_profile_compare(normal: Sequence[LineMetrics], aneurysmal: Sequence[LineMetrics],
                         min_slices: int = MIN_COHORT_SLICES) -> CohortReport:
    """
    Compare flow-profile flatness of two cohorts with two-sided U-tests

    The headline report is the pooled dx/w_pl ratio; ``details`` holds
    per-edge ratios, per-edge and pooled signed slopes and pooled |slope|.
    A pooled value is the mean of a line's two edges, so each line adds one
    sample. Lines with w_pl <= 0 are left out of the ratio samples and
    counted in ``excluded_lines``.

    Raises:
        InsufficientSlicesError: if a cohort spans fewer than ``min_slices`` slices
    """
    _require_slices(normal, 'normal', min_slices)
    _require_slices(aneurysmal, 'aneurysmal', min_slices)
    labels = ('normal', 'aneurysmal')

    usable = [[m for m in cohort if not m.degenerate] for cohort in (normal, aneurysmal)]
    excluded = len(normal) + len(aneurysmal) - len(usable[0]) - len(usable[1])
    if excluded:
        logger.info(f'{excluded} lines with degenerate plateau excluded from ratio cohorts')

    def ratios(cohort, edges):
        per_edge = [[m.dx_over_wpl_rising if edge is Edge.RISING else m.dx_over_wpl_falling
                     for m in cohort] for edge in edges]
        return np.mean(per_edge, axis=0).tolist()

    def slopes(cohort, edges, magnitude=False):
        per_edge = np.array([[(m.rising if edge is Edge.RISING else m.falling).slope_tangent
                              for m in cohort] for edge in edges])
        return np.mean(np.abs(per_edge) if magnitude else per_edge, axis=0).tolist()

    both = (Edge.RISING, Edge.FALLING)
    details = (
        _u_report('dx_over_wpl_rising', ratios(usable[0], (Edge.RISING,)),
                  ratios(usable[1], (Edge.RISING,)), labels, excluded),
        _u_report('dx_over_wpl_falling', ratios(usable[0], (Edge.FALLING,)),
                  ratios(usable[1], (Edge.FALLING,)), labels, excluded),
        _u_report('slope_rising', slopes(normal, (Edge.RISING,)), slopes(aneurysmal, (Edge.RISING,)), labels),
        _u_report('slope_falling', slopes(normal, (Edge.FALLING,)), slopes(aneurysmal, (Edge.FALLING,)), labels),
        _u_report('slope_pooled', slopes(normal, both), slopes(aneurysmal, both), labels),
        _u_report('abs_slope_pooled', slopes(normal, both, True), slopes(aneurysmal, both, True), labels),
    )
    pooled = _u_report('dx_over_wpl_pooled', ratios(usable[0], both), ratios(usable[1], both),
                       labels, excluded)

    by_metric = {report.metric: report for report in details}
    notes = []
    per_edge_significant = (by_metric['slope_rising'].p_value < ALPHA
                            and by_metric['slope_falling'].p_value < ALPHA)
    if per_edge_significant and by_metric['slope_pooled'].p_value >= ALPHA:
        notes.append('signed slopes differ on each edge but not when both edges are pooled; '
                     'opposite edge signs cancel, compare abs_slope_pooled instead')
    if pooled.p_value < ALPHA and by_metric['slope_pooled'].p_value >= ALPHA:
        notes.append('pooled dx/w_pl separates the cohorts while pooled signed slope does not')

    return CohortReport(
        metric=pooled.metric,
        groups=labels,
        samples=pooled.samples,
        test=pooled.test,
        statistic=pooled.statistic,
        p_value=pooled.p_value,
        direction=pooled.direction,
        excluded_lines=excluded,
        details=details,
        notes=tuple(notes)
    )


def _lumen_sample(slice_data: SliceData, composed: CaidcField) -> np.ndarray:
    return composed.values[slice_data.s_mask & np.isfinite(composed.values)]


def branching_analysis(slices: Sequence[Tuple[SliceData, CaidcField]],
                       min_slices: int = MIN_BRANCHING_SLICES,
                       seed: int = stats.PERMUTATION_SEED) -> CohortReport:
    """
    Kruskal-Wallis over per-slice S-region CAiDC samples with Dunn post-hoc

    Each sample holds every composed value of the slice's S-region, so a
    lateral lobe shows up as extra low-level pixels. A slice is flagged when
    its Bonferroni-adjusted Dunn p is below 0.05 against more than half of
    the other slices. ``seed`` drives the permutation null of small samples.

    Raises:
        InsufficientSlicesError: fewer than ``min_slices`` slices
    """
    if len(slices) < min_slices:
        raise InsufficientSlicesError(f'Branching analysis needs {min_slices} slices, got {len(slices)}')

    indices = [slice_data.slice_index for slice_data, _ in slices]
    samples = []
    for slice_data, composed in slices:
        sample = _lumen_sample(slice_data, composed)
        if sample.size == 0:
            raise InsufficientDataError(f'slice {slice_data.slice_index}: no composed lumen pixel')
        samples.append(sample)

    kruskal = stats.kruskal_wallis(samples, seed=seed)
    dunn = stats.dunn_posthoc(samples)

    differing = [0] * len(slices)
    pairwise = []
    for result in dunn:
        i, j = result.pair
        if result.p_adjusted < ALPHA:
            differing[i] += 1
            differing[j] += 1
        pairwise.append({
            'slices': [indices[i], indices[j]],
            'z': result.statistic,
            'p_value': result.p_value,
            'p_adjusted': result.p_adjusted
        })
    flagged = tuple(indices[k] for k, count in enumerate(differing) if count > (len(slices) - 1) / 2.0)

    return CohortReport(
        metric='plateau_values',
        groups=tuple(f'slice {z}' for z in indices),
        samples=tuple(as_sample(sample) for sample in samples),
        test=kruskal.name,
        statistic=kruskal.statistic,
        p_value=kruskal.p_value,
        direction='heterogeneous' if kruskal.p_value < ALPHA else 'homogeneous',
        flagged_slices=flagged,
        pairwise=tuple(pairwise)
    )


def _paired_test(first: Sequence[float], second: Sequence[float]) -> Tuple[TestResult, Optional[str]]:
    try:
        return stats.wilcoxon_signed_rank(first, second), None
    except AllZeroDifferencesError:
        result = TestResult(statistic=0.0, p_value=1.0, method=TestMethod.EXACT, n=(0,),
                            name='wilcoxon_signed_rank')
        return result, 'all paired differences are zero'


def _paired_report(metric: str, rising: List[float], falling: List[float], larger: str) -> CohortReport:
    test, note = _paired_test(rising, falling)
    differences = np.asarray(rising) - np.asarray(falling)
    median = float(np.median(differences))
    if median > 0:
        direction = f'rising {larger}'
    elif median < 0:
        direction = f'falling {larger}'
    else:
        direction = 'no difference'
    return CohortReport(
        metric=metric,
        groups=('rising', 'falling'),
        samples=(as_sample(rising), as_sample(falling)),
        test=test.name,
        statistic=test.statistic,
        p_value=test.p_value,
        direction=direction,
        notes=(note,) if note else ()
    )


def thrombus_edge_compare(rows: Sequence[LineMetrics], min_rows: int = MIN_THROMBUS_ROWS) -> CohortReport:
    """
    Paired signed-rank comparison of the two edges of clot-crossing rows

    The headline report compares transition widths (direction names the wider
    edge); ``details`` holds the |slope| comparison (direction names the
    shallower edge).

    Raises:
        InsufficientRowsError: fewer than ``min_rows`` rows
    """
    if len(rows) < min_rows:
        raise InsufficientRowsError(f'Thrombus comparison needs {min_rows} rows, got {len(rows)}')

    widths = _paired_report('transition_width',
                            [m.rising.transition_width for m in rows],
                            [m.falling.transition_width for m in rows],
                            'wider')
    rising_slopes = [abs(m.rising.slope_tangent) for m in rows]
    falling_slopes = [abs(m.falling.slope_tangent) for m in rows]
    slope_test, note = _paired_test(rising_slopes, falling_slopes)
    median = float(np.median(np.asarray(rising_slopes) - np.asarray(falling_slopes)))
    slope_direction = 'rising shallower' if median < 0 else 'falling shallower' if median > 0 else 'no difference'
    slopes = CohortReport(
        metric='abs_slope',
        groups=('rising', 'falling'),
        samples=(as_sample(rising_slopes), as_sample(falling_slopes)),
        test=slope_test.name,
        statistic=slope_test.statistic,
        p_value=slope_test.p_value,
        direction=slope_direction,
        notes=(note,) if note else ()
    )

    return CohortReport(
        metric=widths.metric,
        groups=widths.groups,
        samples=widths.samples,
        test=widths.test,
        statistic=widths.statistic,
        p_value=widths.p_value,
        direction=widths.direction,
        details=(slopes,),
        notes=widths.notes
    )
