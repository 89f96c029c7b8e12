import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import click

from src.commands.common import build_config, load_inputs, out_dir, pipeline_options, run_pipeline
from src.core.hemodynamics import (branching_analysis, central_line_metrics, flow_profile_compare, line_metrics,
                                   thrombus_edge_compare)
from src.models import AccuracyPolicy, Axis, CohortReport, LineMetrics, SliceData, SliceOutcome
from src.utils.errors import CaidcError, InsufficientDataError
from src.utils.reporting import write_report

logger = logging.getLogger(__name__)


def _central_cohort(slices: Sequence[int], inputs: Dict[int, SliceData], outcomes: Dict[int, SliceOutcome],
                    policy: AccuracyPolicy):
    """Central row and column metrics of every usable slice, and the count left out"""
    cohort: List[LineMetrics] = []
    excluded = 0
    for z in slices:
        if z not in outcomes:
            logger.warning(f'slice {z}: no fit, left out of the cohort')
            excluded += 2
            continue
        try:
            cohort.extend(central_line_metrics(inputs[z], outcomes[z].field, policy))
        except CaidcError as e:
            logger.warning(f'slice {z}: central lines left out: {str(e)}')
            excluded += 2
    return cohort, excluded


def _thrombus_rows(slice_data: SliceData, outcome: SliceOutcome, policy: AccuracyPolicy,
                   rows: Optional[Sequence[int]]) -> List[LineMetrics]:
    """Metrics of the longest fitted span in each selected row of the thrombus slice"""
    fits = outcome.field.row_fits
    selected = sorted(fits) if rows is None else rows
    metrics = []
    for row in selected:
        fitted = [line for line in fits.get(row, []) if line.usable]
        if not fitted:
            logger.info(f'slice {slice_data.slice_index} row {row}: no fit')
            continue
        line = max(fitted, key=lambda item: item.length)
        try:
            metrics.append(line_metrics(line.result.coefficients, policy, slice_data.slice_index, Axis.ROW,
                                        slice_data.spacing_along(Axis.ROW), line.result.profile))
        except CaidcError as e:
            logger.info(f'slice {slice_data.slice_index} row {row}: {str(e)}')
    return metrics


@click.command('analyze')
@pipeline_options
@click.option('--normal-slices', help='Slices of the normal cohort for the flow comparison')
@click.option('--aneurysm-slices', help='Slices of the aneurysmal cohort for the flow comparison')
@click.option('--branch-slices', help='Slices of the branching analysis')
@click.option('--thrombus-slice', type=int, help='Slice holding the thrombus')
@click.option('--rows', help='Rows of the thrombus slice to compare (default: every fitted row)')
def analyze_command(config_path, **flags):
    """Run the flow, branching and thrombus analyses.

    Each analysis runs when its slice selection is configured; the cohort
    reports are written to report.json in --out.
    """
    config = build_config(config_path, **flags)
    normal = config.slice_list('normal_slices')
    aneurysmal = config.slice_list('aneurysm_slices')
    branch = config.slice_list('branch_slices')
    if bool(normal) != bool(aneurysmal):
        raise click.UsageError('--normal-slices and --aneurysm-slices go together')
    if not (normal or branch or config.thrombus_slice is not None):
        raise click.UsageError('Nothing to analyze: give cohort, branch or thrombus slices')

    wanted = set(normal or []) | set(aneurysmal or []) | set(branch or [])
    if config.thrombus_slice is not None:
        wanted.add(config.thrombus_slice)

    volume, mask = load_inputs(config)
    inputs, processed = run_pipeline(config, volume, mask, slices=sorted(wanted))
    outcomes = {outcome.slice_index: outcome for outcome in processed}
    policy = config.policy()
    reports: List[CohortReport] = []

    if normal:
        normal_cohort, normal_excluded = _central_cohort(normal, inputs, outcomes, policy)
        aneurysm_cohort, aneurysm_excluded = _central_cohort(aneurysmal, inputs, outcomes, policy)
        report = flow_profile_compare(normal_cohort, aneurysm_cohort)
        reports.append(replace(report, excluded_lines=report.excluded_lines + normal_excluded + aneurysm_excluded))

    if branch:
        pairs = [(inputs[z], outcomes[z].field) for z in branch if z in outcomes]
        reports.append(branching_analysis(pairs, seed=config.seed))

    if config.thrombus_slice is not None:
        z = config.thrombus_slice
        if z not in outcomes:
            raise InsufficientDataError(f'Thrombus slice {z} could not be processed')
        rows = _thrombus_rows(inputs[z], outcomes[z], policy, config.slice_list('rows'))
        logger.info(f'Thrombus comparison over {len(rows)} rows of slice {z}')
        reports.append(thrombus_edge_compare(rows))

    write_report(out_dir(config), reports=reports)
    for report in reports:
        logger.info(f'{report.metric}: {report.test} p = {report.p_value:.4g} ({report.direction})')
