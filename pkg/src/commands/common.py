"""Options and plumbing shared by the pipeline commands."""
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import click
import numpy as np

from src.core.hemodynamics import central_line_metrics, slice_estimated_diameter
from src.core.slice_engine import SliceSettings, estimate_roi, process_volume, volume_slices
from src.models import AccuracyPolicy, LineMetrics, SliceData, SliceOutcome, Volume
from src.utils import nifti_io
from src.utils.config import RunConfig, load_run_config
from src.utils.errors import CaidcError, InsufficientDataError
from src.utils.validation import validate_run_config

logger = logging.getLogger(__name__)

PATH_FLAGS = ('volume', 'mask', 'out')


def pipeline_options(command):
    """Flags common to fit, analyze and eliminate"""
    options = [
        click.option('--volume', help='Input NIfTI-1 volume (.nii, .nii.gz or .hdr)'),
        click.option('--mask', help='S-region label map with the volume geometry'),
        click.option('--out', help='Output directory'),
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='JSON config file; flags override it, it overrides the environment'),
        click.option('--delta-y', type=float, help='Relative accuracy of the transition endpoints'),
        click.option('--blood-baseline', type=float, help='HU of non-contrast blood'),
        click.option('--calc-threshold', type=float, help='HU above which pixels count as calcinates'),
        click.option('--w-th', type=float, help='Vessel wall thickness in mm'),
        click.option('--w-pix', type=float, help='Pixels per mm'),
        click.option('--max-iterations', type=int, help='Levenberg-Marquardt iteration cap'),
        click.option('--seed', type=int, help='Seed of the Kruskal-Wallis permutation null'),
        click.option('--jobs', type=int, help='Worker processes (falls back to CAIDC_JOBS)'),
        click.option('--slices', help="Slice range such as '10-30' or '3,5,7-9'"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def build_config(config_path=None, required: Sequence[str] = PATH_FLAGS, **flags) -> RunConfig:
    """
    Layer flags over the config file and environment, then validate

    Raises:
        click.UsageError: on unknown or invalid settings and missing paths
    """
    try:
        config = load_run_config(flags, config_path)
    except ValueError as e:
        raise click.UsageError(str(e))

    report = validate_run_config(config)
    if not report['valid']:
        raise click.UsageError(report['message'])

    missing = [name for name in required if getattr(config, name) in (None, '')]
    if missing:
        raise click.UsageError(f"Missing {', '.join('--' + name for name in missing)}")
    return config


def slice_settings(config: RunConfig) -> SliceSettings:
    return SliceSettings(policy=config.policy(), fit_config=config.fit_config(),
                         calc_threshold=config.calc_threshold, w_th=config.w_th, w_pix=config.w_pix,
                         seed=config.seed)


def load_inputs(config: RunConfig) -> Tuple[Volume, Volume]:
    """Read the volume and its S-region mask, checking that they share one geometry"""
    volume = nifti_io.read_volume(config.volume)
    mask = nifti_io.read_mask(config.mask, volume)
    logger.info(f'Loaded {config.volume}: dims {volume.dims}, spacing {volume.spacing}')
    return volume, mask


def run_pipeline(config: RunConfig, volume: Volume, mask: Volume,
                 slices: Iterable[int] = None) -> Tuple[Dict[int, SliceData], List[SliceOutcome]]:
    """
    Slice inputs by index and the ordered per-slice outcomes

    Raises:
        InsufficientDataError: if no slice could be processed
    """
    if slices is None:
        slices = config.slice_list('slices')
    settings = slice_settings(config)
    inputs = {item.slice_index: item
              for item in volume_slices(volume, mask, settings.w_th, settings.w_pix, slices)}
    outcomes = process_volume(volume, mask, settings, jobs=config.jobs, slices=slices)
    if not outcomes:
        raise InsufficientDataError('No slice could be processed')
    return inputs, outcomes


def composed_volume(volume: Volume, outcomes: Iterable[SliceOutcome]) -> Volume:
    """Composed CAiDC of every processed slice, 0 where there is no model"""
    data = np.zeros(volume.dims, dtype=float)
    for outcome in outcomes:
        data[:, :, outcome.slice_index] = np.nan_to_num(outcome.field.values, nan=0.0)
    return volume.with_data(data)


def _line_rows(item: LineMetrics) -> List[Tuple[str, Any]]:
    prefix = item.axis.value
    return [
        (f'{prefix}_plateau_width', item.plateau_width),
        (f'{prefix}_dx_over_wpl_rising', item.dx_over_wpl_rising),
        (f'{prefix}_dx_over_wpl_falling', item.dx_over_wpl_falling),
        (f'{prefix}_slope_rising', item.rising.slope_tangent),
        (f'{prefix}_slope_falling', item.falling.slope_tangent),
        (f'{prefix}_transition_width_rising', item.rising.transition_width),
        (f'{prefix}_transition_width_falling', item.falling.transition_width),
        (f'{prefix}_estimated_diameter_mm', item.estimated_diameter_mm),
    ]


def metric_rows(outcomes: Iterable[SliceOutcome], inputs: Mapping[int, SliceData],
                policy: AccuracyPolicy) -> List[Dict[str, Any]]:
    """Long-format (slice_index, metric, value) rows for external plotting"""
    rows = []
    for outcome in outcomes:
        z = outcome.slice_index
        values = [(key, value) for key, value in outcome.diagnostics_row().items() if key != 'slice_index']
        values.append(('roi_pixels', int(estimate_roi(outcome.field).sum())))
        slice_data = inputs.get(z)
        if slice_data is not None:
            try:
                values.append(('estimated_diameter_mm',
                               slice_estimated_diameter(outcome.field, policy, slice_data.spacing)))
                row_metrics, column_metrics = central_line_metrics(slice_data, outcome.field, policy)
                values += _line_rows(row_metrics) + _line_rows(column_metrics)
            except CaidcError as e:
                logger.info(f'slice {z}: central line metrics skipped: {str(e)}')
        rows += [{'slice_index': z, 'metric': key, 'value': value}
                 for key, value in values if value is not None]
    return rows


def out_dir(config: RunConfig) -> Path:
    return Path(config.out)
