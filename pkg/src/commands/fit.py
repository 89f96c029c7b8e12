import logging

import click

from src.commands.common import (build_config, composed_volume, load_inputs, metric_rows, out_dir,
                                 pipeline_options, run_pipeline)
from src.core.phantom import load_truth
from src.utils import nifti_io
from src.utils.reporting import write_report

logger = logging.getLogger(__name__)

CAIDC_FILE = 'caidc.nii'


@click.command('fit')
@pipeline_options
@click.option('--truth', help='truth.json written by the phantom command')
def fit_command(config_path, **flags):
    """Fit the CAiDC model slice by slice.

    Writes slice_diagnostics.csv, line_fits.csv, metrics_long.csv and
    caidc.nii to --out, plus truth_vs_fit.csv when --truth is given.
    """
    config = build_config(config_path, **flags)
    volume, mask = load_inputs(config)
    inputs, outcomes = run_pipeline(config, volume, mask)

    target = out_dir(config)
    nifti_io.write_volume(composed_volume(volume, outcomes), target / CAIDC_FILE, 'float32')
    truth = load_truth(config.truth) if config.truth else None
    write_report(target, outcomes=outcomes, truth=truth,
                 metrics=metric_rows(outcomes, inputs, config.policy()))
    logger.info(f'Fitted {len(outcomes)} slices into {target}')
