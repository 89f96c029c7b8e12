import logging

import click

from src.commands.common import build_config, load_inputs, out_dir, pipeline_options, run_pipeline
from src.core.slice_engine import eliminate_volume
from src.utils import nifti_io
from src.utils.reporting import write_report

logger = logging.getLogger(__name__)

ELIMINATED_FILE = 'eliminated.nii'


@click.command('eliminate')
@pipeline_options
def eliminate_command(config_path, **flags):
    """Replace the contrast agent by non-contrast blood.

    Inside the S-region every pixel becomes observed - CAiDC + blood
    baseline; the result is written to eliminated.nii (float32) along with
    slice_diagnostics.csv and line_fits.csv.
    """
    config = build_config(config_path, **flags)
    volume, mask = load_inputs(config)
    _, outcomes = run_pipeline(config, volume, mask)

    eliminated = eliminate_volume(volume, mask, outcomes, config.blood_baseline)
    target = out_dir(config)
    nifti_io.write_volume(eliminated, target / ELIMINATED_FILE, 'float32')
    write_report(target, outcomes=outcomes)
    logger.info(f'Eliminated contrast agent in {len(outcomes)} slices')
