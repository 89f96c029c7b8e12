import logging
from pathlib import Path

import click

from src.core.phantom import generate_volume, save_truth
from src.models import Scenario, ScenarioKind
from src.utils import nifti_io
from src.utils.validation import validate_scenario

logger = logging.getLogger(__name__)

VOLUME_FILE = 'vol.nii'
MASK_FILE = 'mask.nii'
TRUTH_FILE = 'truth.json'
SCENARIO_FILE = 'scenario.json'


@click.command('phantom')
@click.option('--scenario', 'scenario_path', type=click.Path(exists=True, dir_okay=False),
              help='Scenario JSON; flags below override its fields')
@click.option('--kind', type=click.Choice([kind.value for kind in ScenarioKind]), help='Scenario kind')
@click.option('--n-slices', type=click.IntRange(min=1), default=1, show_default=True, help='Number of slices')
@click.option('--seed', type=int, help='Noise seed')
@click.option('--noise-sigma', type=float, help='Gaussian noise in HU')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory')
def phantom_command(scenario_path, kind, n_slices, seed, noise_sigma, out):
    """Generate a synthetic vessel volume with known ground truth.

    Writes vol.nii (float32), mask.nii (uint8 S-region), truth.json and
    the scenario actually used, scenario.json.
    """
    try:
        scenario = Scenario.from_json_file(scenario_path) if scenario_path else Scenario()
        changes = {'kind': ScenarioKind(kind) if kind else None, 'seed': seed, 'noise_sigma': noise_sigma}
        scenario = scenario.with_changes(**{k: v for k, v in changes.items() if v is not None})
    except (TypeError, ValueError) as e:
        raise click.BadParameter(str(e), param_hint='--scenario')

    report = validate_scenario(scenario)
    if not report['valid']:
        raise click.BadParameter(report['message'], param_hint='--scenario')

    volume, mask, truths = generate_volume(scenario, n_slices)
    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    nifti_io.write_volume(volume, target / VOLUME_FILE, 'float32')
    nifti_io.write_volume(mask, target / MASK_FILE, 'uint8')
    save_truth(target / TRUTH_FILE, scenario, truths)
    scenario.save(target / SCENARIO_FILE)
    logger.info(f'Phantom {scenario.kind.value}: {n_slices} slices of {scenario.dims} written to {target}')
