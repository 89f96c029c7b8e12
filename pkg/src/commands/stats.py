import logging
from pathlib import Path

import click

from src.core import stats
from src.utils.errors import DataError
from src.utils.reporting import read_csv_columns, write_json

logger = logging.getLogger(__name__)

STATS_FILE = 'stats.json'

# name -> (runner, minimum columns, maximum columns)
TESTS = {
    'mann-whitney': (lambda samples, seed: [stats.mann_whitney_u(*samples)], 2, 2),
    'signed-rank': (lambda samples, seed: [stats.wilcoxon_signed_rank(*samples)], 2, 2),
    'kruskal-wallis': (lambda samples, seed: [stats.kruskal_wallis(samples, seed=seed)], 2, None),
    'dunn': (lambda samples, seed: stats.dunn_posthoc(samples), 2, None),
}


@click.command('stats')
@click.option('--csv', 'csv_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='CSV file holding the samples')
@click.option('--test', 'test_name', required=True, type=click.Choice(sorted(TESTS)), help='Test to run')
@click.option('--columns', required=True, help='Comma separated column names, one sample each')
@click.option('--seed', type=int, default=stats.PERMUTATION_SEED, show_default=True,
              help='Seed of the Kruskal-Wallis permutation null')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory')
def stats_command(csv_path, test_name, columns, seed, out):
    """Run a rank test on CSV columns and write stats.json."""
    names = [name.strip() for name in columns.split(',') if name.strip()]
    runner, minimum, maximum = TESTS[test_name]
    if len(names) < minimum or (maximum is not None and len(names) > maximum):
        expected = f'exactly {minimum}' if maximum == minimum else f'at least {minimum}'
        raise click.BadParameter(f'{test_name} takes {expected} columns, got {len(names)}',
                                 param_hint='--columns')

    try:
        values = read_csv_columns(csv_path, names)
    except KeyError as e:
        raise click.BadParameter(str(e.args[0]), param_hint='--columns')
    except ValueError as e:
        raise DataError(f'{csv_path}: non-numeric cell: {str(e)}') from e

    results = runner([values[name] for name in names], seed)
    path = write_json(Path(out) / STATS_FILE, {
        'test': test_name,
        'columns': names,
        'results': [result.to_dict() for result in results]
    })
    logger.info(f'{test_name} on {", ".join(names)} written to {path}')
