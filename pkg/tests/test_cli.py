import csv
import json
import zlib

import numpy as np
import pytest
from click.testing import CliRunner

from src.main import EXIT_DATA, EXIT_OK, EXIT_USAGE, create_cli, dispatch
from src.utils import nifti_io
from src.utils.reporting import LINE_FIT_COLUMNS, SLICE_DIAGNOSTICS_COLUMNS, TRUTH_COLUMNS


def _invoke(*args):
    return CliRunner().invoke(create_cli(), list(args))


def _csv_rows(path):
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        return reader.fieldnames, list(reader)


@pytest.fixture(scope='module')
def phantom_dir(tmp_path_factory):
    target = tmp_path_factory.mktemp('phantom')
    result = _invoke('phantom', '--n-slices', '3', '--seed', '11', '--out', str(target))
    assert result.exit_code == EXIT_OK, result.output
    return target


@pytest.fixture(scope='module')
def fit_dir(phantom_dir, tmp_path_factory):
    target = tmp_path_factory.mktemp('fit')
    result = _invoke('fit', '--volume', str(phantom_dir / 'vol.nii'), '--mask', str(phantom_dir / 'mask.nii'),
                     '--truth', str(phantom_dir / 'truth.json'), '--out', str(target))
    assert result.exit_code == EXIT_OK, result.output
    return target


def test_phantom_writes_volume_mask_and_truth(phantom_dir):
    volume = nifti_io.read_volume(phantom_dir / 'vol.nii')
    mask = nifti_io.read_volume(phantom_dir / 'mask.nii')
    assert volume.dims == (64, 64, 3)
    assert volume.datatype_code == 16
    assert mask.datatype_code == 2
    assert set(np.unique(mask.data)) == {0, 1}
    truth = json.loads((phantom_dir / 'truth.json').read_text())
    assert len(truth['slices']) == 3
    assert json.loads((phantom_dir / 'scenario.json').read_text())['seed'] == 11


def test_phantom_rejects_a_scenario_outside_its_class(tmp_path):
    result = _invoke('phantom', '--kind', 'aneurysm', '--out', str(tmp_path))
    assert result.exit_code == EXIT_USAGE
    assert not (tmp_path / 'vol.nii').exists()


def test_fit_writes_one_diagnostics_row_per_slice(fit_dir):
    columns, rows = _csv_rows(fit_dir / 'slice_diagnostics.csv')
    assert tuple(columns) == SLICE_DIAGNOSTICS_COLUMNS
    assert [int(row['slice_index']) for row in rows] == [0, 1, 2]
    for row in rows:
        assert 0.0 <= float(row['p_value']) <= 1.0
        assert float(row['rmse_hu']) < 20.0
        assert int(row['calcinates_replaced']) == 0


def test_fit_writes_line_fits_metrics_and_truth(fit_dir):
    columns, rows = _csv_rows(fit_dir / 'line_fits.csv')
    assert tuple(columns) == LINE_FIT_COLUMNS
    assert {row['axis'] for row in rows} == {'row', 'column'}
    assert any(row['fitted'] == 'True' for row in rows)

    columns, rows = _csv_rows(fit_dir / 'metrics_long.csv')
    assert columns == ['slice_index', 'metric', 'value']
    metrics = {row['metric'] for row in rows}
    assert {'rmse_hu', 'estimated_diameter_mm', 'roi_pixels'} <= metrics
    assert all(int(row['value']) > 0 for row in rows if row['metric'] == 'roi_pixels')

    columns, rows = _csv_rows(fit_dir / 'truth_vs_fit.csv')
    assert tuple(columns) == TRUTH_COLUMNS
    assert rows

    caidc = nifti_io.read_volume(fit_dir / 'caidc.nii')
    assert caidc.dims == (64, 64, 3)
    assert caidc.datatype_code == 16


def test_eliminate_restores_the_blood_baseline(phantom_dir, tmp_path):
    result = _invoke('eliminate', '--volume', str(phantom_dir / 'vol.nii'), '--mask', str(phantom_dir / 'mask.nii'),
                     '--blood-baseline', '40', '--slices', '1', '--out', str(tmp_path))
    assert result.exit_code == EXIT_OK, result.output
    eliminated = nifti_io.read_volume(tmp_path / 'eliminated.nii')
    original = nifti_io.read_volume(phantom_dir / 'vol.nii')
    lumen = nifti_io.read_volume(phantom_dir / 'mask.nii').data[:, :, 1] != 0
    assert eliminated.data[:, :, 1][lumen].mean() == pytest.approx(40.0, abs=3.0)
    np.testing.assert_array_equal(eliminated.data[:, :, 0], original.data[:, :, 0])
    assert (tmp_path / 'slice_diagnostics.csv').exists()


def test_analyze_branching_writes_report(phantom_dir, tmp_path):
    result = _invoke('analyze', '--volume', str(phantom_dir / 'vol.nii'), '--mask', str(phantom_dir / 'mask.nii'),
                     '--branch-slices', '0-2', '--out', str(tmp_path))
    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((tmp_path / 'report.json').read_text())['reports'][0]
    assert report['metric'] == 'plateau_values'
    assert report['test'] == 'kruskal_wallis'
    assert report['groups'] == ['slice 0', 'slice 1', 'slice 2']


def test_analyze_thrombus_writes_report(tmp_path):
    phantom = tmp_path / 'phantom'
    assert _invoke('phantom', '--kind', 'thrombus', '--noise-sigma', '0', '--out', str(phantom)).exit_code == EXIT_OK
    result = _invoke('analyze', '--volume', str(phantom / 'vol.nii'), '--mask', str(phantom / 'mask.nii'),
                     '--thrombus-slice', '0', '--out', str(tmp_path / 'out'))
    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((tmp_path / 'out' / 'report.json').read_text())['reports'][0]
    assert report['metric'] == 'transition_width'
    assert report['details'][0]['metric'] == 'abs_slope'


def test_analyze_usage_errors(phantom_dir, tmp_path):
    inputs = ['--volume', str(phantom_dir / 'vol.nii'), '--mask', str(phantom_dir / 'mask.nii'), '--out', str(tmp_path)]
    assert _invoke('analyze', *inputs).exit_code == EXIT_USAGE
    assert _invoke('analyze', *inputs, '--normal-slices', '0-1').exit_code == EXIT_USAGE


def test_usage_errors_exit_with_one(phantom_dir, tmp_path):
    assert _invoke('fit', '--no-such-flag').exit_code == EXIT_USAGE
    assert _invoke('fit', '--volume', str(phantom_dir / 'vol.nii')).exit_code == EXIT_USAGE
    result = _invoke('fit', '--volume', str(phantom_dir / 'vol.nii'), '--mask', str(phantom_dir / 'mask.nii'),
                     '--out', str(tmp_path), '--delta-y', '0.7')
    assert result.exit_code == EXIT_USAGE


def test_data_errors_exit_with_two(phantom_dir, tmp_path):
    broken = tmp_path / 'broken.nii'
    broken.write_bytes(bytes(10))
    result = _invoke('fit', '--volume', str(broken), '--mask', str(phantom_dir / 'mask.nii'), '--out', str(tmp_path))
    assert result.exit_code == EXIT_DATA
    result = _invoke('fit', '--volume', str(tmp_path / 'missing.nii'), '--mask', str(phantom_dir / 'mask.nii'),
                     '--out', str(tmp_path))
    assert result.exit_code == EXIT_DATA

    corrupt = tmp_path / 'corrupt.nii.gz'
    nifti_io.write_volume(nifti_io.read_volume(phantom_dir / 'vol.nii'), corrupt)
    raw = bytearray(corrupt.read_bytes())
    raw[10] = 0xFF
    corrupt.write_bytes(bytes(raw))
    result = _invoke('fit', '--volume', str(corrupt), '--mask', str(phantom_dir / 'mask.nii'), '--out', str(tmp_path))
    assert result.exit_code == EXIT_DATA
    assert not isinstance(result.exception, zlib.error)


@pytest.fixture
def samples_csv(tmp_path):
    path = tmp_path / 'samples.csv'
    path.write_text('a,b,c,label\n1,4,7,x\n2,5,8,y\n3,6,9,z\n')
    return path


def test_stats_mann_whitney(samples_csv, tmp_path):
    result = _invoke('stats', '--csv', str(samples_csv), '--test', 'mann-whitney', '--columns', 'a,b',
                     '--out', str(tmp_path / 'out'))
    assert result.exit_code == EXIT_OK, result.output
    data = json.loads((tmp_path / 'out' / 'stats.json').read_text())
    assert data['test'] == 'mann-whitney'
    assert data['columns'] == ['a', 'b']
    assert data['results'][0]['statistic'] == 0.0
    assert data['results'][0]['p_value'] == pytest.approx(0.1)


def test_stats_dunn_over_three_columns(samples_csv, tmp_path):
    result = _invoke('stats', '--csv', str(samples_csv), '--test', 'dunn', '--columns', 'a,b,c',
                     '--out', str(tmp_path))
    assert result.exit_code == EXIT_OK, result.output
    results = json.loads((tmp_path / 'stats.json').read_text())['results']
    assert [r['pair'] for r in results] == [[0, 1], [0, 2], [1, 2]]


def test_stats_errors(samples_csv, tmp_path):
    out = str(tmp_path / 'out')
    assert _invoke('stats', '--csv', str(samples_csv), '--test', 'kruskal-wallis', '--columns', 'a',
                   '--out', out).exit_code == EXIT_USAGE
    assert _invoke('stats', '--csv', str(samples_csv), '--test', 'mann-whitney', '--columns', 'a,missing',
                   '--out', out).exit_code == EXIT_USAGE
    assert _invoke('stats', '--csv', str(samples_csv), '--test', 'mann-whitney', '--columns', 'a,label',
                   '--out', out).exit_code == EXIT_DATA


def test_dispatch_returns_exit_codes(samples_csv, tmp_path):
    assert dispatch(['stats', '--csv', str(samples_csv), '--test', 'signed-rank', '--columns', 'a,b',
                     '--out', str(tmp_path)]) == EXIT_OK
    assert dispatch(['stats', '--test', 'unknown']) == EXIT_USAGE
    assert dispatch(['--help']) == EXIT_OK


def test_stats_kruskal_wallis_uses_the_seed(samples_csv, tmp_path):
    from src.core import stats
    result = _invoke('stats', '--csv', str(samples_csv), '--test', 'kruskal-wallis', '--columns', 'a,b,c',
                     '--seed', '7', '--out', str(tmp_path))
    assert result.exit_code == EXIT_OK, result.output
    reported = json.loads((tmp_path / 'stats.json').read_text())['results'][0]
    expected = stats.kruskal_wallis([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]], seed=7)
    assert reported['method'] == 'permutation'
    assert reported['p_value'] == expected.p_value
