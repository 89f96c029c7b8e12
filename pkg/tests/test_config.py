import json

import pytest

from src.utils.config import load_run_config
from src.utils.errors import IoFailureError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ('CAIDC_JOBS', 'CAIDC_DELTA_Y', 'CAIDC_BLOOD_BASELINE', 'CAIDC_CALC_THRESHOLD'):
        monkeypatch.delenv(variable, raising=False)


def test_defaults():
    config = load_run_config()
    assert config.delta_y == 0.002
    assert config.blood_baseline == 40.0
    assert config.calc_threshold == 600.0
    assert config.jobs == 1
    assert config.policy().delta_y == 0.002
    assert config.fit_config().max_iterations == 100


def test_flags_beat_file_beat_environment(monkeypatch, tmp_path):
    monkeypatch.setenv('CAIDC_JOBS', '3')
    monkeypatch.setenv('CAIDC_BLOOD_BASELINE', '35')
    assert load_run_config().jobs == 3

    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'jobs': 5, 'w_th': 3.0}))
    from_file = load_run_config(config_path=path)
    assert from_file.jobs == 5
    assert from_file.w_th == 3.0
    assert from_file.blood_baseline == 35.0

    flagged = load_run_config({'jobs': 2, 'w_th': None}, config_path=path)
    assert flagged.jobs == 2
    assert flagged.w_th == 3.0


def test_unknown_fields_are_rejected(tmp_path):
    with pytest.raises(ValueError, match='Unknown config fields'):
        load_run_config({'speed': 3})
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'colour': 'red'}))
    with pytest.raises(ValueError):
        load_run_config(config_path=path)


def test_config_file_must_hold_an_object(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text('[1, 2]')
    with pytest.raises(ValueError):
        load_run_config(config_path=path)
    with pytest.raises(IoFailureError):
        load_run_config(config_path=tmp_path / 'missing.json')


def test_slice_lists():
    config = load_run_config({'slices': '3,5,7-9', 'branch_slices': [1, 2]})
    assert config.slice_list('slices') == [3, 5, 7, 8, 9]
    assert config.slice_list('branch_slices') == [1, 2]
    assert config.slice_list('rows') is None


def test_seed_reaches_the_slice_settings():
    from src.commands.common import slice_settings
    from src.core.stats import PERMUTATION_SEED
    assert load_run_config().seed == PERMUTATION_SEED
    config = load_run_config({'seed': 5})
    assert config.seed == 5
    assert slice_settings(config).seed == 5
