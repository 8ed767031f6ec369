import json
import math
from dataclasses import replace

import pandas as pd
import pytest

from harness import METRIC_COLUMNS, SWEEP_COLUMN, MetricTable
from results_database import ResultsDatabase, default_db_path


def metric_table(sweep=False):
    rows = [
        {'method': 'omp', 'n_meas': 16, 'T_c': 256.0, 'R_eff': 1.25, 'SP_B1': 50.0, 'SP_B5': 75.0, 'E': 4},
        {'method': 'omp', 'n_meas': 16, 'T_c': math.inf, 'R_eff': 1.5, 'SP_B1': 50.0, 'SP_B5': 75.0, 'E': 4},
    ]
    columns = list(METRIC_COLUMNS)
    if sweep:
        for row, value in zip(rows, (0.1, 0.2)):
            row[SWEEP_COLUMN] = value
        columns.append(SWEEP_COLUMN)
    return MetricTable(pd.DataFrame(rows, columns=columns))


@pytest.fixture
def db(tmp_path):
    return ResultsDatabase(str(tmp_path / 'runs.db'))


def test_default_path_from_environment(monkeypatch, tmp_path):
    monkeypatch.delenv('BEAMSEL_RESULTS_DB', raising=False)
    assert default_db_path() == 'beamsel_runs.db'
    target = str(tmp_path / 'elsewhere.db')
    monkeypatch.setenv('BEAMSEL_RESULTS_DB', target)
    assert default_db_path() == target
    assert ResultsDatabase().db_path == target


def test_record_and_read_back(db, small_config):
    run_id = db.record_run(small_config, metric_table(), csv_path='out.csv', metadata={'k': 1})
    run = db.get_run(run_id)
    assert run['name'] == 'small'
    assert run['seed'] == small_config.seed
    assert run['config_hash'] == small_config.config_hash()
    assert json.loads(run['metadata_json']) == {'k': 1}

    metrics = db.get_metrics(run_id)
    assert [m['t_c'] for m in metrics] == [256.0, None]
    assert [m['r_eff'] for m in metrics] == [1.25, 1.5]
    assert all(m['sweep_value'] is None for m in metrics)


def test_sweep_values_are_stored(db, small_config):
    run_id = db.record_run(small_config, metric_table(sweep=True))
    assert [m['sweep_value'] for m in db.get_metrics(run_id)] == [0.1, 0.2]


def test_list_runs_newest_first_and_statistics(db, small_config):
    first = db.record_run(small_config, metric_table())
    second = db.record_run(replace(small_config, seed=99), metric_table())
    third = db.record_run(replace(small_config, name='other'), metric_table())
    assert [r['id'] for r in db.list_runs()] == [third, second, first]
    assert [r['id'] for r in db.list_runs(limit=1)] == [third]

    stats = db.get_statistics()
    assert stats['total_runs'] == 3
    assert stats['by_name'] == {'small': 2, 'other': 1}
    assert stats['distinct_configs'] == 3


def test_delete_run(db, small_config):
    run_id = db.record_run(small_config, metric_table())
    assert db.delete_run(run_id) == 1
    assert db.get_run(run_id) is None
    assert db.get_metrics(run_id) == []
    assert db.delete_run(run_id) == 0


def test_export_run_json(db, small_config):
    run_id = db.record_run(small_config, metric_table(), metadata={'note': 'x'})
    exported = json.loads(db.export_run_json(run_id))
    assert exported['config']['seed'] == small_config.seed
    assert exported['metadata'] == {'note': 'x'}
    assert len(exported['metrics']) == 2
    with pytest.raises(KeyError):
        db.export_run_json(run_id + 100)
