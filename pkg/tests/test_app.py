import argparse
import json

import numpy as np
import pandas as pd
import pytest

import app
from experiment_config import preset
from harness import ExperimentHarness
from mmwave_frontend import dbm_to_watts
from multiband_channel import MultiBandChannel, spawn_rng
from oob_extraction import OOBExtraction


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({
        'name': 'cli_small',
        'mmwave': {'m_rx': 8, 'm_tx': 8, 'n_subcarriers': 16, 'n_taps': 16, 'cp_length': 16},
        'beam_grid': [[2, 2]],
        'coherence': [128, 'inf'],
        'methods': ['omp', 'lw_omp'],
        'trials': 2,
        'output_dir': str(tmp_path / 'results'),
    }))
    return path


def test_parse_grid():
    assert app.parse_grid('8x16') == (8, 16)
    assert app.parse_grid('4X4') == (4, 4)
    with pytest.raises(argparse.ArgumentTypeError):
        app.parse_grid('eight')


def test_no_command_prints_help(capsys):
    assert app.main([]) == 1
    assert 'usage' in capsys.readouterr().out


def test_run_command(small_config_file, tmp_path, capsys):
    assert app.main(['run', str(small_config_file), '--no-ledger']) == 0
    out = capsys.readouterr().out
    assert 'R_eff' in out
    frame = pd.read_csv(tmp_path / 'results' / 'cli_small.csv')
    assert set(frame['method']) == {'omp', 'lw_omp'}
    assert len(frame) == 4


def test_run_records_in_ledger(small_config_file, tmp_path, capsys):
    db = str(tmp_path / 'runs.db')
    assert app.main(['--db', db, 'run', str(small_config_file)]) == 0
    capsys.readouterr()
    assert app.main(['--db', db, 'history']) == 0
    out = capsys.readouterr().out
    assert 'cli_small' in out
    assert '1 runs, 1 distinct configs' in out


def test_missing_config_is_a_configuration_error(tmp_path):
    assert app.main(['run', str(tmp_path / 'missing.json')]) == 1


def test_sweep_command(tmp_path, capsys):
    out_dir = tmp_path / 'sweep'
    code = app.main(['--db', str(tmp_path / 'runs.db'), 'sweep', '--family', 'success',
                     '--grid', '2x2', '--trials', '1', '--seed', '5', '--output-dir', str(out_dir)])
    assert code == 0
    with open(out_dir / 'success.json') as f:
        payload = json.load(f)
    assert payload['seed'] == 5
    assert payload['config']['beam_grid'] == [[2, 2]]


def test_bad_grid_is_rejected_by_the_parser():
    with pytest.raises(SystemExit):
        app.main(['sweep', '--family', 'success', '--grid', 'big'])


def test_dump_channel(tmp_path):
    target = tmp_path / 'channel.json'
    assert app.main(['dump-channel', '--seed', '3', '--trial', '1', '-o', str(target)]) == 0
    payload = json.loads(target.read_text())
    assert (payload['seed'], payload['trial']) == (3, 1)
    assert len(payload['sub6']['clusters']) == 4
    assert len(payload['mmwave']['clusters']) == 3


def test_history_when_empty(tmp_path, capsys):
    assert app.main(['--db', str(tmp_path / 'empty.db'), 'history']) == 0
    assert 'No runs recorded' in capsys.readouterr().out


def test_validate_quick(capsys):
    assert app.main(['validate', '--quick', '--seed', '1']) == 0
    out = capsys.readouterr().out
    assert out.count('PASS') == 6


def test_dump_channel_writes_spectra(tmp_path):
    out_dir = tmp_path / 'spectra'
    assert app.main(['dump-channel', '--seed', '3', '-o', str(tmp_path / 'channel.json'),
                     '--spectrum-dir', str(out_dir)]) == 0
    sub6 = pd.read_csv(out_dir / 'sub6_spectrum.csv', index_col='beam')
    scaled = pd.read_csv(out_dir / 'scaled_spectrum.csv', index_col='beam')
    assert sub6.shape == (4, 4)
    assert scaled.shape == (32, 32)
    assert (sub6.to_numpy() >= 0).all()
    assert list(scaled.index[:2]) == ['rx_0', 'rx_1']


def test_exported_spectrum_matches_the_trial_pipeline(tmp_path):
    config = preset('rate_vs_measurements', seed=4)
    realization = MultiBandChannel.generate_realization(
        config.sub6, config.mmwave, config.distance, 4, 2)
    sub6_path, scaled_path = app.export_spectra(config, realization, 4, 2, tmp_path)
    _, sigma2_sub6 = ExperimentHarness.noise_models(config)
    oob = OOBExtraction.extract(
        MultiBandChannel.render_narrowband_sub6(realization.sub6), (32, 32), sigma2_sub6,
        dbm_to_watts(config.p_t_dbm), config.j_p, rng=spawn_rng(4, 2, 'sub6_noise'), d=config.sub6.d)
    np.testing.assert_allclose(pd.read_csv(sub6_path, index_col='beam').to_numpy(), oob.spectrum.mags, rtol=1e-12)
    np.testing.assert_allclose(pd.read_csv(scaled_path, index_col='beam').to_numpy(), oob.scaled.mags, rtol=1e-12)
