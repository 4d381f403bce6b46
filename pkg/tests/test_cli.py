import json
import os
import subprocess
import sys

import pytest

from conftest import small_config


@pytest.fixture
def cli():
    import bin.evaluate
    import bin.sweep
    import bin.train
    return bin


@pytest.fixture
def run_file(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps({'task': 'yinyang', 'n_hidden': 6, 'train_samples': 12, 'test_samples': 6,
                                'epochs': 1, 'batch_size': 6, 'dt': 0.5, 'duration': 20.0}))
    return path


def test_parse_value(cli):
    assert cli.sweep.parse_value('dimension', 'inf') == 'inf'
    assert cli.sweep.parse_value('dimension', '3') == 3
    assert cli.sweep.parse_value('sparsity', '0.25') == 0.25
    with pytest.raises(cli.sweep.ConfigError):
        cli.sweep.parse_value('hidden', 'many')


def test_sweep_points(cli):
    base = small_config()
    points = cli.sweep.sweep_points(base, 'sparsity', [0.0, 0.5])
    assert [(value, mode) for value, mode, _ in points] == [(0.0, 'none'), (0.5, 'dynamic'), (0.5, 'static')]
    assert points[2][2].sparsity_mode == 'static'
    points = cli.sweep.sweep_points(base, 'dimension', [0, 'inf'])
    assert [config.dimensions for _, _, config in points] == [0, None]


def test_train_then_evaluate(cli, run_file, tmp_path, monkeypatch, capsys):
    out = tmp_path / 'out'
    monkeypatch.setattr(sys, 'argv', ['train', '--config', str(run_file), '--out', str(out), '--seed', '4'])
    cli.train.main()
    assert 'Test accuracy' in capsys.readouterr().out
    assert json.loads((out / 'config.json').read_text())['seed'] == 4

    monkeypatch.setattr(sys, 'argv', ['evaluate', '--checkpoint', str(out / 'model.spnn'), '--sp', '0.5',
                                      '--save', str(tmp_path / 'pruned.spnn')])
    cli.evaluate.main()
    assert 'Accuracy' in capsys.readouterr().out
    assert (tmp_path / 'pruned.spnn').exists()


def test_invalid_configuration_exit_code(cli, tmp_path, monkeypatch):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'topology': 'ring'}))
    monkeypatch.setattr(sys, 'argv', ['train', '--config', str(path), '--out', str(tmp_path / 'out')])
    with pytest.raises(SystemExit) as e:
        cli.train.main()
    assert e.value.code == 2


def test_scripts_run_from_any_directory(root, run_file, tmp_path):
    # relative arguments are taken from where the command starts, the log file stays in the home directory
    env = {**os.environ, 'SPSNN_HOME': str(root), 'PYTHONPATH': str(root)}
    completed = subprocess.run([sys.executable, str(root / 'bin' / 'train.py'), '--config', run_file.name,
                                '--out', 'out'], cwd=tmp_path, env=env, capture_output=True, text=True)
    assert completed.returncode == 0, completed.stderr
    assert (tmp_path / 'out' / 'config.json').exists()
    assert (root / 'logs' / 'spsnn.log').exists()


def test_user_path_is_relative_to_the_invocation_directory(tmp_path, monkeypatch):
    from spsnn.default import helpers, user_path
    monkeypatch.setattr(helpers, 'INVOCATION_DIR', tmp_path)
    assert user_path('runs/a.json') == tmp_path / 'runs' / 'a.json'
    assert user_path(tmp_path / 'b.json') == tmp_path / 'b.json'
