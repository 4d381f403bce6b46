import numpy as np
import pytest
from rich.console import Console

from conftest import small_config

from spsnn.config import load_run_config
from spsnn.default import ConfigError
from spsnn.gradcheck import EntryCheck, GradientCheck, render_report, reset_toy


def test_relative_error():
    assert EntryCheck('w', 0, engine=1.0, reference=1.01).error == pytest.approx(0.01 / 1.01)
    assert EntryCheck('w', 0, engine=0.0, reference=0.0).error == 0.0


def test_reset_rule_is_needed_for_matching_gradients():
    with_rule = reset_toy(reset_tangent=True).run(tolerance=1e-2)
    assert with_rule.passed, {name: block.max_error for name, block in with_rule.blocks.items()}
    without_rule = reset_toy(reset_tangent=False).run(names=['w_input_hidden'], tolerance=1e-2)
    assert not without_rule.passed


def test_reset_rule_matches_the_resolved_reference():
    report = reset_toy(reset_tangent=True, reference='resolved').run(tolerance=1e-2)
    assert report.passed, {name: block.max_error for name, block in report.blocks.items()}


@pytest.mark.parametrize('name, tolerance', [
    ('gradcheck', 1e-2),
    ('gradcheck_inf', 1e-2),
    ('gradcheck_adex', 2e-2),
])
def test_shipped_gradcheck_configs_pass(root, name, tolerance):
    config = load_run_config(root / 'config' / 'runs' / f'{name}.json')
    report = GradientCheck.from_config(config).run(tolerance=tolerance)
    assert report.passed, {block: r.max_error for block, r in report.blocks.items()}
    # most entries are scored, not skipped
    entries = [e for r in report.blocks.values() for e in r.entries]
    assert sum(e.flagged for e in entries) < len(entries) // 4


def test_report_structure():
    config = small_config(dt=0.05, gradcheck_samples=2)
    check = GradientCheck.from_config(config)
    report = check.run(names=['w_hidden_output'])
    block = report.blocks['w_hidden_output']
    assert len(block.entries) == config.n_hidden * config.n_outputs
    assert np.isfinite(report.loss)
    assert all(np.isfinite(e.reference) for e in block.entries if not e.flagged)
    console = Console(record=True, width=120)
    render_report(report, console)
    assert 'w_hidden_output' in console.export_text()


def test_recurrent_networks_are_not_checked():
    with pytest.raises(ConfigError):
        GradientCheck.from_config(small_config(topology='recurrent'))


def test_weights_only_network_has_no_position_block():
    report = GradientCheck.from_config(small_config(dimensions=0, gradcheck_samples=1)).run()
    assert sorted(report.blocks) == ['w_hidden_output', 'w_input_hidden']
