import math

import numpy as np
import pytest

from spsnn.default import ConfigError
from spsnn.objectives import (FinalVoltageObjective, ReadoutObjective, TtfsHingeObjective, readout_ce,
                              readout_ce_batch, superspike, ttfs_hinge, ttfs_hinge_batch)
from spsnn.simulator import SimTrace


def _ttfs_trace(out_times, first_spike_step):
    return SimTrace(mode='ttfs', n_steps=100, dt=0.1, raster=np.zeros((0, 3), dtype=np.int64),
                    final_v=np.zeros((len(out_times), 2)), out_times=np.asarray(out_times, dtype=np.float64),
                    first_spike_step=np.asarray(first_spike_step, dtype=np.int64))


def test_hinge_at_the_margin():
    assert ttfs_hinge(5.0, [6.0], beta=1.0, margin=1.0) == pytest.approx(math.log(2))
    assert ttfs_hinge(0.0, [50.0, 60.0]) < 1e-20
    assert ttfs_hinge(9.0, [1.0]) == pytest.approx(9.0, rel=1e-3)


def test_hinge_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        ttfs_hinge(1.0, [2.0], beta=0.0)
    with pytest.raises(ConfigError):
        ttfs_hinge(1.0, [2.0], margin=-1.0)


def test_hinge_batch_matches_scalar_and_finite_differences(rng):
    out_times = rng.uniform(0.0, 10.0, size=(4, 3))
    labels = np.array([0, 2, 1, 2])
    loss, grad = ttfs_hinge_batch(out_times, labels, beta=0.7, margin=1.5)
    scalar = [ttfs_hinge(t[y], np.delete(t, y), beta=0.7, margin=1.5) for t, y in zip(out_times, labels)]
    assert loss == pytest.approx(np.mean(scalar))
    h = 1e-6
    for index in np.ndindex(out_times.shape):
        plus, minus = out_times.copy(), out_times.copy()
        plus[index] += h
        minus[index] -= h
        numeric = (ttfs_hinge_batch(plus, labels, 0.7, 1.5)[0] - ttfs_hinge_batch(minus, labels, 0.7, 1.5)[0]) / (2 * h)
        assert grad[index] == pytest.approx(numeric, rel=1e-5, abs=1e-9)


def test_superspike():
    heaviside, derivative = superspike(np.array([0.0, 1.0, -0.5]))
    assert heaviside.tolist() == [1.0, 1.0, 0.0]
    np.testing.assert_allclose(derivative, [1.0, 0.25, 1 / 2.25])


def test_cross_entropy_with_zero_readout():
    assert readout_ce(np.array([3.0, 0.0, 7.0]), np.zeros((4, 3)), 2) == pytest.approx(math.log(4))


def test_cross_entropy_batch_gradients(rng):
    counts = rng.integers(0, 5, size=(3, 4)).astype(np.float64)
    readout = rng.normal(size=(2, 4))
    labels = np.array([1, 0, 1])
    loss, grad_counts, grad_readout = readout_ce_batch(counts, readout, labels)
    assert loss == pytest.approx(np.mean([readout_ce(c, readout, y) for c, y in zip(counts, labels)]))
    h = 1e-6
    plus, minus = readout.copy(), readout.copy()
    plus[1, 2] += h
    minus[1, 2] -= h
    numeric = (readout_ce_batch(counts, plus, labels)[0] - readout_ce_batch(counts, minus, labels)[0]) / (2 * h)
    assert grad_readout[1, 2] == pytest.approx(numeric, rel=1e-6)
    plus, minus = counts.copy(), counts.copy()
    plus[2, 0] += h
    minus[2, 0] -= h
    numeric = (readout_ce_batch(plus, readout, labels)[0] - readout_ce_batch(minus, readout, labels)[0]) / (2 * h)
    assert grad_counts[2, 0] == pytest.approx(numeric, rel=1e-6)


def test_silent_outputs_get_no_adjoint():
    trace = _ttfs_trace([[2.0, 10.0, 10.0]], [[20, -1, -1]])
    result = TtfsHingeObjective(beta=1.0, margin=1.0).evaluate(trace, {}, np.array([0]))
    assert result.adjoints.out_times is not None
    assert result.adjoints.out_times[0, 1:].tolist() == [0.0, 0.0]
    assert result.adjoints.out_times[0, 0] > 0


def test_objective_topology_checks():
    trace = _ttfs_trace([[1.0, 2.0]], [[10, 20]])
    with pytest.raises(ConfigError):
        ReadoutObjective().evaluate(trace, {}, np.array([0]))
    rate = SimTrace(mode='rate', n_steps=10, dt=0.1, raster=np.zeros((0, 3), dtype=np.int64),
                    final_v=np.zeros((1, 2)), counts=np.array([[1.0, 2.0]]))
    with pytest.raises(ConfigError):
        TtfsHingeObjective().evaluate(rate, {}, np.array([0]))
    result = ReadoutObjective().evaluate(rate, {'readout': np.zeros((3, 2))}, np.array([1]))
    assert result.loss == pytest.approx(math.log(3))
    assert result.param_grads['readout'].shape == (3, 2)


def test_final_voltage_objective():
    trace = _ttfs_trace([[1.0], [1.0]], [[1], [1]])
    trace.final_v = np.array([[0.5, 2.0], [1.5, 4.0]])
    result = FinalVoltageObjective(neurons=[0]).evaluate(trace, {}, np.array([0, 0]))
    assert result.loss == pytest.approx(1.0)
    assert result.adjoints.final_v is not None
    assert result.adjoints.final_v.tolist() == [[0.5, 0.0], [0.5, 0.0]]
