import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spsnn.default import ConfigError
from spsnn.neurons import (V_CAP, Jumps, NeuronParams, NeuronState, adex_drive, adex_step, lif_step,
                           threshold)


def _no_jumps(shape):
    return Jumps(np.zeros(shape), np.zeros(shape), np.zeros(shape))


def test_lif_current_enters_voltage_one_step_later():
    params = NeuronParams(tau_mem=10.0, tau_syn=5.0)
    state = NeuronState.zeros(1, 1)
    jumps = Jumps(np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    first = lif_step(state, params, 0.1, jumps)
    assert first.v_noreset_next[0, 0] == 0.0
    assert first.i_next[0, 0] == 1.0
    state = NeuronState(v=first.v_noreset_next, i_syn=first.i_next, i_adapt=first.i_adapt_next,
                        has_spiked=state.has_spiked)
    second = lif_step(state, params, 0.1, _no_jumps((1, 1)))
    assert second.v_noreset_next[0, 0] == pytest.approx(0.1)
    assert second.i_next[0, 0] == pytest.approx(np.exp(-0.1 / 5.0))


def test_lif_leak_and_slopes():
    params = NeuronParams(tau_mem=10.0, tau_syn=5.0)
    state = NeuronState(v=np.array([[1.2]]), i_syn=np.array([[0.5]]), i_adapt=np.zeros((1, 1)),
                        has_spiked=np.zeros((1, 1), dtype=bool))
    result = lif_step(state, params, 0.1, _no_jumps((1, 1)))
    assert result.v_noreset_next[0, 0] == pytest.approx(np.exp(-0.01) * 1.2 + 0.05)
    assert result.dvdt_minus[0, 0] == pytest.approx(0.5 - 0.12)
    assert result.dvdt_plus[0, 0] == pytest.approx(0.5)
    pre = lif_step(state, params, 0.1, _no_jumps((1, 1)), reset_slope='pre_voltage')
    assert pre.dvdt_plus[0, 0] == pytest.approx(0.5 - 0.12)


def test_threshold_once_per_neuron():
    v = np.array([[0.5, 1.0, 2.0]])
    assert threshold(v).tolist() == [[False, True, True]]
    has_spiked = np.array([[False, False, True]])
    assert threshold(v, has_spiked, one_spike=True).tolist() == [[False, True, False]]
    assert threshold(v, has_spiked).tolist() == [[False, True, True]]


def test_adex_drive_slope():
    params = NeuronParams(tau_mem=10.0, delta_t=0.1)
    v = np.array([0.3, 0.5, 0.7])
    zero = np.zeros(3)
    _, slope = adex_drive(v, zero, zero, params)
    h = 1e-6
    plus, _ = adex_drive(v + h, zero, zero, params)
    minus, _ = adex_drive(v - h, zero, zero, params)
    np.testing.assert_allclose(slope, (plus - minus) / (2 * h), rtol=1e-6)


def test_adex_clips_runaway_voltage():
    params = NeuronParams(tau_mem=20.0, delta_t=0.1)
    state = NeuronState(v=np.array([[5.0]]), i_syn=np.zeros((1, 1)), i_adapt=np.zeros((1, 1)),
                        has_spiked=np.zeros((1, 1), dtype=bool))
    result = adex_step(state, params, 1.0, _no_jumps((1, 1)))
    assert result.clipped[0, 0]
    assert result.v_noreset_next[0, 0] == V_CAP
    assert result.dv_coeff[0, 0] == 0.0


def test_adex_adaptation_follows_voltage():
    params = NeuronParams(tau_mem=10.0, tau_adapt=50.0, a=0.2, b=0.1)
    state = NeuronState(v=np.array([[0.4]]), i_syn=np.zeros((1, 1)), i_adapt=np.zeros((1, 1)),
                        has_spiked=np.zeros((1, 1), dtype=bool))
    result = adex_step(state, params, 0.5, _no_jumps((1, 1)))
    assert result.i_adapt_next[0, 0] == pytest.approx(0.5 * 0.2 * 0.4 / 50.0)


def test_invalid_neuron_params():
    with pytest.raises(ConfigError):
        NeuronParams(tau_mem=0.0)
    with pytest.raises(ConfigError):
        NeuronParams(v_th=2.0)


def test_lif_decay_over_one_membrane_time_constant():
    params = NeuronParams(tau_mem=10.0, tau_syn=5.0)
    state = NeuronState(v=np.ones((1, 1)), i_syn=np.zeros((1, 1)), i_adapt=np.zeros((1, 1)),
                        has_spiked=np.zeros((1, 1), dtype=bool))
    result = lif_step(state, params, 10.0, _no_jumps((1, 1)))
    assert result.v_noreset_next[0, 0] == pytest.approx(np.exp(-1.0))


def _integrate(step, params, dt, duration, v0, i0):
    state = NeuronState(v=np.array([[v0]]), i_syn=np.array([[i0]]), i_adapt=np.zeros((1, 1)),
                        has_spiked=np.zeros((1, 1), dtype=bool))
    for _ in range(int(round(duration / dt))):
        result = step(state, params, dt, _no_jumps((1, 1)))
        state = NeuronState(v=result.v_noreset_next, i_syn=result.i_next, i_adapt=result.i_adapt_next,
                            has_spiked=state.has_spiked)
    return state


def _lif_rhs(params):
    def rhs(t, y):
        v, i = y
        return [-v / params.tau_mem + i, -i / params.tau_syn]
    return rhs


def _adex_rhs(params):
    def rhs(t, y):
        v, i, a = y
        drive = (-v + params.delta_t * np.exp((v - 0.5) / params.delta_t)) / params.tau_mem + i - a
        return [drive, -i / params.tau_syn, (params.a * v - a) / params.tau_adapt]
    return rhs


def test_lif_steps_converge_to_the_continuous_solution():
    params = NeuronParams(tau_mem=10.0, tau_syn=5.0)
    exact = solve_ivp(_lif_rhs(params), (0.0, 10.0), [0.2, 0.5], rtol=1e-11, atol=1e-12).y[:, -1]
    errors = []
    for dt in (0.01, 0.005, 0.001):
        state = _integrate(lif_step, params, dt, 10.0, 0.2, 0.5)
        errors.append(abs(state.v[0, 0] - exact[0]))
        # the current decays exactly
        assert state.i_syn[0, 0] == pytest.approx(exact[1], rel=1e-9)
    assert errors[-1] < 5e-3
    # first order in dt
    assert 1.8 < errors[0] / errors[1] < 2.2


def test_adex_steps_converge_to_the_continuous_solution():
    params = NeuronParams(tau_mem=10.0, tau_syn=5.0, tau_adapt=50.0, a=0.1, delta_t=0.1)
    exact = solve_ivp(_adex_rhs(params), (0.0, 10.0), [0.2, 0.05, 0.0], rtol=1e-11, atol=1e-12).y[:, -1]
    errors = []
    for dt in (0.01, 0.005, 0.001):
        state = _integrate(adex_step, params, dt, 10.0, 0.2, 0.05)
        errors.append(abs(state.v[0, 0] - exact[0]))
        assert state.i_adapt[0, 0] == pytest.approx(exact[2], rel=1e-2, abs=1e-6)
    assert errors[-1] < 1e-3
    assert errors[-1] < errors[0]


def _fine_euler(rhs, y, dt, substeps=1000):
    h = dt / substeps
    y = [np.asarray(c, dtype=np.float64) for c in y]
    for _ in range(substeps):
        y = [c + h * d for c, d in zip(y, rhs(0.0, y))]
    return y


@pytest.mark.parametrize('step, rhs', [(lif_step, _lif_rhs), (adex_step, _adex_rhs)])
def test_one_step_against_fine_substeps(rng, step, rhs):
    params = NeuronParams(tau_mem=10.0, tau_syn=5.0, tau_adapt=50.0, a=0.1, delta_t=0.1)
    v, i_syn = rng.uniform(0.0, 0.9, size=(1, 6)), rng.uniform(-0.5, 0.5, size=(1, 6))
    i_adapt = np.zeros((1, 6)) if step is lif_step else rng.uniform(0.0, 0.05, size=(1, 6))
    state = NeuronState(v=v, i_syn=i_syn, i_adapt=i_adapt, has_spiked=np.zeros((1, 6), dtype=bool))
    result = step(state, params, 1e-3, _no_jumps((1, 6)))
    y = [v, i_syn] if step is lif_step else [v, i_syn, i_adapt]
    fine = _fine_euler(rhs(params), y, 1e-3)
    np.testing.assert_allclose(result.v_noreset_next, fine[0], atol=1e-4)
    np.testing.assert_allclose(result.i_next, fine[1], atol=1e-4)
