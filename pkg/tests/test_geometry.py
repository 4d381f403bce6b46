import numpy as np
import pytest

from spsnn.default import ConfigError
from spsnn.geometry import (SpatialEmbedding, delay_position_tangent, delay_position_vjp, delay_to_steps,
                            embedding_delays, euclidean_delays, tortuosity_derivative)


def _delay_loss(positions, grad_delays, scale=1.0, tortuosity=None, epsilon=0.0):
    embedding = SpatialEmbedding(positions=positions, scale=scale, tortuosity=tortuosity, epsilon=epsilon)
    return float(np.sum(grad_delays * embedding_delays(embedding).delays))


def test_euclidean_delays():
    embedding = SpatialEmbedding(positions=np.array([[0.0, 0.0], [3.0, 4.0]]), scale=2.0)
    delays = euclidean_delays(embedding).delays
    assert delays[0, 1] == pytest.approx(10.0)
    assert delays[1, 0] == pytest.approx(10.0)
    assert np.all(np.diag(delays) == 0.0)


def test_euclidean_delays_match_pairwise_distances(rng):
    positions = rng.normal(size=(4, 3))
    delays = euclidean_delays(SpatialEmbedding(positions=positions)).delays
    for i in range(4):
        for j in range(4):
            expected = sum((positions[i, d] - positions[j, d]) ** 2 for d in range(3)) ** 0.5
            assert delays[i, j] == pytest.approx(expected, abs=1e-12)


def test_tortuous_delays_are_bounded():
    positions = np.array([[0.0], [1.0]])
    straight = SpatialEmbedding(positions=positions, tortuosity=np.zeros((2, 2)), epsilon=0.5)
    assert embedding_delays(straight).delays[0, 1] == pytest.approx(0.5)
    bent = SpatialEmbedding(positions=positions, tortuosity=np.full((2, 2), 50.0), epsilon=0.5)
    assert embedding_delays(bent).delays[0, 1] == pytest.approx(0.75)


def test_delay_to_steps_rounds_and_clamps():
    matrix = delay_to_steps(np.array([[0.0, 0.24, 0.26, 100.0]]), dt=0.1, capacity=10)
    assert matrix.steps is not None
    assert matrix.steps.tolist() == [[1, 2, 3, 9]]
    assert matrix.clamped == 1
    assert matrix.clamp_mask.tolist() == [[False, False, False, True]]


def test_invalid_embedding():
    with pytest.raises(ConfigError):
        SpatialEmbedding(positions=np.array([[np.nan, 0.0]]))
    with pytest.raises(ConfigError):
        SpatialEmbedding(positions=np.zeros(3))
    with pytest.raises(ConfigError):
        SpatialEmbedding(positions=np.zeros((2, 1)), epsilon=1.0)


def test_position_vjp_matches_finite_differences(rng):
    positions = rng.normal(size=(4, 2))
    grad_delays = rng.normal(size=(4, 4))
    embedding = SpatialEmbedding(positions=positions, scale=1.5)
    analytic = delay_position_vjp(embedding, grad_delays)
    h = 1e-6
    numeric = np.zeros_like(positions)
    for index in np.ndindex(positions.shape):
        plus, minus = positions.copy(), positions.copy()
        plus[index] += h
        minus[index] -= h
        numeric[index] = (_delay_loss(plus, grad_delays, 1.5) - _delay_loss(minus, grad_delays, 1.5)) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_position_tangent_agrees_with_vjp(rng):
    positions = rng.normal(size=(5, 3))
    embedding = SpatialEmbedding(positions=positions, tortuosity=rng.normal(size=(5, 5)), epsilon=0.3)
    direction = rng.normal(size=(5, 3, 1))
    grad_delays = rng.normal(size=(5, 5))
    tangent = delay_position_tangent(embedding, direction)[..., 0]
    vjp = delay_position_vjp(embedding, grad_delays)
    assert np.sum(grad_delays * tangent) == pytest.approx(np.sum(vjp * direction[..., 0]), rel=1e-10)


def test_tortuosity_derivative(rng):
    positions = rng.normal(size=(3, 2))
    tortuosity = rng.normal(size=(3, 3))
    grad_delays = rng.normal(size=(3, 3))
    embedding = SpatialEmbedding(positions=positions, tortuosity=tortuosity, epsilon=0.4)
    analytic = grad_delays * tortuosity_derivative(embedding)
    h = 1e-6
    index = (0, 2)
    plus, minus = tortuosity.copy(), tortuosity.copy()
    plus[index] += h
    minus[index] -= h
    numeric = (_delay_loss(positions, grad_delays, tortuosity=plus, epsilon=0.4)
               - _delay_loss(positions, grad_delays, tortuosity=minus, epsilon=0.4)) / (2 * h)
    assert analytic[index] == pytest.approx(numeric, rel=1e-6)


def test_coincident_positions_have_finite_tangents():
    embedding = SpatialEmbedding(positions=np.zeros((2, 2)))
    assert np.all(embedding_delays(embedding).delays == 0.0)
    assert np.all(np.isfinite(delay_position_vjp(embedding, np.ones((2, 2)))))


@pytest.mark.parametrize('seed', range(5))
@pytest.mark.parametrize('dims', [1, 2, 3, 8])
def test_random_embedding_delays_form_a_metric(seed, dims):
    rng = np.random.default_rng(seed)
    n = 12
    embedding = SpatialEmbedding(positions=rng.normal(size=(n, dims)), scale=float(rng.uniform(0.5, 3.0)))
    delays = embedding_delays(embedding).delays
    np.testing.assert_allclose(delays, delays.T, rtol=1e-14)
    assert np.all(np.diag(delays) == 0.0)
    assert np.all(delays >= 0.0)
    # d_ik <= d_ij + d_jk for every triple
    through = delays[:, :, None] + delays[None, :, :]
    assert np.all(delays[:, None, :] <= through + 1e-12)


@pytest.mark.parametrize('seed', range(5))
def test_random_tortuous_delays_stay_within_their_bounds(seed):
    rng = np.random.default_rng(seed)
    n, epsilon, scale = 10, 0.6, 1.7
    positions = rng.normal(size=(n, 3))
    tortuosity = rng.normal(scale=5.0, size=(n, n))
    bent = embedding_delays(SpatialEmbedding(positions=positions, scale=scale, tortuosity=tortuosity,
                                             epsilon=epsilon)).delays
    straight = embedding_delays(SpatialEmbedding(positions=positions, scale=scale)).delays
    assert np.all(bent >= 0.5 * (1 - epsilon) * straight - 1e-12)
    assert np.all(bent <= 0.5 * (1 + epsilon) * straight + 1e-12)


@pytest.mark.parametrize('seed', range(5))
def test_random_position_tangents_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, dims = 6, 3
    positions = rng.normal(size=(n, dims))
    tortuosity = rng.normal(size=(n, n))
    direction = rng.normal(size=(n, dims))
    tangent = delay_position_tangent(SpatialEmbedding(positions=positions, tortuosity=tortuosity, epsilon=0.3),
                                     direction[..., None])[..., 0]
    h = 1e-6

    def delays_at(p):
        return embedding_delays(SpatialEmbedding(positions=p, tortuosity=tortuosity, epsilon=0.3)).delays

    numeric = (delays_at(positions + h * direction) - delays_at(positions - h * direction)) / (2 * h)
    np.testing.assert_allclose(tangent, numeric, rtol=1e-5, atol=1e-8)
