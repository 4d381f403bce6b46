#!/usr/bin/env python3

"""Neuron positions to synaptic delays.

Delays are ``scale * |r_i - r_j|``, optionally bent by a bounded per-pair factor
``0.5 * (1 + epsilon * tanh(E_ij))``. All matrices are full N x N over the global neuron
index; the network slices the synapse blocks it needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

from .default import ConfigError

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

# Floor on the distance when it is used as a divisor (tangents only).
DISTANCE_FLOOR = 1e-9


@dataclass
class SpatialEmbedding:
    positions: Array
    scale: float = 1.0
    tortuosity: Array | None = None
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.positions.ndim != 2:
            raise ConfigError(f'positions must be N x D, got shape {self.positions.shape}', key='positions')
        if not np.all(np.isfinite(self.positions)):
            raise ConfigError('positions must be finite', key='positions')
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigError(f'scale must be positive, got {self.scale}', key='scale_factor')
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f'epsilon must be in [0, 1), got {self.epsilon}', key='tortuosity_epsilon')
        if self.tortuosity is not None:
            n = self.positions.shape[0]
            if self.tortuosity.shape != (n, n):
                raise ConfigError(f'tortuosity must be {n} x {n}', key='tortuosity')

    @property
    def n_neurons(self) -> int:
        return int(self.positions.shape[0])

    def distances(self) -> Array:
        return np.asarray(cdist(self.positions, self.positions), dtype=np.float64)

    def tortuosity_factor(self) -> Array:
        if self.tortuosity is None:
            return np.ones((self.n_neurons, self.n_neurons))
        return 0.5 * (1.0 + self.epsilon * np.tanh(self.tortuosity))


@dataclass
class DelayMatrix:
    delays: Array
    steps: IntArray | None = None
    clamped: int = 0
    clamp_mask: npt.NDArray[np.bool_] = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))


def euclidean_delays(embedding: SpatialEmbedding) -> DelayMatrix:
    return DelayMatrix(delays=embedding.scale * embedding.distances())


def tortuous_delays(embedding: SpatialEmbedding) -> DelayMatrix:
    if embedding.tortuosity is None:
        raise ConfigError('tortuous delays need a tortuosity matrix', key='tortuous')
    return DelayMatrix(delays=embedding.scale * embedding.tortuosity_factor() * embedding.distances())


def embedding_delays(embedding: SpatialEmbedding) -> DelayMatrix:
    if embedding.tortuosity is not None:
        return tortuous_delays(embedding)
    return euclidean_delays(embedding)


def round_half_up(values: Array) -> IntArray:
    return np.floor(values + 0.5).astype(np.int64)


def delay_to_steps(delays: DelayMatrix | Array, dt: float, capacity: int) -> DelayMatrix:
    """Arrival offsets in steps: at least one step, at most ``capacity - 1``."""
    matrix = delays if isinstance(delays, DelayMatrix) else DelayMatrix(delays=delays)
    if dt <= 0:
        raise ConfigError(f'dt must be positive, got {dt}', key='dt')
    raw = np.maximum(1, round_half_up(matrix.delays / dt))
    clamp_mask = raw > capacity - 1
    steps = np.minimum(raw, capacity - 1)
    return DelayMatrix(delays=matrix.delays, steps=steps, clamped=int(clamp_mask.sum()), clamp_mask=clamp_mask)


def _unit_vectors(embedding: SpatialEmbedding) -> tuple[Array, Array]:
    diff = embedding.positions[:, None, :] - embedding.positions[None, :, :]
    norm = np.sqrt(np.sum(diff * diff, axis=-1))
    return diff / np.maximum(norm, DISTANCE_FLOOR)[..., None], norm


def delay_position_tangent(embedding: SpatialEmbedding, position_tangent: Array) -> Array:
    """Forward derivative of the delays along position directions.

    ``position_tangent`` is N x D x P, the result N x N x P.
    """
    unit, _ = _unit_vectors(embedding)
    coeff = embedding.scale * embedding.tortuosity_factor()
    rel = position_tangent[:, None, :, :] - position_tangent[None, :, :, :]
    return coeff[..., None] * np.einsum('ijd,ijdp->ijp', unit, rel)


def delay_position_vjp(embedding: SpatialEmbedding, grad_delays: Array) -> Array:
    """Pull an N x N delay gradient back onto the N x D positions."""
    unit, _ = _unit_vectors(embedding)
    weighted = embedding.scale * grad_delays * embedding.tortuosity_factor()
    # r_k appears in d_kj with +u_kj and in d_jk with -u_jk = +u_kj
    sym = weighted + weighted.T
    return np.einsum('kj,kjd->kd', sym, unit)


def tortuosity_derivative(embedding: SpatialEmbedding) -> Array:
    """Elementwise d(delay_ij) / d(E_ij)."""
    if embedding.tortuosity is None:
        return np.zeros((embedding.n_neurons, embedding.n_neurons))
    sech2 = 1.0 - np.tanh(embedding.tortuosity) ** 2
    return 0.5 * embedding.epsilon * sech2 * embedding.scale * embedding.distances()
