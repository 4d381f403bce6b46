#!/usr/bin/env python3

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from scipy.special import expit, logsumexp, softmax

from .default import ConfigError

if TYPE_CHECKING:
    from .config import RunConfig
    from .simulator import SimTrace

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
Params = dict[str, Array]


def softplus(z: Array | float) -> Array:
    return np.logaddexp(0.0, z)


def ttfs_hinge(t_correct: float, others: Sequence[float], beta: float=1.0, margin: float=1.0) -> float:
    """Sum of softplus(beta * (t_correct - t_k + margin)) over the wrong outputs."""
    if beta <= 0 or margin < 0:
        raise ConfigError(f'hinge needs beta > 0 and margin >= 0, got {beta}, {margin}', key='hinge_beta')
    z = beta * (t_correct - np.asarray(others, dtype=np.float64) + margin)
    return float(np.sum(softplus(z)))


def ttfs_hinge_batch(out_times: Array, labels: IntArray, beta: float=1.0,
                     margin: float=1.0) -> tuple[float, Array]:
    """Batch-mean hinge loss and its derivative in every output time."""
    batch = out_times.shape[0]
    rows = np.arange(batch)
    t_correct = out_times[rows, labels]
    z = beta * (t_correct[:, None] - out_times + margin)
    wrong = np.ones_like(out_times, dtype=bool)
    wrong[rows, labels] = False
    loss = float(np.sum(np.where(wrong, softplus(z), 0.0))) / batch
    sig = np.where(wrong, expit(z), 0.0) * beta / batch
    grad = -sig
    grad[rows, labels] = sig.sum(axis=1)
    return loss, grad


def superspike(x: Array) -> tuple[Array, Array]:
    """Heaviside spike indicator and its surrogate derivative 1 / (|x| + 1)^2."""
    x = np.asarray(x, dtype=np.float64)
    return (x >= 0).astype(np.float64), 1.0 / (np.abs(x) + 1.0) ** 2


def readout_ce(counts: Array, readout: Array, label: int) -> float:
    logits = readout @ counts
    return float(logsumexp(logits) - logits[label])


def readout_ce_batch(counts: Array, readout: Array, labels: IntArray) -> tuple[float, Array, Array]:
    """Batch-mean cross-entropy; returns (loss, d/d counts, d/d readout)."""
    batch = counts.shape[0]
    logits = counts @ readout.T
    rows = np.arange(batch)
    loss = float(np.sum(logsumexp(logits, axis=1) - logits[rows, labels])) / batch
    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    dlogits /= batch
    return loss, dlogits @ readout, dlogits.T @ counts


@dataclass
class Adjoints:
    """Loss derivatives in the simulation outputs."""

    out_times: Array | None = None
    counts: Array | None = None
    final_v: Array | None = None


@dataclass
class ObjectiveResult:
    loss: float
    adjoints: Adjoints
    # derivatives in parameters the objective reads directly (the read-out)
    param_grads: Params = field(default_factory=dict)


class Objective(Protocol):

    def evaluate(self, trace: SimTrace, params: Params, labels: IntArray) -> ObjectiveResult:
        ...


@dataclass
class TtfsHingeObjective:
    beta: float = 1.0
    margin: float = 1.0

    def evaluate(self, trace: SimTrace, params: Params, labels: IntArray) -> ObjectiveResult:
        if trace.out_times is None or trace.first_spike_step is None:
            raise ConfigError('time-to-first-spike loss needs the feed-forward network', key='topology')
        loss, grad = ttfs_hinge_batch(trace.out_times, labels, self.beta, self.margin)
        # the sentinel of a silent output does not move with the parameters
        grad = np.where(trace.first_spike_step >= 0, grad, 0.0)
        return ObjectiveResult(loss=loss, adjoints=Adjoints(out_times=grad))


@dataclass
class ReadoutObjective:

    def evaluate(self, trace: SimTrace, params: Params, labels: IntArray) -> ObjectiveResult:
        if trace.counts is None or 'readout' not in params:
            raise ConfigError('cross-entropy read-out needs the recurrent network', key='topology')
        loss, grad_counts, grad_readout = readout_ce_batch(trace.counts, params['readout'], labels)
        return ObjectiveResult(loss=loss, adjoints=Adjoints(counts=grad_counts),
                               param_grads={'readout': grad_readout})


@dataclass
class FinalVoltageObjective:
    """Batch-mean sum of the membrane voltages at the end of the horizon."""

    neurons: Sequence[int] | None = None

    def evaluate(self, trace: SimTrace, params: Params, labels: IntArray) -> ObjectiveResult:
        batch, n = trace.final_v.shape
        mask = np.zeros(n)
        mask[list(self.neurons) if self.neurons is not None else slice(None)] = 1.0
        loss = float(np.sum(trace.final_v * mask)) / batch
        return ObjectiveResult(loss=loss, adjoints=Adjoints(final_v=np.tile(mask / batch, (batch, 1))))


def make_objective(config: RunConfig) -> TtfsHingeObjective | ReadoutObjective:
    if config.topology == 'feedforward':
        return TtfsHingeObjective(beta=config.hinge_beta, margin=config.hinge_margin)
    return ReadoutObjective()
