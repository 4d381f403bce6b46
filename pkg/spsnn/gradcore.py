#!/usr/bin/env python3

"""Event-aware derivative rules.

Spikes are discrete events, so plain chain-rule differentiation of the time-stepped simulation
misses how parameters move spike times, delayed arrivals and resets. The rules below carry those
effects as tangents:

* a spike emitted at a threshold crossing moves by ``-T[v] / v'``, both read at the crossing
  inside the step that detected it (see ``crossing_slope``), and its arrival additionally moves
  with the delay;
* an arrival moving later by ``dt_post`` leaves the current ``w / tau_syn * dt_post`` higher and
  the voltage ``w * dt_post`` lower than an unmoved arrival would;
* a reset maps the voltage tangent at the crossing by the ratio of the slopes after and before
  the spike;
* an AdEx adaptation jump moving later by ``dt_pre`` leaves the adaptation current
  ``b / tau_adapt * dt_pre`` higher and the voltage ``b * dt_pre`` higher.

Jump contributions wait in a ring buffer per neuron (``SpikeQueue``); the reverse engine uses the
same buffer layout for adjoints (``AdjointRing``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Protocol

import numpy as np
import numpy.typing as npt

from .default import GradientError

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]
Params = dict[str, Array]

logger = logging.getLogger(__name__)

# Floor on the voltage slope at a crossing, in voltage units per ms.
SLOPE_GUARD = 1e-3


@dataclass
class DiagnosticCounters:
    delay_clamps: int = 0
    grazing_spikes: int = 0
    guarded_resets: int = 0
    voltage_clips: int = 0
    silent_outputs: int = 0

    def merge(self, other: DiagnosticCounters) -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def report(self) -> None:
        for name, value in self.as_dict().items():
            if value and name != 'silent_outputs':
                logger.warning(f'{name}: {value}')


def guard_slope(dvdt: Array, spikes: BoolArray, guard: float=SLOPE_GUARD,
                counters: DiagnosticCounters | None=None) -> Array:
    """Slope used as a divisor at crossings; grazing crossings are counted."""
    low = spikes & (dvdt < guard)
    if counters is not None and low.any():
        n_low = int(low.sum())
        counters.grazing_spikes += n_low
        counters.guarded_resets += n_low
    return np.maximum(dvdt, guard)


def crossing_slope(v: Array, v_prev: Array, dt: float) -> tuple[Array, Array]:
    """Where ``v`` crossed the threshold between the previous step and this one.

    Returns ``theta``, the share of the step left after the crossing, and the slope over the
    step. The voltage at the crossing is ``(1 - theta) * v + theta * v_prev``, so is its tangent.
    """
    rise = v - v_prev
    rising = rise > 0
    theta = np.where(rising, np.clip((v - 1.0) / np.where(rising, rise, 1.0), 0.0, 1.0), 0.0)
    return theta, rise / dt


def spike_time_tangent(v_pre_tangent: Array, dvdt_pre: Array, delay_tangent: Array | None=None,
                       guard: float=SLOPE_GUARD) -> Array:
    """T[t_post] = -T[v_pre] / max(v', guard) + T[delay].

    ``dvdt_pre`` broadcasts against ``v_pre_tangent`` (a trailing tangent axis is allowed).
    Input neurons have static spike times: pass a zero ``v_pre_tangent``.
    """
    t_emit = -v_pre_tangent / np.maximum(dvdt_pre, guard)
    if delay_tangent is None:
        return t_emit
    return t_emit + delay_tangent


def v_reset(spikes: BoolArray, v: Array, dvdt_minus: Array, dvdt_plus: Array, v_noreset_next: Array,
            v_tangent: Array | None=None, v_noreset_tangent: Array | None=None, enabled: bool=True,
            guard: float=SLOPE_GUARD) -> tuple[Array, Array | None]:
    """Reset to 0 on a spike; the tangent goes through the slope ratio instead of vanishing.

    Tangent arrays carry a trailing direction axis.
    """
    v_next = np.where(spikes, 0.0, v_noreset_next)
    if v_tangent is None or v_noreset_tangent is None:
        return v_next, None
    ratio = reset_ratio(dvdt_minus, dvdt_plus, guard) if enabled else np.zeros_like(dvdt_minus)
    tangent = np.where(spikes[..., None], ratio[..., None] * v_tangent, v_noreset_tangent)
    return v_next, tangent


def reset_ratio(dvdt_minus: Array, dvdt_plus: Array, guard: float=SLOPE_GUARD) -> Array:
    return dvdt_plus / np.maximum(dvdt_minus, guard)


class QueuedJumps(NamedTuple):
    i_jump: Array
    v_jump: Array
    i_adapt_jump: Array
    i_tangent: Array | None
    v_tangent: Array | None
    a_tangent: Array | None


class SpikeQueue:
    """One ring buffer per (sample, neuron) of ``capacity`` future steps.

    Slot ``step % capacity`` holds what arrives at ``step``. With ``directions > 0`` every slot
    also carries tangents along that many parameter directions.
    """

    def __init__(self, capacity: int, batch: int, neurons: int, directions: int=0) -> None:
        if capacity < 2:
            raise ValueError('a spike queue needs at least two slots')
        self.capacity = capacity
        self.i_jump = np.zeros((capacity, batch, neurons))
        self.v_jump = np.zeros((capacity, batch, neurons))
        self.i_adapt_jump = np.zeros((capacity, batch, neurons))
        self.directions = directions
        self.i_tangent: Array | None = None
        self.v_tangent: Array | None = None
        self.a_tangent: Array | None = None
        if directions:
            self.i_tangent = np.zeros((capacity, batch, neurons, directions))
            self.v_tangent = np.zeros((capacity, batch, neurons, directions))
            self.a_tangent = np.zeros((capacity, batch, neurons, directions))

    def slots(self, step: int, offsets: IntArray | int) -> IntArray:
        return np.asarray((step + np.asarray(offsets)) % self.capacity, dtype=np.int64)

    def snapshot(self) -> tuple[Array, Array]:
        # v_jump is identically zero in the primal
        return self.i_jump.copy(), self.i_adapt_jump.copy()

    def restore(self, snapshot: tuple[Array, Array]) -> None:
        self.i_jump[...] = snapshot[0]
        self.v_jump[...] = 0.0
        self.i_adapt_jump[...] = snapshot[1]


def enqueue_spike(queue: SpikeQueue, step: int, offsets: IntArray, batch_idx: IntArray, targets: IntArray,
                  w: Array, tau_syn: float, t_post_tangent: Array | None=None, w_tangent: Array | None=None,
                  v_correction: Array | None=None) -> None:
    """Deliver events (E of them) to their targets (E x T arrays, or broadcastable).

    ``offsets``, ``targets`` and ``w`` are E x T; ``batch_idx`` is E. Tangents carry a trailing
    direction axis.
    """
    slots = queue.slots(step, offsets)
    index = (slots, batch_idx[:, None], targets)
    np.add.at(queue.i_jump, index, w)
    if v_correction is not None:
        np.add.at(queue.v_jump, index, v_correction)
    if queue.directions and t_post_tangent is not None:
        assert queue.i_tangent is not None and queue.v_tangent is not None
        i_tan = (w / tau_syn)[..., None] * t_post_tangent
        if w_tangent is not None:
            i_tan = i_tan + w_tangent
        np.add.at(queue.i_tangent, index, i_tan)
        np.add.at(queue.v_tangent, index, -w[..., None] * t_post_tangent)


def enqueue_adaptation(queue: SpikeQueue, step: int, batch_idx: IntArray, neurons: IntArray, b: float,
                       tau_adapt: float, t_pre_tangent: Array | None=None, offset: int=1,
                       amount: Array | float | None=None, v_correction: Array | None=None) -> None:
    """Adaptation jump of the emitting neurons themselves, ``offset`` steps ahead."""
    slot = (step + offset) % queue.capacity
    np.add.at(queue.i_adapt_jump, (slot, batch_idx, neurons), b if amount is None else amount)
    if v_correction is not None:
        np.add.at(queue.v_jump, (slot, batch_idx, neurons), v_correction)
    if queue.directions and t_pre_tangent is not None:
        assert queue.a_tangent is not None and queue.v_tangent is not None
        np.add.at(queue.a_tangent, (slot, batch_idx, neurons), (b / tau_adapt) * t_pre_tangent)
        np.add.at(queue.v_tangent, (slot, batch_idx, neurons), b * t_pre_tangent)


def dequeue_jumps(queue: SpikeQueue, step: int) -> QueuedJumps:
    """Return what arrives at ``step`` and clear the slot for reuse."""
    slot = step % queue.capacity
    jumps = QueuedJumps(i_jump=queue.i_jump[slot].copy(), v_jump=queue.v_jump[slot].copy(),
                        i_adapt_jump=queue.i_adapt_jump[slot].copy(),
                        i_tangent=None if queue.i_tangent is None else queue.i_tangent[slot].copy(),
                        v_tangent=None if queue.v_tangent is None else queue.v_tangent[slot].copy(),
                        a_tangent=None if queue.a_tangent is None else queue.a_tangent[slot].copy())
    queue.i_jump[slot] = 0.0
    queue.v_jump[slot] = 0.0
    queue.i_adapt_jump[slot] = 0.0
    if queue.directions:
        assert queue.i_tangent is not None and queue.v_tangent is not None and queue.a_tangent is not None
        queue.i_tangent[slot] = 0.0
        queue.v_tangent[slot] = 0.0
        queue.a_tangent[slot] = 0.0
    return jumps


class AdjointRing:
    """Adjoints of the jumps delivered at each future step, laid out like ``SpikeQueue``.

    Walking backwards, step ``k`` stores the adjoints of what it dequeued; an emission at an
    earlier step reads them back at ``(k_emit + offset) % capacity``. Steps past the horizon
    never store, so their slots read as zero.
    """

    def __init__(self, capacity: int, batch: int, neurons: int) -> None:
        self.capacity = capacity
        self.lam_i = np.zeros((capacity, batch, neurons))
        self.lam_v = np.zeros((capacity, batch, neurons))
        self.lam_a = np.zeros((capacity, batch, neurons))

    def store(self, step: int, lam_i: Array, lam_v: Array, lam_a: Array) -> None:
        slot = step % self.capacity
        self.lam_i[slot] = lam_i
        self.lam_v[slot] = lam_v
        self.lam_a[slot] = lam_a

    def gather(self, step: int, offsets: IntArray, batch_idx: IntArray,
               targets: IntArray) -> tuple[Array, Array]:
        slots = (step + offsets) % self.capacity
        index = (slots, batch_idx[:, None], targets)
        return self.lam_i[index], self.lam_v[index]

    def gather_adaptation(self, step: int, batch_idx: IntArray, neurons: IntArray,
                          offset: int=1) -> tuple[Array, Array]:
        index = ((step + offset) % self.capacity, batch_idx, neurons)
        return self.lam_a[index], self.lam_v[index]


@dataclass
class GradientResult:
    loss: float
    gradients: Params
    counters: DiagnosticCounters = field(default_factory=DiagnosticCounters)


class LossProgram(Protocol):
    """A simulation followed by an objective, differentiable by one of the engines."""

    def reverse(self, params: Params) -> GradientResult:
        ...

    def tangents(self, params: Params, directions: Params) -> tuple[float, Array]:
        ...


def unit_directions(params: Params, names: list[str] | None=None) -> tuple[Params, list[tuple[str, int]]]:
    """One direction per scalar entry of the selected parameters (trailing axis)."""
    names = names if names is not None else list(params)
    index: list[tuple[str, int]] = [(name, i) for name in names for i in range(params[name].size)]
    n_dir = len(index)
    directions: Params = {}
    offset = 0
    for name, array in params.items():
        d = np.zeros(array.shape + (n_dir,))
        if name in names:
            flat = d.reshape(array.size, n_dir)
            flat[np.arange(array.size), offset + np.arange(array.size)] = 1.0
            offset += array.size
        directions[name] = d
    return directions, index


def check_finite(gradients: Params) -> None:
    for name, g in gradients.items():
        bad = np.flatnonzero(~np.isfinite(g))
        if bad.size:
            raise GradientError('Non-finite gradient', parameter=name, index=int(bad[0]))


def grad(program: LossProgram, params: Params, engine: str='reverse',
         names: list[str] | None=None) -> GradientResult:
    """dLoss/dθ for every parameter block.

    ``engine='reverse'`` walks the recorded steps backwards once; ``engine='forward'`` pushes one
    tangent per parameter entry through the simulation (small networks only).
    """
    if engine == 'reverse':
        result = program.reverse(params)
    elif engine == 'forward':
        directions, index = unit_directions(params, names)
        loss, derivatives = program.tangents(params, directions)
        gradients = {name: np.zeros_like(array) for name, array in params.items()}
        for (name, i), value in zip(index, derivatives):
            gradients[name].flat[i] = value
        result = GradientResult(loss=loss, gradients=gradients)
    else:
        raise ValueError(f'Unknown engine {engine}')
    check_finite(result.gradients)
    return result

