#!/usr/bin/env python3

"""Time-stepped simulation of a network over a batch, with two gradient engines.

Step ``k`` of every pass does, in this order:

1. take the jumps queued for step ``k`` (they act on the state of step ``k + 1``);
2. detect spikes (``v >= 1``; once per neuron in the feed-forward network);
3. queue every outgoing spike ``steps`` ahead on each target, and AdEx adaptation one step ahead
   on the emitting neuron;
4. advance the neuron state, resetting the voltage of neurons that spiked.

``run_with_gradients`` replays the pass backwards segment by segment from state snapshots taken
every ``checkpoint_interval`` steps. ``run_with_tangents`` carries one tangent per parameter
direction alongside the state.

Gradient checking uses two reference variants of the forward pass, which differ in where an
event sits inside its step:

* ``resolved`` delivers every spike at its threshold crossing plus its exact delay, inside the
  step it falls in;
* ``anchored`` keeps every event on the step the engine put it on, and moves it inside that step
  by how far its crossing time and delay moved away from an ``Anchor`` (the base parameters).
  At the anchor it is the engine's own simulation.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from .default import ConfigError, SimulationError
from .geometry import round_half_up
from .gradcore import (AdjointRing, DiagnosticCounters, GradientResult, QueuedJumps, SpikeQueue, crossing_slope,
                       dequeue_jumps, enqueue_adaptation, enqueue_spike, guard_slope, reset_ratio,
                       spike_time_tangent, v_reset)
from .network import Network, NetworkConfig, Synapses
from .neurons import Jumps, NeuronState, StepResult, adex_drive, adex_step, lif_step, threshold
from .objectives import Adjoints, superspike

if TYPE_CHECKING:
    from .objectives import Objective

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]
Params = dict[str, Array]

__all__ = ['Anchor', 'InputBatch', 'NetworkConfig', 'SimTrace', 'Simulator', 'SimulationProgram', 'TangentResult',
           'Classification', 'classify', 'REFERENCES']

REFERENCES = ('resolved', 'anchored')
# crossing interpolation floor, reference modes only
_RISE_FLOOR = 1e-12


@dataclass
class InputBatch:
    """Input spikes of a batch, sorted by the step they are emitted at."""

    n_samples: int
    samples: IntArray
    neurons: IntArray
    times: Array
    steps: IntArray
    bounds: IntArray
    labels: IntArray
    rounding: str = 'nearest'

    @classmethod
    def from_events(cls, events: Sequence[tuple[npt.ArrayLike, npt.ArrayLike]], labels: npt.ArrayLike,
                    dt: float, n_steps: int, n_inputs: int, rounding: str='nearest') -> InputBatch:
        """``events[b]`` is (neuron ids, times in ms) of sample ``b``.

        ``rounding='floor'`` assigns spikes to the step they fall in, which the resolved reference
        needs; the default rounds half up like delays.
        """
        samples, neurons, times = [], [], []
        for b, (ids, ts) in enumerate(events):
            ids_arr = np.asarray(ids, dtype=np.int64)
            ts_arr = np.asarray(ts, dtype=np.float64)
            if ids_arr.size and (ids_arr.min() < 0 or ids_arr.max() >= n_inputs):
                raise ConfigError(f'sample {b} addresses input neurons beyond {n_inputs}', key='n_inputs')
            samples.append(np.full(ids_arr.size, b, dtype=np.int64))
            neurons.append(ids_arr)
            times.append(ts_arr)
        s = np.concatenate(samples) if samples else np.zeros(0, dtype=np.int64)
        n = np.concatenate(neurons) if neurons else np.zeros(0, dtype=np.int64)
        t = np.concatenate(times) if times else np.zeros(0)
        if rounding == 'floor':
            k = np.floor(t / dt).astype(np.int64)
        else:
            k = round_half_up(t / dt)
        keep = (k >= 0) & (k < n_steps)
        s, n, t, k = s[keep], n[keep], t[keep], k[keep]
        order = np.lexsort((n, s, k))
        s, n, t, k = s[order], n[order], t[order], k[order]
        bounds = np.searchsorted(k, np.arange(n_steps + 1), side='left').astype(np.int64)
        return cls(n_samples=len(events), samples=s, neurons=n, times=t, steps=k, bounds=bounds,
                   labels=np.asarray(labels, dtype=np.int64), rounding=rounding)

    def at_step(self, step: int) -> tuple[IntArray, IntArray, Array]:
        lo, hi = self.bounds[step], self.bounds[step + 1]
        return self.samples[lo:hi], self.neurons[lo:hi], self.times[lo:hi]


@dataclass
class SimTrace:
    mode: str
    n_steps: int
    dt: float
    # rows of (sample, global neuron, step)
    raster: IntArray
    final_v: Array
    out_times: Array | None = None
    first_spike_step: IntArray | None = None
    counts: Array | None = None
    counters: DiagnosticCounters = field(default_factory=DiagnosticCounters)
    signature: str = ''

    @property
    def sentinel(self) -> float:
        return self.n_steps * self.dt

    @property
    def silent(self) -> BoolArray:
        if self.first_spike_step is None:
            assert self.counts is not None
            return np.asarray(self.counts.sum(axis=1) == 0)
        return np.asarray(np.all(self.first_spike_step < 0, axis=1))


@dataclass
class Anchor:
    """Base-point event times the anchored reference measures its shifts from.

    ``crossing`` is the interpolated threshold crossing of every (sample, neuron) that spiked at
    the base parameters, NaN elsewhere; ``delays`` the base delays of every synapse block.
    """

    crossing: Array
    delays: dict[str, Array]


@dataclass
class StepRecord:
    spikes: BoolArray
    v: Array
    # share of the step left after the threshold crossing
    theta: Array
    slope: Array
    ratio: Array
    dv_coeff: Array
    clipped: BoolArray
    input_samples: IntArray
    input_neurons: IntArray


@dataclass
class TangentResult:
    loss: float
    derivatives: Array
    trace: SimTrace


class Classification(NamedTuple):
    predictions: IntArray
    # samples with no output information at all
    silent: BoolArray


def classify(trace: SimTrace, readout: Array | None=None) -> Classification:
    """Earliest output spike wins (ttfs); the largest read-out score wins (rate)."""
    if trace.mode == 'ttfs':
        assert trace.out_times is not None
        predictions = np.argmin(trace.out_times, axis=1)
    else:
        if readout is None:
            raise ConfigError('rate classification needs the read-out weights', key='readout')
        assert trace.counts is not None
        predictions = np.argmax(trace.counts @ readout.T, axis=1)
    return Classification(predictions=predictions.astype(np.int64), silent=trace.silent)


class _Snapshot(NamedTuple):
    state: NeuronState
    queue: tuple[Array, Array]
    prev_v: Array


class _Pass:
    """Mutable state of one pass over the horizon."""

    def __init__(self, sim: Simulator, synapses: list[Synapses], batch: InputBatch, directions: int=0,
                 observe: bool=True) -> None:
        c = sim.config
        b, m = batch.n_samples, c.n_dynamic
        self.synapses = synapses
        self.batch = batch
        self.state = NeuronState.zeros(b, m)
        self.prev_v = np.zeros((b, m))
        self.queue = SpikeQueue(sim.capacity, b, m, directions)
        self.counters = DiagnosticCounters()
        self.observe = observe
        self.raster: list[IntArray] = []
        self.first_spike_step: IntArray | None = None
        self.out_times: Array | None = None
        self.counts: Array | None = None
        if c.feedforward:
            self.first_spike_step = np.full((b, c.n_outputs), -1, dtype=np.int64)
            self.out_times = np.full((b, c.n_outputs), c.n_steps * c.dt)
        else:
            self.counts = np.zeros((b, c.n_hidden))
        self.signature = hashlib.blake2b(digest_size=16) if sim.reference is not None else None
        self.crossings: Array | None = None
        self.delay_shift: dict[str, Array] = {}
        if sim.reference == 'anchored':
            assert self.signature is not None
            self.crossings = np.full((b, m), np.nan)
            for syn in synapses:
                self.signature.update(syn.steps.tobytes())
                base = None if sim.anchor is None else sim.anchor.delays[syn.block.name]
                self.delay_shift[syn.block.name] = np.zeros_like(syn.delays) if base is None else syn.delays - base
        self.directions = directions
        if directions:
            self.tv = np.zeros((b, m, directions))
            self.prev_tv = np.zeros((b, m, directions))
            self.ti = np.zeros((b, m, directions))
            self.ta = np.zeros((b, m, directions))
            self.t_out = np.zeros((b, c.n_outputs, directions)) if c.feedforward else None
            self.t_counts = np.zeros((b, c.n_hidden, directions)) if not c.feedforward else None
            self.weight_tangents: Params = {}
            self.delay_tangents: dict[str, Array] = {}


class Simulator:

    def __init__(self, network: Network, capacity: int, reference: str | None=None) -> None:
        self.logger = logging.getLogger(f'{self.__class__.__name__}')
        self.network = network
        self.config = network.config
        self.capacity = capacity
        if reference is not None and reference not in REFERENCES:
            raise ConfigError(f'reference must be one of {", ".join(REFERENCES)}, got {reference!r}',
                              key='reference')
        if reference == 'anchored' and not self.config.feedforward:
            raise ConfigError('the anchored reference needs the feed-forward (one-spike) network', key='topology')
        self.reference = reference
        self.anchor: Anchor | None = None
        self.adex = self.config.neuron_model == 'adex'
        self._step_fn = adex_step if self.adex else lif_step

    # public entry points

    def run_forward(self, params: Params, batch: InputBatch) -> SimTrace:
        return self._trace(self._forward(params, batch))

    def anchor_at(self, params: Params, batch: InputBatch) -> Anchor:
        """Record the event times at ``params``; later anchored runs move their events from there."""
        if self.reference != 'anchored':
            raise ConfigError('only the anchored reference has an anchor', key='reference')
        self.anchor = None
        run = self._forward(params, batch)
        assert run.crossings is not None
        self.anchor = Anchor(crossing=run.crossings,
                             delays={syn.block.name: syn.delays.copy() for syn in run.synapses})
        return self.anchor

    def run_with_gradients(self, params: Params, batch: InputBatch,
                           objective: Objective) -> tuple[GradientResult, SimTrace]:
        if self.reference is not None:
            raise ConfigError('gradients are computed on the step-boundary simulation', key='reference')
        c = self.config
        counters = DiagnosticCounters()
        synapses = self.network.build_synapses(params, self.capacity, counters)
        run = _Pass(self, synapses, batch)
        run.counters.merge(counters)
        snapshots: list[_Snapshot] = []
        for k in range(c.n_steps):
            if k % c.checkpoint_interval == 0:
                snapshots.append(_Snapshot(run.state.copy(), run.queue.snapshot(), run.prev_v.copy()))
            self._advance(run, k)
        trace = self._trace(run)
        outcome = objective.evaluate(trace, params, batch.labels)
        grads = self._reverse(params, synapses, batch, snapshots, outcome.adjoints, trace)
        for name, g in outcome.param_grads.items():
            grads[name] = grads.get(name, 0.0) + g
        gradients = {name: np.asarray(grads.get(name, np.zeros_like(value)), dtype=np.float64)
                     for name, value in params.items()}
        return GradientResult(loss=outcome.loss, gradients=gradients, counters=trace.counters), trace

    def run_with_tangents(self, params: Params, batch: InputBatch, objective: Objective,
                          directions: Params) -> TangentResult:
        if self.reference is not None:
            raise ConfigError('tangents are computed on the step-boundary simulation', key='reference')
        n_dir = next(iter(directions.values())).shape[-1]
        counters = DiagnosticCounters()
        synapses = self.network.build_synapses(params, self.capacity, counters)
        run = _Pass(self, synapses, batch, directions=n_dir)
        run.counters.merge(counters)
        run.weight_tangents = {syn.block.name: directions[syn.block.weight_name] for syn in synapses}
        run.delay_tangents = self.network.delay_tangents(params, directions)
        for k in range(self.config.n_steps):
            self._advance(run, k)
        trace = self._trace(run)
        outcome = objective.evaluate(trace, params, batch.labels)
        derivatives = self._contract(run, outcome.adjoints)
        for name, g in outcome.param_grads.items():
            derivatives = derivatives + np.tensordot(g, directions[name], axes=g.ndim)
        return TangentResult(loss=outcome.loss, derivatives=derivatives, trace=trace)

    # primal step

    def _forward(self, params: Params, batch: InputBatch) -> _Pass:
        if self.reference == 'resolved' and batch.rounding != 'floor':
            raise ConfigError('the resolved reference needs inputs bucketed with rounding="floor"', key='dt')
        counters = DiagnosticCounters()
        synapses = self.network.build_synapses(params, self.capacity, counters)
        run = _Pass(self, synapses, batch)
        run.counters.merge(counters)
        for k in range(self.config.n_steps):
            self._advance(run, k)
        return run

    def _advance(self, run: _Pass, k: int) -> StepRecord:
        c = self.config
        state = run.state
        queued = dequeue_jumps(run.queue, k)
        spikes = threshold(state.v, state.has_spiked, one_spike=c.feedforward)
        result = self._step_fn(state, c.neuron, c.dt, Jumps(queued.i_jump, queued.v_jump, queued.i_adapt_jump),
                               c.bias, c.reset_slope)
        theta, rise_slope = crossing_slope(state.v, run.prev_v, c.dt)
        slope = guard_slope(rise_slope, spikes, counters=run.counters if run.observe else None)
        ratio = reset_ratio(slope, result.dvdt_plus) if c.reset_tangent else np.zeros_like(slope)
        if self.adex and run.observe:
            run.counters.voltage_clips += int(result.clipped.sum())
        in_s, in_n, in_t = run.batch.at_step(k)
        record = StepRecord(spikes=spikes, v=state.v, theta=theta, slope=slope, ratio=ratio,
                            dv_coeff=result.dv_coeff, clipped=result.clipped, input_samples=in_s,
                            input_neurons=in_n)

        t_emit_tangent = None
        if run.directions:
            t_emit_tangent = np.where(spikes[..., None],
                                      spike_time_tangent(self._crossing_tangent(run, theta), slope[..., None]),
                                      0.0)
        crossing = shift = None
        if self.reference is not None:
            crossing = self._crossing_times(run, k, spikes)
            if self.reference == 'anchored':
                shift = self._anchor_shift(run, spikes, crossing)
        self._emit(run, k, record, in_t, crossing, shift, t_emit_tangent)
        if run.observe:
            self._observe(run, k, record, crossing, shift, t_emit_tangent)
        if run.directions:
            assert t_emit_tangent is not None
            self._advance_tangents(run, record, result, queued)

        if self.reference == 'resolved':
            v_next = self._resolved_reset(run, k, record, result, queued.v_jump, crossing)
        elif self.reference == 'anchored':
            assert shift is not None
            # an earlier crossing has had that much longer to climb from the reset value
            v_next = np.where(spikes, -shift * result.dvdt_plus, result.v_noreset_next)
        else:
            v_next, _ = v_reset(spikes, state.v, slope, result.dvdt_plus, result.v_noreset_next)
        run.prev_v = state.v
        run.state = NeuronState(v=v_next, i_syn=result.i_next, i_adapt=result.i_adapt_next,
                                has_spiked=state.has_spiked | spikes)
        if not run.state.is_finite():
            raise SimulationError('Non-finite neuron state', step=k)
        return record

    def _events(self, record: StepRecord, syn: Synapses) -> tuple[IntArray, IntArray]:
        block = syn.block
        if block.from_inputs:
            mask = (record.input_neurons >= block.src_start) & (record.input_neurons < block.src_stop)
            return record.input_samples[mask], record.input_neurons[mask] - block.src_start
        b_idx, n_local = np.nonzero(record.spikes[:, block.src_dynamic])
        return b_idx.astype(np.int64), n_local.astype(np.int64)

    def _emit(self, run: _Pass, k: int, record: StepRecord, input_times: Array, crossing: Array | None,
              shift: Array | None, t_emit_tangent: Array | None) -> None:
        c = self.config
        for syn in run.synapses:
            block = syn.block
            b_idx, i_local = self._events(record, syn)
            if b_idx.size:
                w = syn.weights[i_local]
                targets = syn.targets[None, :]
                if self.reference == 'resolved':
                    if block.from_inputs:
                        mask = (record.input_neurons >= block.src_start) & (record.input_neurons < block.src_stop)
                        t_emit = input_times[mask]
                    else:
                        assert crossing is not None
                        t_emit = crossing[b_idx, block.src_dynamic.start + i_local]
                    self._emit_resolved(run, k, syn, b_idx, i_local, t_emit)
                elif self.reference == 'anchored':
                    assert shift is not None
                    # input spike times do not move
                    emit_shift = (np.zeros(b_idx.size) if block.from_inputs
                                  else shift[b_idx, block.src_dynamic.start + i_local])
                    self._emit_anchored(run, k, syn, b_idx, i_local, emit_shift)
                elif run.directions:
                    t_post = run.delay_tangents[block.name][i_local]
                    if not block.from_inputs:
                        assert t_emit_tangent is not None
                        t_post = t_post + t_emit_tangent[b_idx, block.src_dynamic.start + i_local][:, None, :]
                    enqueue_spike(run.queue, k, syn.steps[i_local], b_idx, targets, w, c.neuron.tau_syn,
                                  t_post_tangent=t_post, w_tangent=run.weight_tangents[block.name][i_local])
                else:
                    enqueue_spike(run.queue, k, syn.steps[i_local], b_idx, targets, w, c.neuron.tau_syn)
            if block.surrogate and run.directions:
                self._emit_surrogate_tangents(run, k, syn, record)
        if self.adex and c.neuron.b != 0.0:
            b_idx, n_idx = np.nonzero(record.spikes)
            if b_idx.size == 0:
                return
            if self.reference is not None:
                if self.reference == 'resolved':
                    assert crossing is not None
                    decay = np.exp(-((k + 2) * c.dt - crossing[b_idx, n_idx]) / c.neuron.tau_adapt)
                else:
                    assert shift is not None
                    decay = np.exp(shift[b_idx, n_idx] / c.neuron.tau_adapt)
                enqueue_adaptation(run.queue, k, b_idx, n_idx, c.neuron.b, c.neuron.tau_adapt,
                                   amount=c.neuron.b * decay,
                                   v_correction=-c.neuron.b * c.neuron.tau_adapt * (1.0 - decay))
            else:
                t_pre = None if t_emit_tangent is None else t_emit_tangent[b_idx, n_idx]
                enqueue_adaptation(run.queue, k, b_idx, n_idx, c.neuron.b, c.neuron.tau_adapt, t_pre_tangent=t_pre)

    def _emit_surrogate_tangents(self, run: _Pass, k: int, syn: Synapses, record: StepRecord) -> None:
        # spike-count sensitivity of every source, spiking or not
        assert run.queue.i_tangent is not None
        src = syn.block.src_dynamic
        _, sigma = superspike(record.v[:, src] - 1.0)
        t_spike = sigma[..., None] * run.tv[:, src]
        slots = run.queue.slots(k, syn.steps)
        b = run.batch.n_samples
        index = (slots[None, :, :], np.arange(b)[:, None, None], syn.targets[None, None, :])
        np.add.at(run.queue.i_tangent, index, syn.weights[None, :, :, None] * t_spike[:, :, None, :])

    def _observe(self, run: _Pass, k: int, record: StepRecord, crossing: Array | None, shift: Array | None,
                 t_emit_tangent: Array | None) -> None:
        c = self.config
        b_idx, n_idx = np.nonzero(record.spikes)
        if b_idx.size:
            run.raster.append(np.stack([b_idx, n_idx + c.n_inputs, np.full_like(b_idx, k)], axis=1))
        if record.input_samples.size:
            run.raster.append(np.stack([record.input_samples, record.input_neurons,
                                        np.full_like(record.input_samples, k)], axis=1))
        if c.feedforward:
            assert run.first_spike_step is not None and run.out_times is not None
            hit = record.spikes[:, c.output_slice] & (run.first_spike_step < 0)
            run.first_spike_step[hit] = k
            if self.reference == 'resolved':
                assert crossing is not None
                run.out_times[hit] = crossing[:, c.output_slice][hit]
            elif self.reference == 'anchored':
                assert shift is not None
                run.out_times[hit] = k * c.dt + shift[:, c.output_slice][hit]
            else:
                run.out_times[hit] = k * c.dt
            if t_emit_tangent is not None and run.t_out is not None:
                run.t_out[hit] = t_emit_tangent[:, c.output_slice][hit]
        else:
            assert run.counts is not None
            run.counts += record.spikes[:, :c.n_hidden]
            if run.directions and run.t_counts is not None:
                _, sigma = superspike(record.v[:, :c.n_hidden] - 1.0)
                run.t_counts += sigma[..., None] * run.tv[:, :c.n_hidden]
        if run.signature is not None and b_idx.size:
            run.signature.update(np.stack([b_idx, n_idx, np.full_like(b_idx, k)]).tobytes())

    def _advance_tangents(self, run: _Pass, record: StepRecord, result: StepResult, queued: QueuedJumps) -> None:
        c = self.config
        dt = c.dt
        assert queued.i_tangent is not None and queued.v_tangent is not None and queued.a_tangent is not None
        i_tan, v_tan, a_tan = queued.i_tangent, queued.v_tangent, queued.a_tangent
        tv_noreset = record.dv_coeff[..., None] * run.tv + dt * run.ti + v_tan
        if self.adex:
            tv_noreset = tv_noreset - dt * run.ta
        tv_noreset = np.where(record.clipped[..., None], 0.0, tv_noreset)
        _, tv_next = v_reset(record.spikes, record.v, record.slope, result.dvdt_plus, result.v_noreset_next,
                             v_tangent=self._crossing_tangent(run, record.theta), v_noreset_tangent=tv_noreset,
                             enabled=c.reset_tangent)
        beta = np.exp(-dt / c.neuron.tau_syn)
        ti_next = beta * run.ti + i_tan
        if self.adex:
            tau_a = c.neuron.tau_adapt
            run.ta = (1.0 - dt / tau_a) * run.ta + (dt * c.neuron.a / tau_a) * run.tv + a_tan
        assert tv_next is not None
        run.prev_tv = run.tv
        run.tv, run.ti = tv_next, ti_next

    @staticmethod
    def _crossing_tangent(run: _Pass, theta: Array) -> Array:
        """Voltage tangent at the threshold crossing, between the last two steps."""
        return (1.0 - theta)[..., None] * run.tv + theta[..., None] * run.prev_tv

    def _trace(self, run: _Pass) -> SimTrace:
        c = self.config
        raster = np.concatenate(run.raster) if run.raster else np.zeros((0, 3), dtype=np.int64)
        if run.first_spike_step is not None:
            run.counters.silent_outputs = int(np.all(run.first_spike_step < 0, axis=1).sum())
        return SimTrace(mode=c.mode, n_steps=c.n_steps, dt=c.dt, raster=raster, final_v=run.state.v.copy(),
                        out_times=run.out_times, first_spike_step=run.first_spike_step, counts=run.counts,
                        counters=run.counters,
                        signature=run.signature.hexdigest() if run.signature is not None else '')

    # reference modes

    def _crossing_times(self, run: _Pass, k: int, spikes: BoolArray) -> Array:
        """Threshold crossings interpolated inside the step, for spiking neurons."""
        dt = self.config.dt
        rise = np.maximum(run.state.v - run.prev_v, _RISE_FLOOR)
        offset = np.clip(dt * (run.state.v - 1.0) / rise, 0.0, dt)
        return np.where(spikes, k * dt - offset, np.nan)

    def _anchor_shift(self, run: _Pass, spikes: BoolArray, crossing: Array) -> Array:
        """How much later than at the anchor each spiking neuron crosses; 0 without an anchor."""
        assert run.crossings is not None
        run.crossings = np.where(spikes, crossing, run.crossings)
        if self.anchor is None:
            return np.zeros_like(crossing)
        # a crossing the anchor does not have changes the raster, which the signature reports
        return np.where(spikes, np.nan_to_num(crossing - self.anchor.crossing), 0.0)

    def _emit_anchored(self, run: _Pass, k: int, syn: Synapses, b_idx: IntArray, i_local: IntArray,
                       emit_shift: Array) -> None:
        tau_s = self.config.neuron.tau_syn
        shift = emit_shift[:, None] + run.delay_shift[syn.block.name][i_local]
        # a jump arriving ``shift`` later than the step it is delivered at
        growth = np.exp(shift / tau_s)
        w = syn.weights[i_local]
        enqueue_spike(run.queue, k, syn.steps[i_local], b_idx, syn.targets[None, :], w * growth, tau_s,
                      v_correction=w * tau_s * (1.0 - growth))

    def _emit_resolved(self, run: _Pass, k: int, syn: Synapses, b_idx: IntArray, i_local: IntArray,
                       t_emit: Array) -> None:
        c = self.config
        tau_s = c.neuron.tau_syn
        t_arrival = t_emit[:, None] + syn.delays[i_local]
        arrival_step = np.maximum(k + 1, np.floor(t_arrival / c.dt).astype(np.int64))
        too_far = arrival_step - k > self.capacity - 1
        if too_far.any():
            run.counters.delay_clamps += int(too_far.sum())
            arrival_step = np.minimum(arrival_step, k + self.capacity - 1)
        lag = (arrival_step + 1) * c.dt - t_arrival
        decay = np.exp(-lag / tau_s)
        w = syn.weights[i_local]
        enqueue_spike(run.queue, k, arrival_step - k, b_idx, syn.targets[None, :], w * decay, tau_s,
                      v_correction=w * tau_s * (1.0 - decay))
        if run.signature is not None:
            run.signature.update(arrival_step.tobytes())

    def _resolved_reset(self, run: _Pass, k: int, record: StepRecord, result: StepResult, v_jump: Array,
                        crossing: Array | None) -> Array:
        c = self.config
        assert crossing is not None
        if self.adex:
            slope_after, _ = adex_drive(0.0, run.state.i_syn, run.state.i_adapt, c.neuron, c.bias)
        else:
            slope_after = run.state.i_syn + c.bias
        # the membrane restarts from 0 at the crossing and integrates up to the next boundary
        since_crossing = np.where(record.spikes, (k + 1) * c.dt - np.nan_to_num(crossing, nan=0.0), 0.0)
        reset_value = since_crossing * slope_after + v_jump
        return np.where(record.spikes, reset_value, result.v_noreset_next)

    # reverse engine

    def _replay(self, run: _Pass, snapshot: _Snapshot, start: int, stop: int) -> list[StepRecord]:
        run.state = snapshot.state.copy()
        run.queue.restore(snapshot.queue)
        run.prev_v = snapshot.prev_v.copy()
        return [self._advance(run, k) for k in range(start, stop)]

    def _reverse(self, params: Params, synapses: list[Synapses], batch: InputBatch, snapshots: list[_Snapshot],
                 adjoints: Adjoints, trace: SimTrace) -> dict[str, Array]:
        c = self.config
        dt = c.dt
        b, m = batch.n_samples, c.n_dynamic
        tau_s, tau_a = c.neuron.tau_syn, c.neuron.tau_adapt
        beta = np.exp(-dt / tau_s)
        ring = AdjointRing(self.capacity, b, m)
        lam_v = np.zeros((b, m)) if adjoints.final_v is None else adjoints.final_v.astype(np.float64).copy()
        lam_i = np.zeros((b, m))
        lam_a = np.zeros((b, m))
        # adjoint of the voltage one step before a crossing, owed to the next (earlier) step
        lam_prev_v = np.zeros((b, m))
        grad_w = {syn.block.weight_name: np.zeros_like(syn.weights) for syn in synapses}
        grad_d = {syn.block.name: np.zeros_like(syn.delays) for syn in synapses}
        replay = _Pass(self, synapses, batch, observe=False)

        interval = c.checkpoint_interval
        for segment in range(len(snapshots) - 1, -1, -1):
            start = segment * interval
            stop = min(start + interval, c.n_steps)
            records = self._replay(replay, snapshots[segment], start, stop)
            for k in range(stop - 1, start - 1, -1):
                record = records[k - start]
                g_emit = np.zeros((b, m))
                if adjoints.out_times is not None and trace.first_spike_step is not None:
                    hit = trace.first_spike_step == k
                    if hit.any():
                        g_emit[:, c.output_slice] += np.where(hit, adjoints.out_times, 0.0)
                g_spike = None
                if adjoints.counts is not None:
                    g_spike = adjoints.counts.astype(np.float64).copy()
                for syn in synapses:
                    block = syn.block
                    b_idx, i_local = self._events(record, syn)
                    if b_idx.size:
                        w = syn.weights[i_local]
                        lam_jump_i, lam_jump_v = ring.gather(k, syn.steps[i_local], b_idx, syn.targets[None, :])
                        np.add.at(grad_w[block.weight_name], i_local, lam_jump_i)
                        g_post = lam_jump_i * w / tau_s - lam_jump_v * w
                        np.add.at(grad_d[block.name], i_local, g_post)
                        if not block.from_inputs:
                            np.add.at(g_emit, (b_idx, block.src_dynamic.start + i_local), g_post.sum(axis=1))
                    if block.surrogate and g_spike is not None:
                        slots = (k + syn.steps) % self.capacity
                        lam_all = ring.lam_i[slots[None, :, :], np.arange(b)[:, None, None], syn.targets[None, None, :]]
                        g_spike = g_spike + np.einsum('bij,ij->bi', lam_all, syn.weights)
                if self.adex and c.neuron.b != 0.0:
                    b_idx, n_idx = np.nonzero(record.spikes)
                    if b_idx.size:
                        lam_jump_a, lam_jump_v = ring.gather_adaptation(k, b_idx, n_idx)
                        np.add.at(g_emit, (b_idx, n_idx), (lam_jump_a / tau_a + lam_jump_v) * c.neuron.b)

                spikes = record.spikes
                lam_noreset = np.where(spikes | record.clipped, 0.0, lam_v)
                # adjoint of the voltage at the crossing, shared between the two steps around it
                lam_cross = np.where(spikes, record.ratio * lam_v - g_emit / record.slope, 0.0)
                new_lam_v = (1.0 - record.theta) * lam_cross + record.dv_coeff * lam_noreset + lam_prev_v
                lam_prev_v = record.theta * lam_cross
                new_lam_i = dt * lam_noreset + beta * lam_i
                if self.adex:
                    new_lam_v += (dt * c.neuron.a / tau_a) * lam_a
                    new_lam_a = -dt * lam_noreset + (1.0 - dt / tau_a) * lam_a
                else:
                    new_lam_a = lam_a
                if g_spike is not None:
                    _, sigma = superspike(record.v[:, :c.n_hidden] - 1.0)
                    new_lam_v[:, :c.n_hidden] += sigma * g_spike
                ring.store(k, lam_i, lam_noreset, lam_a)
                lam_v, lam_i, lam_a = new_lam_v, new_lam_i, new_lam_a

        grads: dict[str, Array] = dict(grad_w)
        grads.update(self.network.delay_vjp(params, grad_d))
        return grads

    def _contract(self, run: _Pass, adjoints: Adjoints) -> Array:
        derivatives = np.zeros(run.directions)
        if adjoints.out_times is not None and run.t_out is not None:
            derivatives += np.einsum('bo,bop->p', adjoints.out_times, run.t_out)
        if adjoints.counts is not None and run.t_counts is not None:
            derivatives += np.einsum('bh,bhp->p', adjoints.counts, run.t_counts)
        if adjoints.final_v is not None:
            derivatives += np.einsum('bm,bmp->p', adjoints.final_v, run.tv)
        return derivatives


class SimulationProgram:
    """One batch through the simulator and an objective, differentiable by either engine."""

    def __init__(self, simulator: Simulator, batch: InputBatch, objective: Objective) -> None:
        self.simulator = simulator
        self.batch = batch
        self.objective = objective
        self.trace: SimTrace | None = None

    def reverse(self, params: Params) -> GradientResult:
        result, self.trace = self.simulator.run_with_gradients(params, self.batch, self.objective)
        return result

    def tangents(self, params: Params, directions: Params) -> tuple[float, Array]:
        outcome = self.simulator.run_with_tangents(params, self.batch, self.objective, directions)
        self.trace = outcome.trace
        return outcome.loss, outcome.derivatives
