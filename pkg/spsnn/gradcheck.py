#!/usr/bin/env python3

"""Engine gradients against central finite differences.

Finite differences are taken on a reference simulation whose loss moves smoothly with the
parameters as long as the spike raster and the arrival steps stay put:

* ``anchored`` (default) is the engine's own simulation with events free to move inside their
  steps, so the engine gradient must match it up to the finite-difference error, whatever ``dt``;
* ``resolved`` places events at their exact times, so it also measures the discretisation error
  of the step-boundary simulation, which shrinks with ``dt``.

A perturbation that changes the raster or the arrival steps is retried with a step 100 times
smaller, twice at most; after that the entry is flagged and left out of the block error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from rich.console import Console
from rich.table import Table

from .config import RunConfig
from .datasets import SpikeDataset, random_dataset
from .default import ConfigError
from .gradcore import GradientResult, grad
from .network import Network, NetworkConfig
from .objectives import FinalVoltageObjective, Objective, make_objective
from .simulator import SimulationProgram, Simulator

Array = npt.NDArray[np.float64]
Params = dict[str, Array]

logger = logging.getLogger(__name__)

STEP_SHRINK = 100.0
MAX_SHRINKS = 2
# entries below this share of their block's largest difference quotient are not scored
NEGLIGIBLE = 1e-3


@dataclass
class EntryCheck:
    name: str
    index: int
    engine: float
    reference: float
    flagged: bool = False
    negligible: bool = False

    @property
    def error(self) -> float:
        scale = max(abs(self.engine), abs(self.reference))
        return abs(self.engine - self.reference) / scale if scale > 0 else 0.0


@dataclass
class BlockReport:
    name: str
    entries: list[EntryCheck] = field(default_factory=list)

    @property
    def scored(self) -> list[EntryCheck]:
        return [e for e in self.entries if not (e.flagged or e.negligible)]

    @property
    def max_error(self) -> float:
        return max((e.error for e in self.scored), default=0.0)

    @property
    def flagged(self) -> int:
        return sum(e.flagged for e in self.entries)

    @property
    def negligible(self) -> int:
        return sum(e.negligible for e in self.entries)


@dataclass
class GradcheckReport:
    blocks: dict[str, BlockReport]
    tolerance: float
    loss: float

    @property
    def passed(self) -> bool:
        return all(block.max_error < self.tolerance for block in self.blocks.values())


class GradientCheck:

    def __init__(self, network: Network, params: Params, data: SpikeDataset, objective: Objective,
                 step: float=1e-4, engine: str='reverse', reference: str='anchored') -> None:
        self.logger = logging.getLogger(f'{self.__class__.__name__}')
        if not network.config.feedforward:
            raise ConfigError('gradient checking needs the feed-forward (one-spike) network', key='topology')
        self.network = network
        self.params = params
        self.objective = objective
        self.step = step
        self.engine = engine
        c = network.config
        capacity = network.queue_capacity(params)
        indices = np.arange(len(data))
        batch = data.input_batch(indices, c.dt, c.n_steps)
        self.program = SimulationProgram(Simulator(network, capacity), batch, objective)
        self.reference = Simulator(network, capacity, reference=reference)
        if reference == 'resolved':
            self.reference_batch = data.input_batch(indices, c.dt, c.n_steps, rounding='floor')
        else:
            self.reference_batch = batch

    @classmethod
    def from_config(cls, config: RunConfig, engine: str='reverse', reference: str='anchored') -> GradientCheck:
        network = Network(NetworkConfig.from_run_config(config))
        rng = np.random.default_rng(config.seed)
        params = network.init_params(rng, config.weight_init_mean, config.weight_init_std,
                                     config.position_init_std, config.input_init)
        data = random_dataset(config.gradcheck_samples, config.n_inputs, config.n_outputs, config.input_window,
                              config.data_seed)
        return cls(network, params, data, make_objective(config), config.gradcheck_step, engine, reference)

    def reference_loss(self, params: Params) -> tuple[float, str]:
        trace = self.reference.run_forward(params, self.reference_batch)
        return self.objective.evaluate(trace, params, self.reference_batch.labels).loss, trace.signature

    def engine_gradients(self) -> GradientResult:
        return grad(self.program, self.params, engine=self.engine)

    def finite_difference(self, name: str, index: int, signature: str) -> tuple[float, bool]:
        h = self.step
        for _ in range(MAX_SHRINKS + 1):
            losses = []
            signatures = []
            for sign in (1.0, -1.0):
                params = {k: v.copy() for k, v in self.params.items()}
                params[name].flat[index] += sign * h
                loss, sig = self.reference_loss(params)
                losses.append(loss)
                signatures.append(sig)
            if all(sig == signature for sig in signatures):
                return (losses[0] - losses[1]) / (2 * h), False
            h /= STEP_SHRINK
        return float('nan'), True

    def run(self, names: list[str] | None=None, tolerance: float=1e-2) -> GradcheckReport:
        names = names if names is not None else list(self.params)
        result = self.engine_gradients()
        if result.counters.grazing_spikes:
            self.logger.warning(f'{result.counters.grazing_spikes} grazing spikes, their slopes are guarded')
        if self.reference.reference == 'anchored':
            self.reference.anchor_at(self.params, self.reference_batch)
        _, signature = self.reference_loss(self.params)
        blocks: dict[str, BlockReport] = {}
        for name in names:
            block = BlockReport(name)
            for index in range(self.params[name].size):
                fd, flagged = self.finite_difference(name, index, signature)
                block.entries.append(EntryCheck(name, index, float(result.gradients[name].flat[index]), fd,
                                                flagged=flagged))
            scale = max((abs(e.reference) for e in block.entries if not e.flagged), default=0.0)
            for entry in block.entries:
                if not entry.flagged and max(abs(entry.engine), abs(entry.reference)) < NEGLIGIBLE * scale:
                    entry.negligible = True
            if block.flagged:
                self.logger.warning(f'{name}: {block.flagged} entries change the spike raster, not scored')
            blocks[name] = block
        return GradcheckReport(blocks=blocks, tolerance=tolerance, loss=result.loss)


def reset_toy(reset_tangent: bool=True, weight: float=1.0, reference: str='anchored') -> GradientCheck:
    """One input driving one neuron through a single reset; the loss is its final voltage."""
    config = RunConfig.from_dict({
        'task': 'gradcheck', 'topology': 'feedforward', 'n_inputs': 1, 'n_hidden': 1, 'n_outputs': 1,
        'dimensions': 1, 'dt': 0.01, 'duration': 20.0, 'input_window': 2.0, 'tau_mem': 10.0, 'tau_syn': 5.0,
        'reset_tangent': reset_tangent, 'gradcheck_samples': 1})
    network = Network(NetworkConfig.from_run_config(config))
    params: Params = {'w_input_hidden': np.array([[weight]]), 'w_hidden_output': np.array([[0.0]]),
                      'positions': np.array([[0.0], [0.5], [3.0]])}
    data = SpikeDataset(n_neurons=1, n_classes=1, events=[(np.array([0]), np.array([1.0]))],
                        labels=np.array([0]))
    return GradientCheck(network, params, data, FinalVoltageObjective(neurons=[0]), step=1e-4, reference=reference)


def render_report(report: GradcheckReport, console: Console | None=None) -> None:
    console = console or Console()
    table = Table(title=f'Gradient check (loss {report.loss:.6f})')
    table.add_column('block')
    table.add_column('entries', justify='right')
    table.add_column('max rel. error', justify='right')
    table.add_column('flagged', justify='right')
    table.add_column('negligible', justify='right')
    table.add_column('status')
    for block in report.blocks.values():
        ok = block.max_error < report.tolerance
        table.add_row(block.name, str(len(block.entries)), f'{block.max_error:.2e}', str(block.flagged),
                      str(block.negligible), '[green]ok[/green]' if ok else '[red]FAIL[/red]')
    console.print(table)


__all__ = ['BlockReport', 'EntryCheck', 'GradcheckReport', 'GradientCheck', 'render_report', 'reset_toy']
