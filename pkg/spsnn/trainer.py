#!/usr/bin/env python3

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, TextIO

import numpy as np
import numpy.typing as npt

from .checkpoint import save_checkpoint
from .config import RunConfig
from .datasets import SpikeDataset, load_task_data
from .default import AbstractManager, ConfigError, GradientError, SimulationError
from .gradcore import DiagnosticCounters, check_finite
from .network import Network, NetworkConfig
from .objectives import make_objective
from .simulator import Simulator, classify

Array = npt.NDArray[np.float64]
Params = dict[str, Array]

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ('epoch', 'split', 'loss', 'accuracy', 'lr', 'sparsity', 'param_count', 'clamp_count',
                   'silent_count')


def seeded_generators(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams for parameter initialisation and batch shuffling."""
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(shuffle_seq)


@dataclass
class OptimizerState:
    m: Params
    v: Params
    step: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Params, betas: tuple[float, float]=(0.9, 0.999), eps: float=1e-8) -> OptimizerState:
        return cls(m={k: np.zeros_like(v) for k, v in params.items()},
                   v={k: np.zeros_like(v) for k, v in params.items()}, betas=betas, eps=eps)


def adam_step(params: Params, grads: Params, state: OptimizerState, lr: float) -> None:
    """In-place Adam update with bias correction."""
    check_finite(grads)
    state.step += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise GradientError(f'gradient shape {g.shape} does not match {value.shape}', parameter=name, index=0)
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def lr_schedule(step: int, peak: float, warmup: int=500, decay: int=10000, final_fraction: float=0.1) -> float:
    """Linear warm-up to ``peak``, cosine decay to ``final_fraction * peak`` at ``decay``, then flat."""
    if step < warmup:
        return peak * step / warmup
    if step >= decay:
        return peak * final_fraction
    progress = (step - warmup) / (decay - warmup)
    return peak * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + math.cos(math.pi * progress)))


@dataclass(frozen=True)
class SparsityPolicy:
    mode: str = 'none'
    sparsity: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ('none', 'dynamic', 'static'):
            raise ConfigError(f'Unknown sparsity mode {self.mode}', key='sparsity_mode')
        if not 0.0 <= self.sparsity <= 1.0:
            raise ConfigError(f'sparsity must be in [0, 1], got {self.sparsity}', key='sparsity')

    @property
    def dynamic(self) -> bool:
        return self.mode == 'dynamic' and self.sparsity > 0

    @property
    def static(self) -> bool:
        return self.mode == 'static' and self.sparsity > 0


def magnitude_threshold(weights: list[Array], sparsity: float) -> float | None:
    """Magnitude of the k-th weakest weight, k = ceil(sparsity * n); None when nothing goes."""
    flat = np.concatenate([np.abs(w).ravel() for w in weights])
    k = math.ceil(round(sparsity * flat.size, 9))
    if k == 0:
        return None
    return float(np.partition(flat, k - 1)[k - 1])


def _prune(params: Params, names: list[str], sparsity: float) -> Params:
    pruned = {name: value.copy() for name, value in params.items()}
    threshold = magnitude_threshold([params[name] for name in names], sparsity)
    if threshold is None:
        return pruned
    for name in names:
        pruned[name][np.abs(pruned[name]) <= threshold] = 0.0
    return pruned


def dynamic_prune(params: Params, names: list[str], sparsity: float) -> Params:
    """Zero the weakest ``sparsity`` share of the named weights, one threshold for all blocks.

    Nothing is masked: pruned weights may grow back during the next epoch.
    """
    return _prune(params, names, sparsity)


def static_prune(params: Params, names: list[str], sparsity: float) -> Params:
    """One-shot magnitude pruning of a trained model; same rule as the dynamic variant."""
    return _prune(params, names, sparsity)


def weight_sparsity(params: Params, names: list[str]) -> float:
    total = sum(params[name].size for name in names)
    zeros = sum(int(np.count_nonzero(params[name] == 0)) for name in names)
    return zeros / total if total else 0.0


@dataclass
class EpochMetrics:
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float
    sparsity: float
    param_count: int
    clamp_count: int
    silent_count: int


class MetricsWriter:
    """Append-only CSV, one row per epoch and split."""

    def __init__(self, path: Path) -> None:
        self.path = path
        with self.path.open('w', newline='') as f:
            csv.writer(f).writerow(METRICS_COLUMNS)

    def write(self, row: EpochMetrics) -> None:
        with self.path.open('a', newline='') as f:
            self._writer(f).writerow(asdict(row))

    @staticmethod
    def _writer(f: TextIO) -> csv.DictWriter[str]:
        return csv.DictWriter(f, fieldnames=METRICS_COLUMNS)


@dataclass
class EvaluationResult:
    loss: float
    accuracy: float
    silent: int
    counters: DiagnosticCounters
    predictions: npt.NDArray[np.int64]
    labels: npt.NDArray[np.int64]

    def confusion(self, n_classes: int) -> npt.NDArray[np.int64]:
        matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(matrix, (self.labels, self.predictions), 1)
        return matrix


def evaluate_dataset(simulator: Simulator, params: Params, data: SpikeDataset, config: RunConfig) -> EvaluationResult:
    objective = make_objective(config)
    counters = DiagnosticCounters()
    losses, predictions, silent = [], [], 0
    for indices in data.batches(config.batch_size):
        batch = data.input_batch(indices, config.dt, config.n_steps)
        trace = simulator.run_forward(params, batch)
        losses.append(objective.evaluate(trace, params, batch.labels).loss * len(indices))
        classification = classify(trace, params.get('readout'))
        predictions.append(classification.predictions)
        silent += int(classification.silent.sum())
        counters.merge(trace.counters)
    predicted = np.concatenate(predictions)
    return EvaluationResult(loss=float(np.sum(losses)) / len(data),
                            accuracy=float(np.mean(predicted == data.labels)), silent=silent, counters=counters,
                            predictions=predicted, labels=data.labels)


@dataclass
class RunSummary:
    seed: int
    test_accuracy: float
    param_count: int
    static_accuracy: float | None = None
    history: list[dict[str, Any]] = field(default_factory=list)


class Trainer(AbstractManager):
    """Trains one model; every call of ``_to_run_forever`` is one epoch."""

    def __init__(self, config: RunConfig, out_dir: Path, loglevel: int | str | None=None) -> None:
        super().__init__(out_dir, loglevel)
        self.script_name = 'train'
        self.config = config
        self.policy = SparsityPolicy(config.sparsity_mode, config.sparsity)
        self.network = Network(NetworkConfig.from_run_config(config))
        init_rng, self.shuffle_rng = seeded_generators(config.seed)
        self.params = self.network.init_params(init_rng, config.weight_init_mean,
                                               config.weight_init_std, config.position_init_std, config.input_init)
        self.capacity = self.network.queue_capacity(self.params)
        self.simulator = Simulator(self.network, self.capacity)
        self.objective = make_objective(config)
        self.optimizer = OptimizerState.zeros(self.params, config.adam_betas, config.adam_eps)
        self.train_data, self.test_data = load_task_data(config)
        self.weight_names = self.network.weight_names()
        self.epoch = 0
        self.lr_scale = 1.0
        self.retried = False
        self.positions: dict[str, Array] = {}
        self.history: list[EpochMetrics] = []
        self.static_accuracy: float | None = None
        config.dump(self.run_dir / 'config.json')
        self.metrics = MetricsWriter(self.run_dir / 'metrics.csv')
        self._snapshot_positions()
        self.logger.info(f'{self.network.param_count(self.params)} parameters, queue capacity {self.capacity}')

    def _snapshot_positions(self) -> None:
        if 'positions' in self.params:
            self.positions[f'epoch_{self.epoch:04d}'] = self.params['positions'].copy()

    def _lr(self) -> float:
        c = self.config
        return self.lr_scale * lr_schedule(self.optimizer.step, c.learning_rate, c.lr_warmup_steps,
                                           c.lr_decay_steps, c.lr_final_fraction)

    def train_epoch(self) -> EpochMetrics:
        c = self.config
        counters = DiagnosticCounters()
        loss_sum, correct, silent = 0.0, 0, 0
        lr = self._lr()
        for indices in self.train_data.batches(c.batch_size, self.shuffle_rng):
            batch = self.train_data.input_batch(indices, c.dt, c.n_steps)
            lr = self._lr()
            result, trace = self.simulator.run_with_gradients(self.params, batch, self.objective)
            if not math.isfinite(result.loss):
                raise GradientError('Non-finite loss', parameter='loss', index=0)
            adam_step(self.params, result.gradients, self.optimizer, lr)
            self.network.clamp_free_delays(self.params, self.capacity)
            classification = classify(trace, self.params.get('readout'))
            loss_sum += result.loss * len(indices)
            correct += int(np.sum(classification.predictions == batch.labels))
            silent += int(classification.silent.sum())
            counters.merge(result.counters)
        if self.policy.dynamic:
            self.params = dynamic_prune(self.params, self.weight_names, self.policy.sparsity)
        counters.report()
        return self._row('train', loss_sum / len(self.train_data), correct / len(self.train_data), lr,
                         counters.delay_clamps, silent)

    def evaluate(self, data: SpikeDataset, split: str, params: Params | None=None) -> EpochMetrics:
        params = params if params is not None else self.params
        result = evaluate_dataset(self.simulator, params, data, self.config)
        return self._row(split, result.loss, result.accuracy, self._lr(), result.counters.delay_clamps,
                         result.silent, params)

    def _row(self, split: str, loss: float, accuracy: float, lr: float, clamps: int, silent: int,
             params: Params | None=None) -> EpochMetrics:
        params = params if params is not None else self.params
        return EpochMetrics(epoch=self.epoch, split=split, loss=loss, accuracy=accuracy, lr=lr,
                            sparsity=weight_sparsity(params, self.weight_names),
                            param_count=self.network.param_count(params, retained=True), clamp_count=clamps,
                            silent_count=silent)

    def _record(self, row: EpochMetrics) -> None:
        self.history.append(row)
        self.metrics.write(row)
        self.logger.info(f'epoch {row.epoch} {row.split}: loss {row.loss:.4f}, accuracy {row.accuracy:.4f}, '
                         f'lr {row.lr:.2e}, silent {row.silent_count}')

    def _to_run_forever(self) -> None:
        if self.epoch >= self.config.epochs:
            self.force_stop = True
            return
        self.epoch += 1
        params = copy.deepcopy(self.params)
        optimizer = copy.deepcopy(self.optimizer)
        rng_state = copy.deepcopy(self.shuffle_rng.bit_generator.state)
        try:
            train_row = self.train_epoch()
        except (GradientError, SimulationError) as e:
            if not self.config.lr_retry or self.retried:
                raise
            self.logger.warning(f'Epoch {self.epoch} diverged ({e}), retrying with half the learning rate.')
            self.retried = True
            self.lr_scale /= 2
            self.params, self.optimizer = params, optimizer
            self.shuffle_rng.bit_generator.state = rng_state
            train_row = self.train_epoch()
        self._record(train_row)
        self._record(self.evaluate(self.test_data, 'test'))
        self._snapshot_positions()
        if self.epoch >= self.config.epochs:
            self.force_stop = True

    def _wait_to_finish(self) -> None:
        self.save()
        if self.policy.static and self.epoch >= self.config.epochs:
            pruned = static_prune(self.params, self.weight_names, self.policy.sparsity)
            row = self.evaluate(self.test_data, 'static', pruned)
            self.static_accuracy = row.accuracy
            self._record(row)
            save_checkpoint(self.run_dir / 'model_static.spnn', pruned, self.network.parameter_names(),
                            self.capacity, self.config.dt)

    def save(self) -> None:
        save_checkpoint(self.run_dir / 'model.spnn', self.params, self.network.parameter_names(), self.capacity,
                        self.config.dt)
        if self.positions:
            np.savez(self.run_dir / 'positions.npz', **self.positions)
        self.logger.info(f'Model saved in {self.run_dir}')

    def summary(self) -> RunSummary:
        tests = [row for row in self.history if row.split == 'test']
        return RunSummary(seed=self.config.seed, test_accuracy=tests[-1].accuracy if tests else float('nan'),
                          param_count=self.network.param_count(self.params, retained=True),
                          static_accuracy=self.static_accuracy, history=[asdict(row) for row in self.history])


def train_run(config: RunConfig, out_dir: Path) -> RunSummary:
    trainer = Trainer(config, out_dir)
    trainer.run()
    return trainer.summary()


def summarize(values: list[float]) -> tuple[float, float, float]:
    """Median and interquartile bounds."""
    q25, median, q75 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(median), float(q25), float(q75)


@dataclass
class ExperimentResult:
    runs: list[RunSummary]
    median: float
    q25: float
    q75: float


def run_experiment(config: RunConfig, out_dir: Path, seeds: list[int]) -> ExperimentResult:
    """Train one model per seed and aggregate the final test accuracies."""
    runs = [train_run(config.replace(seed=seed), out_dir / f'seed_{seed}') for seed in seeds]
    median, q25, q75 = summarize([run.test_accuracy for run in runs])
    logger.info(f'{len(runs)} runs: median accuracy {median:.4f} (IQR {q25:.4f} - {q75:.4f})')
    return ExperimentResult(runs=runs, median=median, q25=q25, q75=q75)
