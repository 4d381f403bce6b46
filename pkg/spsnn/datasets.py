#!/usr/bin/env python3

"""Yin-Yang generation and encoding, and the SpikeFile binary format.

SpikeFile layout, little-endian::

    header  magic "SPKF" | version u16 | n_neurons u32 | n_samples u32 | n_classes u16
    sample  label u16 | count u32 | count x (neuron u32, time_ms f32)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import numpy.typing as npt

from .config import RunConfig
from .default import ConfigError, SpikeFileError, get_homedir
from .simulator import InputBatch

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

logger = logging.getLogger(__name__)

SPIKEFILE_MAGIC = b'SPKF'
SPIKEFILE_VERSION = 1
HEADER_DTYPE = np.dtype([('magic', 'S4'), ('version', '<u2'), ('n_neurons', '<u4'), ('n_samples', '<u4'),
                         ('n_classes', '<u2')])
# magic, version and n_neurons come first
N_SAMPLES_OFFSET = 10
SAMPLE_DTYPE = np.dtype([('label', '<u2'), ('count', '<u4')])
EVENT_DTYPE = np.dtype([('neuron', '<u4'), ('time', '<f4')])

# Yin-Yang geometry, unit square
YY_RADIUS = 0.5
YY_DOT_RADIUS = YY_RADIUS / 6
YY_CENTER = (0.5, 0.5)
YY_CLASSES = ('yin', 'yang', 'dot')
YY_INPUTS = 5


@dataclass
class SpikeDataset:
    """Input spikes per sample, as (neuron ids, times in ms)."""

    n_neurons: int
    n_classes: int
    events: list[tuple[IntArray, Array]]
    labels: IntArray

    def __len__(self) -> int:
        return len(self.events)

    def input_batch(self, indices: IntArray, dt: float, n_steps: int, rounding: str='nearest') -> InputBatch:
        return InputBatch.from_events([self.events[i] for i in indices], self.labels[indices], dt, n_steps,
                                      self.n_neurons, rounding=rounding)

    def batches(self, batch_size: int, rng: np.random.Generator | None=None) -> Iterator[IntArray]:
        """Index batches; shuffled when a generator is given. The last batch may be short."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            yield order[start:start + batch_size]


def _dist(x: Array, y: Array, cx: float, cy: float) -> Array:
    return np.hypot(x - cx, y - cy)


def yinyang_label(x: Array | float, y: Array | float) -> IntArray:
    """0 = yin, 1 = yang, 2 = dot, for points inside the big circle."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    cx, cy = YY_CENTER
    right = _dist(x, y, cx + YY_RADIUS / 2, cy)
    left = _dist(x, y, cx - YY_RADIUS / 2, cy)
    dot = (right <= YY_DOT_RADIUS) | (left <= YY_DOT_RADIUS)
    yin = (left <= YY_RADIUS / 2) | ((y > cy) & (right > YY_RADIUS / 2))
    return np.where(dot, 2, np.where(yin, 0, 1)).astype(np.int64)


def generate_yinyang(n: int, seed: int) -> tuple[Array, IntArray]:
    """``n`` points with classes cycling yin, yang, dot; the rest is rejected."""
    if n <= 0:
        raise ConfigError(f'need a positive number of samples, got {n}', key='train_samples')
    rng = np.random.default_rng(seed)
    coords = np.zeros((n, 2))
    labels = np.arange(n, dtype=np.int64) % len(YY_CLASSES)
    cx, cy = YY_CENTER
    for i in range(n):
        while True:
            x, y = rng.uniform(0.0, 1.0, size=2)
            if _dist(x, y, cx, cy) > YY_RADIUS:
                continue
            if int(yinyang_label(x, y)) == labels[i]:
                coords[i] = x, y
                break
    return coords, labels


def encode_yy(coords: Array, window: float) -> list[tuple[IntArray, Array]]:
    """x, y, 1 - x, 1 - y spike at value * window; the fifth neuron is a bias spike at 0."""
    ids = np.arange(YY_INPUTS, dtype=np.int64)
    events = []
    for x, y in np.asarray(coords, dtype=np.float64):
        times = np.array([x, y, 1.0 - x, 1.0 - y, 0.0]) * window
        events.append((ids.copy(), times))
    return events


def yinyang_dataset(n: int, seed: int, window: float) -> SpikeDataset:
    coords, labels = generate_yinyang(n, seed)
    return SpikeDataset(n_neurons=YY_INPUTS, n_classes=len(YY_CLASSES), events=encode_yy(coords, window),
                        labels=labels)


def random_dataset(n: int, n_inputs: int, n_classes: int, window: float, seed: int) -> SpikeDataset:
    """Every input spikes once at a uniform time in the window; labels are uniform."""
    rng = np.random.default_rng(seed)
    ids = np.arange(n_inputs, dtype=np.int64)
    events = [(ids.copy(), rng.uniform(0.0, window, size=n_inputs)) for _ in range(n)]
    return SpikeDataset(n_neurons=n_inputs, n_classes=n_classes, events=events,
                        labels=rng.integers(0, n_classes, size=n).astype(np.int64))


def write_spike_file(path: Path, data: SpikeDataset) -> None:
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (SPIKEFILE_MAGIC, SPIKEFILE_VERSION, data.n_neurons, len(data), data.n_classes)
    with path.open('wb') as f:
        f.write(header.tobytes())
        for (ids, times), label in zip(data.events, data.labels):
            sample = np.zeros(1, dtype=SAMPLE_DTYPE)
            sample[0] = (label, len(ids))
            f.write(sample.tobytes())
            events = np.zeros(len(ids), dtype=EVENT_DTYPE)
            events['neuron'] = ids
            events['time'] = times
            f.write(events.tobytes())


def _take(buffer: bytes, offset: int, dtype: np.dtype[np.void], count: int, what: str) -> npt.NDArray[np.void]:
    end = offset + dtype.itemsize * count
    if end > len(buffer):
        raise SpikeFileError(f'truncated {what}: need {end - offset} bytes, {len(buffer) - offset} left',
                             offset=offset)
    if count == 0:
        return np.zeros(0, dtype=dtype)
    return np.frombuffer(buffer, dtype=dtype, count=count, offset=offset)


def parse_spike_file(buffer: bytes) -> SpikeDataset:
    header = _take(buffer, 0, HEADER_DTYPE, 1, 'header')[0]
    if header['magic'] != SPIKEFILE_MAGIC:
        raise SpikeFileError(f'bad magic {header["magic"]!r}', offset=0)
    if header['version'] != SPIKEFILE_VERSION:
        raise SpikeFileError(f'unsupported version {header["version"]}', offset=4)
    n_neurons, n_samples, n_classes = int(header['n_neurons']), int(header['n_samples']), int(header['n_classes'])
    offset = HEADER_DTYPE.itemsize
    # every sample takes at least its own header
    if n_samples * SAMPLE_DTYPE.itemsize > len(buffer) - offset:
        raise SpikeFileError(f'{n_samples} samples declared, {len(buffer) - offset} bytes left',
                             offset=N_SAMPLES_OFFSET)
    events: list[tuple[IntArray, Array]] = []
    labels = np.zeros(n_samples, dtype=np.int64)
    for s in range(n_samples):
        sample = _take(buffer, offset, SAMPLE_DTYPE, 1, f'sample {s} header')[0]
        label, count = int(sample['label']), int(sample['count'])
        if label >= n_classes:
            raise SpikeFileError(f'sample {s}: label {label} >= {n_classes} classes', offset=offset)
        offset += SAMPLE_DTYPE.itemsize
        records = _take(buffer, offset, EVENT_DTYPE, count, f'sample {s} events')
        ids = records['neuron'].astype(np.int64)
        times = records['time'].astype(np.float64)
        if count:
            if ids.max() >= n_neurons:
                raise SpikeFileError(f'sample {s}: neuron id {ids.max()} >= {n_neurons}', offset=offset)
            if not np.all(np.isfinite(times)) or times.min() < 0:
                raise SpikeFileError(f'sample {s}: negative or non-finite spike time', offset=offset)
            order = np.lexsort((np.arange(count), ids))
            same = ids[order][1:] == ids[order][:-1]
            if np.any(same & (np.diff(times[order]) < 0)):
                raise SpikeFileError(f'sample {s}: spike times decrease within a neuron', offset=offset)
        offset += EVENT_DTYPE.itemsize * count
        events.append((ids, times))
        labels[s] = label
    if offset != len(buffer):
        raise SpikeFileError(f'{len(buffer) - offset} trailing bytes', offset=offset)
    return SpikeDataset(n_neurons=n_neurons, n_classes=n_classes, events=events, labels=labels)


def read_spike_file(path: Path) -> SpikeDataset:
    try:
        buffer = path.read_bytes()
    except OSError as e:
        raise SpikeFileError(f'Unable to read {path}: {e}', offset=0)
    return parse_spike_file(buffer)


def _resolve(name: str) -> Path:
    path = Path(name)
    return path if path.is_absolute() else get_homedir() / path


def load_task_data(config: RunConfig) -> tuple[SpikeDataset, SpikeDataset]:
    """Train and test sets for the configured task."""
    if config.task == 'yinyang':
        train = yinyang_dataset(config.train_samples, config.data_seed, config.input_window)
        test = yinyang_dataset(config.test_samples, config.data_seed + 1, config.input_window)
    elif config.task == 'gradcheck':
        train = random_dataset(config.gradcheck_samples, config.n_inputs, config.n_outputs, config.input_window,
                               config.data_seed)
        test = random_dataset(config.gradcheck_samples, config.n_inputs, config.n_outputs, config.input_window,
                              config.data_seed + 1)
    else:
        train = read_spike_file(_resolve(config.train_file))
        test = read_spike_file(_resolve(config.test_file))
    for name, data in (('train', train), ('test', test)):
        if data.n_neurons != config.n_inputs:
            raise ConfigError(f'{name} data has {data.n_neurons} input neurons, config says {config.n_inputs}',
                              key='n_inputs')
        if data.n_classes > config.n_outputs:
            raise ConfigError(f'{name} data has {data.n_classes} classes for {config.n_outputs} outputs',
                              key='n_outputs')
    logger.info(f'{config.task}: {len(train)} training and {len(test)} test samples')
    return train, test
