#!/usr/bin/env python3

"""Model checkpoints.

Layout, little-endian::

    magic "SPNN" | version u16 | count u32
    count x (name_len u16 | name utf-8 | dtype u8 | rank u8 | rank x dim u32 | row-major f64 payload)

Parameters come first in declaration order, followed by ``meta_*`` scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from .default import CheckpointError

Array = npt.NDArray[np.float64]
Params = dict[str, Array]

CHECKPOINT_MAGIC = b'SPNN'
CHECKPOINT_VERSION = 1
DTYPE_F64 = 1
META_PREFIX = 'meta_'

_HEADER = np.dtype([('magic', 'S4'), ('version', '<u2'), ('count', '<u4')])


@dataclass
class Checkpoint:
    params: Params
    queue_capacity: int
    dt: float


def _encode_array(name: str, array: Array) -> bytes:
    raw_name = name.encode()
    array = np.ascontiguousarray(array, dtype='<f8')
    parts = [np.array([len(raw_name)], dtype='<u2').tobytes(), raw_name,
             np.array([DTYPE_F64, array.ndim], dtype='u1').tobytes(),
             np.array(array.shape, dtype='<u4').tobytes(), array.tobytes()]
    return b''.join(parts)


def save_checkpoint(path: Path, params: Params, order: list[str], queue_capacity: int, dt: float) -> None:
    missing = [name for name in order if name not in params]
    if missing:
        raise CheckpointError(f'Missing parameters: {", ".join(missing)}')
    arrays: list[tuple[str, Array]] = [(name, params[name]) for name in order]
    arrays.append((f'{META_PREFIX}queue_capacity', np.array(float(queue_capacity))))
    arrays.append((f'{META_PREFIX}dt', np.array(float(dt))))
    header = np.zeros(1, dtype=_HEADER)
    header[0] = (CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(arrays))
    with path.open('wb') as f:
        f.write(header.tobytes())
        for name, array in arrays:
            f.write(_encode_array(name, array))


class _Reader:

    def __init__(self, buffer: bytes) -> None:
        self.buffer = buffer
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.buffer) - self.offset

    def take(self, dtype: npt.DTypeLike, count: int=1) -> npt.NDArray[Any]:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.buffer):
            raise CheckpointError(f'Truncated checkpoint at byte {self.offset}')
        if count == 0:
            return np.zeros(0, dtype=dtype)
        out = np.frombuffer(self.buffer, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return out

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.buffer):
            raise CheckpointError(f'Truncated checkpoint at byte {self.offset}')
        out = self.buffer[self.offset:self.offset + size]
        self.offset += size
        return out


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        buffer = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f'Unable to read {path}: {e}')
    reader = _Reader(buffer)
    head = reader.take(_HEADER)[0]
    if head['magic'] != CHECKPOINT_MAGIC:
        raise CheckpointError(f'{path} is not a checkpoint')
    if head['version'] != CHECKPOINT_VERSION:
        raise CheckpointError(f'Unsupported checkpoint version {head["version"]}')
    arrays: dict[str, Array] = {}
    for _ in range(int(head['count'])):
        name_len = int(reader.take('<u2')[0])
        try:
            name = reader.take_bytes(name_len).decode()
        except UnicodeDecodeError:
            raise CheckpointError(f'Invalid array name before byte {reader.offset}')
        dtype_tag, rank = (int(x) for x in reader.take('u1', 2))
        if dtype_tag != DTYPE_F64:
            raise CheckpointError(f'{name}: unsupported dtype tag {dtype_tag}')
        shape = tuple(int(d) for d in reader.take('<u4', rank))
        size = math.prod(shape)
        if size * 8 > reader.remaining:
            raise CheckpointError(f'{name}: shape {shape} needs {size * 8} bytes, {reader.remaining} left')
        try:
            arrays[name] = reader.take('<f8', size).astype(np.float64).reshape(shape)
        except ValueError as e:
            raise CheckpointError(f'{name}: invalid shape {shape}: {e}')
    if reader.offset != len(buffer):
        raise CheckpointError(f'{len(buffer) - reader.offset} trailing bytes in {path}')
    try:
        capacity = int(arrays.pop(f'{META_PREFIX}queue_capacity').item())
        dt = float(arrays.pop(f'{META_PREFIX}dt').item())
    except KeyError as e:
        raise CheckpointError(f'{path} lacks {e}')
    except ValueError:
        raise CheckpointError(f'{path}: the queue capacity and dt must be scalars')
    return Checkpoint(params=arrays, queue_capacity=capacity, dt=dt)
