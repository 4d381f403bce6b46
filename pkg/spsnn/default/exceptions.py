#!/usr/bin/env python3

from __future__ import annotations


class SpSNNException(Exception):
    pass


class MissingEnv(SpSNNException):
    pass


class CreateDirectoryException(SpSNNException):
    pass


class ConfigError(SpSNNException):

    def __init__(self, message: str, key: str | None=None) -> None:
        super().__init__(message)
        self.key = key


class SimulationError(SpSNNException):

    def __init__(self, message: str, step: int) -> None:
        super().__init__(f'{message} (step {step})')
        self.step = step


class GradientError(SpSNNException):

    def __init__(self, message: str, parameter: str, index: int) -> None:
        super().__init__(f'{message}: {parameter}[{index}]')
        self.parameter = parameter
        self.index = index


class SpikeFileError(SpSNNException):

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f'{message} (byte offset {offset})')
        self.offset = offset


class CheckpointError(SpSNNException):
    pass
