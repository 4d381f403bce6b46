#!/usr/bin/env python3

"""Discretised LIF and AdEx updates.

Every update returns the next state as if no spike happened plus the voltage slopes just before
and just after a spike, which the reset rule needs. State arrays are shaped (batch, neurons).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from .default import ConfigError

Array = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]

V_THRESHOLD = 1.0
V_RESET = 0.0
# AdEx numerical guards
EXP_ARG_CAP = 20.0
V_CAP = 1e3


@dataclass(frozen=True)
class NeuronParams:
    tau_mem: float = 20.0
    tau_syn: float = 5.0
    tau_adapt: float = 100.0
    a: float = 0.0
    b: float = 0.0
    delta_t: float = 0.1
    v_th: float = V_THRESHOLD
    v_reset_value: float = V_RESET

    def __post_init__(self) -> None:
        for name in ('tau_mem', 'tau_syn', 'tau_adapt', 'delta_t'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}', key=name)
        if self.v_th != V_THRESHOLD or self.v_reset_value != V_RESET:
            raise ConfigError('threshold is fixed at 1 and reset at 0', key='v_th')


@dataclass
class NeuronState:
    v: Array
    i_syn: Array
    i_adapt: Array
    has_spiked: BoolArray

    @classmethod
    def zeros(cls, batch: int, neurons: int) -> NeuronState:
        return cls(v=np.zeros((batch, neurons)), i_syn=np.zeros((batch, neurons)),
                   i_adapt=np.zeros((batch, neurons)), has_spiked=np.zeros((batch, neurons), dtype=bool))

    def copy(self) -> NeuronState:
        return NeuronState(v=self.v.copy(), i_syn=self.i_syn.copy(), i_adapt=self.i_adapt.copy(),
                           has_spiked=self.has_spiked.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.i_syn))
                    and np.all(np.isfinite(self.i_adapt)))


class Jumps(NamedTuple):
    i_jump: Array
    v_jump: Array
    i_adapt_jump: Array


class StepResult(NamedTuple):
    v_noreset_next: Array
    i_next: Array
    dvdt_minus: Array
    dvdt_plus: Array
    i_adapt_next: Array
    # d(v_noreset_next)/dv, zero where the AdEx cap was hit
    dv_coeff: Array
    clipped: BoolArray


def lif_step(state: NeuronState, params: NeuronParams, dt: float, jumps: Jumps,
             bias: float=0.0, reset_slope: str='reset_voltage') -> StepResult:
    alpha = np.exp(-dt / params.tau_mem)
    beta = np.exp(-dt / params.tau_syn)
    v, i_syn = state.v, state.i_syn
    v_noreset = alpha * v + dt * i_syn + jumps.v_jump + dt * bias
    i_next = beta * i_syn + jumps.i_jump
    dvdt_minus = i_syn - v / params.tau_mem + bias
    v_after = v if reset_slope == 'pre_voltage' else params.v_reset_value
    dvdt_plus = (i_syn + jumps.i_jump) - v_after / params.tau_mem + bias
    return StepResult(v_noreset_next=v_noreset, i_next=i_next, dvdt_minus=dvdt_minus,
                      dvdt_plus=dvdt_plus,
                      i_adapt_next=state.i_adapt + jumps.i_adapt_jump,
                      dv_coeff=np.full_like(v, alpha), clipped=np.zeros(v.shape, dtype=bool))


def adex_drive(v: Array | float, i_syn: Array, i_adapt: Array, params: NeuronParams,
               bias: float=0.0) -> tuple[Array, Array]:
    """Right-hand side of the AdEx voltage equation and its derivative in v."""
    exp_arg = (np.asarray(v) - 0.5) / params.delta_t
    capped = np.minimum(exp_arg, EXP_ARG_CAP)
    upswing = np.exp(capped)
    drive = (-np.asarray(v) + params.delta_t * upswing) / params.tau_mem + i_syn - i_adapt + bias
    slope = (-1.0 + np.where(exp_arg < EXP_ARG_CAP, upswing, 0.0)) / params.tau_mem
    return drive, slope


def adex_step(state: NeuronState, params: NeuronParams, dt: float, jumps: Jumps,
              bias: float=0.0, reset_slope: str='reset_voltage') -> StepResult:
    beta = np.exp(-dt / params.tau_syn)
    v, i_syn, i_adapt = state.v, state.i_syn, state.i_adapt
    drive, slope = adex_drive(v, i_syn, i_adapt, params, bias)
    v_raw = v + dt * drive + jumps.v_jump
    clipped = np.abs(v_raw) > V_CAP
    v_noreset = np.clip(v_raw, -V_CAP, V_CAP)
    i_next = beta * i_syn + jumps.i_jump
    i_adapt_next = i_adapt + dt * (-i_adapt + params.a * v) / params.tau_adapt + jumps.i_adapt_jump
    # the slope after a spike includes the adaptation jump b of that same spike
    v_after = v if reset_slope == 'pre_voltage' else np.full_like(v, params.v_reset_value)
    dvdt_plus, _ = adex_drive(v_after, i_syn + jumps.i_jump, i_adapt + jumps.i_adapt_jump + params.b,
                              params, bias)
    dv_coeff = np.where(clipped, 0.0, 1.0 + dt * slope)
    return StepResult(v_noreset_next=v_noreset, i_next=i_next, dvdt_minus=drive, dvdt_plus=dvdt_plus,
                      i_adapt_next=i_adapt_next, dv_coeff=dv_coeff, clipped=clipped)


def threshold(v: Array, has_spiked: BoolArray | None=None, one_spike: bool=False) -> BoolArray:
    spikes = v >= V_THRESHOLD
    if one_spike and has_spiked is not None:
        spikes &= ~has_spiked
    return spikes
