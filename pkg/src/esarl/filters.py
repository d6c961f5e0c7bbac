"""First-order discrete high-pass and low-pass filters.

Both filters are backward-Euler discretizations of the continuous prototypes

    high-pass:  s / (s + w_c)
    low-pass:   w_c / (s + w_c)

A :class:`FilterState` may carry scalar or array-valued memory, so one state
can hold a bank of independent channels (one per input dimension) that all
advance together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

HIGH_PASS = "high_pass"
LOW_PASS = "low_pass"

Signal = Union[float, np.ndarray]


class NonFiniteInputError(FloatingPointError):
    """A filter received NaN or inf, usually a divergent objective upstream."""


@dataclass(frozen=True)
class FilterState:
    kind: str
    cutoff: Signal
    dt: float
    prev_input: Signal = 0.0
    prev_output: Signal = 0.0
    initialized: bool = False
    coef: Signal = None  # derived from cutoff and dt; carried along by the step functions

    def __post_init__(self):
        if self.coef is None:
            wdt = np.multiply(self.cutoff, self.dt)
            object.__setattr__(self, "coef", 1.0 / (1.0 + wdt) if self.kind == HIGH_PASS else wdt / (1.0 + wdt))
        if self.initialized:
            # stepped states inherit a validated configuration
            return
        if self.kind not in (HIGH_PASS, LOW_PASS):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not np.all(np.asarray(self.cutoff) > 0):
            raise ValueError(f"cutoff must be positive, got {self.cutoff!r}")

    @property
    def coefficient(self) -> Signal:
        """Recurrence coefficient: ``a`` for high-pass, ``g`` for low-pass."""
        return self.coef


def highpass(cutoff: Signal, dt: float) -> FilterState:
    return FilterState(HIGH_PASS, cutoff, dt)


def lowpass(cutoff: Signal, dt: float) -> FilterState:
    return FilterState(LOW_PASS, cutoff, dt)


def _check_finite(x: Signal) -> None:
    if isinstance(x, float):
        if not math.isfinite(x):
            raise NonFiniteInputError(f"non-finite filter input {x!r}")
    elif not np.all(np.isfinite(x)):
        raise NonFiniteInputError(f"non-finite filter input {x!r}")


def highpass_step(f: FilterState, x: Signal) -> tuple[FilterState, Signal]:
    """Advance a high-pass filter by one sample.

    y_t = a * (y_{t-1} + x_t - x_{t-1}),  a = 1 / (1 + cutoff * dt)

    The first sample only primes the input memory and returns zero, so a
    freshly reset filter never produces a step transient.
    """
    if f.kind != HIGH_PASS:
        raise ValueError(f"expected a high_pass filter, got {f.kind}")
    _check_finite(x)
    if not f.initialized:
        # zeros shaped like the channel bank
        y = 0.0 * (f.coef * x)
    else:
        y = f.coef * (f.prev_output + x - f.prev_input)
    return FilterState(f.kind, f.cutoff, f.dt, x, y, True, f.coef), y


def lowpass_step(f: FilterState, x: Signal) -> tuple[FilterState, Signal]:
    """Advance a low-pass filter by one sample; the first sample passes through.

    y_t = y_{t-1} + g * (x_t - y_{t-1}),  g = cutoff*dt / (1 + cutoff*dt)
    """
    if f.kind != LOW_PASS:
        raise ValueError(f"expected a low_pass filter, got {f.kind}")
    _check_finite(x)
    if not f.initialized:
        y = x + 0.0 * f.coef
    else:
        y = f.prev_output + f.coef * (x - f.prev_output)
    return FilterState(f.kind, f.cutoff, f.dt, x, y, True, f.coef), y


def filter_sequence(f: FilterState, xs) -> np.ndarray:
    """Run a whole sequence through a fresh copy of ``f``; returns the outputs."""
    step = highpass_step if f.kind == HIGH_PASS else lowpass_step
    out = []
    for x in xs:
        f, y = step(f, x)
        out.append(y)
    return np.asarray(out)


def analytic_gain(kind: str, cutoff: float, omega) -> np.ndarray:
    """Magnitude response of the continuous first-order prototype at ``omega``."""
    omega = np.asarray(omega, dtype=float)
    denom = np.sqrt(omega**2 + cutoff**2)
    if kind == HIGH_PASS:
        return omega / denom
    return cutoff / denom
