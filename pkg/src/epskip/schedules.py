"""Noise-scale schedules and their log-SNR coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScheduleError, UndefinedLogSnrError

# Defaults give a realistic dynamic range without being tied to any model.
DEFAULT_SIGMA_MAX = 14.6146
DEFAULT_SIGMA_MIN = 0.0292


@dataclass(frozen=True)
class Schedule:
    """Strictly decreasing noise scales; only the final entry may be zero."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        if len(self.sigmas) < 2:
            raise ScheduleError("schedule needs at least two sigmas")
        last = len(self.sigmas) - 1
        for i, s in enumerate(self.sigmas):
            if not math.isfinite(s):
                raise ScheduleError(f"sigma[{i}] is not finite")
            if s < 0 or (s == 0 and i != last):
                raise ScheduleError(
                    f"sigma[{i}]={s} must be positive (zero is allowed only at the end)"
                )
        for i in range(last):
            if self.sigmas[i] <= self.sigmas[i + 1]:
                raise ScheduleError(
                    f"sigmas must strictly decrease, got {self.sigmas[i]} -> "
                    f"{self.sigmas[i + 1]} at index {i}"
                )

    @property
    def steps(self) -> int:
        """Number of transitions."""
        return len(self.sigmas) - 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.sigmas, dtype=np.float64)


def _check_bounds(sigma_max: float, sigma_min: float) -> None:
    if sigma_max <= 0 or sigma_min <= 0:
        raise ScheduleError("sigma bounds must be positive")
    if sigma_min >= sigma_max:
        raise ScheduleError(f"sigma_min={sigma_min} must be below sigma_max={sigma_max}")


def make_simple_schedule(
    steps: int, sigma_max: float, sigma_min: float, append_zero: bool = False
) -> Schedule:
    """Sigmas uniformly spaced in log-SNR (equivalently, geometric in sigma)."""
    if steps < 1:
        raise ScheduleError("steps must be >= 1")
    _check_bounds(sigma_max, sigma_min)
    lams = np.linspace(math.log(sigma_max), math.log(sigma_min), steps + 1)
    sigmas = np.exp(lams)
    # exp(log x) can be off by an ulp; pin the endpoints exactly
    sigmas[0] = sigma_max
    sigmas[-1] = sigma_min
    out = [float(s) for s in sigmas]
    if append_zero:
        out.append(0.0)
    return Schedule(tuple(out))


def make_karras_schedule(
    steps: int,
    sigma_max: float,
    sigma_min: float,
    rho: float = 7.0,
    append_zero: bool = False,
) -> Schedule:
    """Power-law ramp between the sigma bounds; rho=1 is linear in sigma."""
    if steps < 1:
        raise ScheduleError("steps must be >= 1")
    _check_bounds(sigma_max, sigma_min)
    if rho <= 0:
        raise ScheduleError("rho must be positive")
    ramp = np.linspace(0.0, 1.0, steps + 1)
    max_inv = sigma_max ** (1.0 / rho)
    min_inv = sigma_min ** (1.0 / rho)
    sigmas = (max_inv + ramp * (min_inv - max_inv)) ** rho
    sigmas[0] = sigma_max
    sigmas[-1] = sigma_min
    out = [float(s) for s in sigmas]
    if append_zero:
        out.append(0.0)
    return Schedule(tuple(out))


def compose_two_stage(first: Schedule, second: Schedule) -> Schedule:
    """Concatenate a high-noise stage and a low-noise stage.

    An equal junction sigma is kept once; an increasing junction is rejected.
    """
    if first.sigmas[-1] < second.sigmas[0]:
        raise ScheduleError(
            f"stages do not compose: first ends at {first.sigmas[-1]}, "
            f"second starts at {second.sigmas[0]}"
        )
    tail = second.sigmas[1:] if first.sigmas[-1] == second.sigmas[0] else second.sigmas
    return Schedule(first.sigmas + tail)


def log_snr_step(schedule: Schedule, n: int) -> float:
    """Step size in log-SNR across transition n; undefined onto sigma = 0."""
    if n < 0 or n >= schedule.steps:
        raise IndexError(f"transition index {n} out of range for {schedule.steps} steps")
    s_cur = schedule.sigmas[n]
    s_next = schedule.sigmas[n + 1]
    if s_next == 0:
        raise UndefinedLogSnrError(
            "log-SNR is undefined at sigma=0; the terminal transition needs the "
            "first-order branch"
        )
    return -math.log(s_next) + math.log(s_cur)
