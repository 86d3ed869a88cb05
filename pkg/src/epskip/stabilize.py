"""Validation of predicted residuals and the drift-correcting stabilizers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError

STABILIZER_MODES = ("none", "learning", "grad_est", "learn+grad_est")

ABS_NORM_FLOOR = 1e-8
REL_NORM_FLOOR = 1e-6
RES_MAX_REL_NORM = 50.0
LEARNING_RATIO_MIN = 0.5
LEARNING_RATIO_MAX = 2.0
GRAD_CORRECTION_MAX_REL = 0.25


@dataclass(frozen=True)
class StabilizerConfig:
    mode: str = "none"
    beta: float = 0.995
    curvature_scale: float = 2.0

    def __post_init__(self):
        if self.mode not in STABILIZER_MODES:
            raise ConfigError(f"unknown stabilizer mode {self.mode!r}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must be in (0, 1)")
        if not math.isfinite(self.curvature_scale):
            raise ConfigError("curvature_scale must be finite")


@dataclass(frozen=True)
class ValidationOutcome:
    accepted: bool
    reason: str  # ok | nonfinite | below_abs_floor | below_rel_floor | too_large_rel


def _norm(t) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


def validate_epsilon(epsilon_hat, epsilon_prev=None) -> ValidationOutcome:
    """Finiteness and magnitude-floor checks shared by every sampler."""
    arr = np.asarray(epsilon_hat, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        return ValidationOutcome(False, "nonfinite")
    norm = _norm(arr)
    if not math.isfinite(norm):
        return ValidationOutcome(False, "nonfinite")
    if norm < ABS_NORM_FLOOR:
        return ValidationOutcome(False, "below_abs_floor")
    if epsilon_prev is not None and norm < REL_NORM_FLOOR * _norm(epsilon_prev):
        return ValidationOutcome(False, "below_rel_floor")
    return ValidationOutcome(True, "ok")


def res_magnitude_guard(epsilon_hat, epsilon_prev) -> ValidationOutcome:
    """Extra cap used by the exponential-multistep family on top of validate_epsilon."""
    if _norm(epsilon_hat) > RES_MAX_REL_NORM * _norm(epsilon_prev):
        return ValidationOutcome(False, "too_large_rel")
    return ValidationOutcome(True, "ok")


@dataclass(frozen=True)
class LearningState:
    """EMA of the predicted/actual residual norm ratio, clamped to [0.5, 2.0]."""

    learning_ratio: float = 1.0
    beta: float = 0.995


def learning_observe(
    state: LearningState, epsilon_hat, epsilon_real
) -> LearningState:
    """Fold one real-step observation into the ratio; non-finite ones are ignored."""
    obs = _norm(epsilon_hat) / (_norm(epsilon_real) + 1e-8)
    if not math.isfinite(obs):
        return state
    ratio = state.beta * state.learning_ratio + (1.0 - state.beta) * obs
    ratio = min(max(ratio, LEARNING_RATIO_MIN), LEARNING_RATIO_MAX)
    return LearningState(ratio, state.beta)


def learning_apply(state: LearningState, epsilon_hat) -> np.ndarray:
    """Rescale a prediction by the inverse learned ratio."""
    return np.asarray(epsilon_hat, dtype=np.float64) / state.learning_ratio


def grad_est_correction(
    derivative_hat, derivative_previous, curvature_scale: float = 2.0
) -> np.ndarray:
    """Curvature term added to the derivative on skip steps.

    The correction norm is clamped to 0.25 of the derivative norm (plus a small
    offset) so it can nudge but never dominate the step.
    """
    d_hat = np.asarray(derivative_hat, dtype=np.float64)
    raw = (curvature_scale - 1.0) * (d_hat - np.asarray(derivative_previous, np.float64))
    raw_norm = _norm(raw)
    limit = GRAD_CORRECTION_MAX_REL * (_norm(d_hat) + 1e-8)
    if raw_norm > limit and raw_norm > 0:
        raw = raw * (limit / raw_norm)
    return raw
