"""Step policies choosing between real model calls and predicted-residual skips."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, SkipParseError
from .extrapolation import (
    PREDICTOR_ORDERS,
    REQUIRED_HISTORY,
    EpsilonHistory,
    predict_h2,
    predict_h3,
    predict_with_fallback,
)
from .samplers import SAMPLER_KINDS, SamplerMemory, preview_skip_state

logger = logging.getLogger(__name__)

SKIP_MODES = ("none", "fixed", "adaptive", "explicit")
GATES = ("epsilon", "latent")

RMS_FLOOR = 1e-6


@dataclass(frozen=True)
class SkipConfig:
    """Policy parameters plus the protected head/tail windows.

    Only the fields belonging to the selected mode matter; the rest keep their
    defaults so configs stay serializable in one shape.
    """

    mode: str = "none"
    order: str = "h2"
    skip_calls: int = 3
    tolerance: float = 0.1
    anchor_interval: int = 4
    max_consecutive_skips: int = 2
    indices: frozenset[int] = field(default_factory=frozenset)
    gate: str = "epsilon"
    protect_first: int = 1
    protect_last: int = 1

    def __post_init__(self):
        if self.mode not in SKIP_MODES:
            raise ConfigError(f"unknown skip mode {self.mode!r}")
        if self.order not in PREDICTOR_ORDERS:
            raise ConfigError(f"unknown predictor order {self.order!r}")
        if self.gate not in GATES:
            raise ConfigError(f"unknown gate {self.gate!r}")
        if self.mode == "fixed" and self.skip_calls < 1:
            raise ConfigError("skip_calls must be >= 1")
        if self.mode == "adaptive":
            if self.tolerance < 0:
                raise ConfigError("tolerance must be non-negative")
            if self.anchor_interval < 1:
                raise ConfigError("anchor_interval must be >= 1")
            if self.max_consecutive_skips < 1:
                raise ConfigError("max_consecutive_skips must be >= 1")
        if self.mode == "explicit" and any(i < 2 for i in self.indices):
            raise ConfigError("explicit skip indices 0 and 1 are never allowed")
        if self.protect_first < 0 or self.protect_last < 0:
            raise ConfigError("protected window sizes must be non-negative")


@dataclass(frozen=True)
class GuardState:
    """Skip counters; both reset on every real step, forced or natural."""

    consecutive_skips: int = 0
    steps_since_anchor: int = 0


@dataclass(frozen=True)
class StepDecision:
    kind: str  # "REAL" | "SKIP"
    reason: str
    predictor_order_used: Optional[str] = None
    epsilon_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("REAL", "SKIP"):
            raise ValueError(f"unknown decision kind {self.kind!r}")
        if self.kind == "SKIP" and (
            self.predictor_order_used is None or self.epsilon_hat is None
        ):
            raise ValueError("SKIP decisions must carry a predictor order and residual")


def rms(t) -> float:
    """sqrt(mean(t**2)) over all elements."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("rms of an empty array")
    return float(np.sqrt(np.mean(arr * arr)))


def fixed_skip_decision(
    step_index: int, total_steps: int, history_len: int, config: SkipConfig
) -> bool:
    """True when the deterministic call/skip cadence lands on a skip here.

    The cadence starts at anchor = max(protect_first, required history) and
    repeats with cycle length skip_calls + 1, skipping on the last position.
    """
    if config.mode != "fixed":
        raise ValueError("fixed_skip_decision requires fixed mode")
    order_need = REQUIRED_HISTORY[config.order]
    if step_index < config.protect_first:
        return False
    if step_index >= total_steps - config.protect_last:
        return False
    if history_len < order_need:
        return False
    anchor = max(config.protect_first, order_need)
    if step_index < anchor:
        return False
    cycle_length = config.skip_calls + 1
    return (step_index - anchor) % cycle_length == cycle_length - 1


def _adaptive_guards(
    history: EpsilonHistory, guard: GuardState, config: SkipConfig, window_ok: bool
) -> Optional[StepDecision]:
    if len(history) < 3:
        return StepDecision("REAL", "insufficient_history")
    if guard.steps_since_anchor + 1 >= config.anchor_interval:
        return StepDecision("REAL", "anchor_forced")
    if guard.consecutive_skips >= config.max_consecutive_skips:
        return StepDecision("REAL", "max_consecutive")
    if not window_ok:
        return StepDecision("REAL", "protected")
    return None


def adaptive_skip_decision(
    history: EpsilonHistory,
    tolerance: float,
    guard: GuardState,
    config: SkipConfig,
    window_ok: bool,
) -> StepDecision:
    """Dual-predictor gate: skip when the h3/h2 disagreement is within tolerance."""
    blocked = _adaptive_guards(history, guard, config, window_ok)
    if blocked is not None:
        return blocked
    high = predict_h3(history)
    low = predict_h2(history)
    relative_error = rms(high - low) / max(rms(high), RMS_FLOOR)
    if relative_error <= tolerance:
        return StepDecision("SKIP", "gate_accept", "h3", high)
    return StepDecision("REAL", "gate_reject")


def adaptive_state_space_gate(
    x: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    sampler_kind: str,
    history: EpsilonHistory,
    tolerance: float,
    *,
    guard: GuardState,
    config: SkipConfig,
    window_ok: bool,
    memory: Optional[SamplerMemory] = None,
) -> StepDecision:
    """Like the dual-predictor gate but compares the next states the sampler's
    skip update would produce, which tracks step geometry more closely."""
    blocked = _adaptive_guards(history, guard, config, window_ok)
    if blocked is not None:
        return blocked
    high = predict_h3(history)
    low = predict_h2(history)
    if sampler_kind not in SAMPLER_KINDS:
        logger.warning(
            "state-space gate has no update rule for %r; using the residual gate",
            sampler_kind,
        )
        relative_error = rms(high - low) / max(rms(high), RMS_FLOOR)
    else:
        x_high = preview_skip_state(sampler_kind, x, high, sigma_current, sigma_next, memory)
        x_low = preview_skip_state(sampler_kind, x, low, sigma_current, sigma_next, memory)
        relative_error = rms(x_high - x_low) / max(rms(x_high), RMS_FLOOR)
    if relative_error <= tolerance:
        return StepDecision("SKIP", "gate_accept", "h3", high)
    return StepDecision("REAL", "gate_reject")


def parse_explicit_skips(text: str, total_steps: int) -> tuple[str, frozenset[int]]:
    """Parse a string like "h3, 6, 9, 12" into a predictor order and skip indices.

    The leading order token is optional (defaults to h2). Indices 0 and 1 and
    anything outside the valid range are dropped; non-integer tokens are errors.
    """
    order = "h2"
    indices: set[int] = set()
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    for pos, tok in enumerate(tokens):
        if pos == 0 and tok.lower() in PREDICTOR_ORDERS:
            order = tok.lower()
            continue
        try:
            idx = int(tok)
        except ValueError:
            raise SkipParseError(f"malformed skip token {tok!r}") from None
        if 2 <= idx < total_steps:
            indices.add(idx)
    return order, frozenset(indices)


def update_guard(guard: GuardState, decision: StepDecision) -> GuardState:
    """Advance the skip counters; any real call resets both."""
    if decision.kind == "SKIP":
        return GuardState(guard.consecutive_skips + 1, guard.steps_since_anchor + 1)
    return GuardState(0, 0)


def decide_step(
    *,
    step_index: int,
    total_steps: int,
    history: EpsilonHistory,
    guard: GuardState,
    config: SkipConfig,
    x: Optional[np.ndarray] = None,
    sigma_current: Optional[float] = None,
    sigma_next: Optional[float] = None,
    sampler_kind: Optional[str] = None,
    memory: Optional[SamplerMemory] = None,
) -> StepDecision:
    """Dispatch the per-step policy for the configured mode.

    Explicit indices override every guard rail, including the protected
    windows; they only defer to missing history.
    """
    mode = config.mode
    if mode == "none":
        return StepDecision("REAL", "baseline")
    if mode == "fixed":
        if step_index < config.protect_first:
            return StepDecision("REAL", "protected_head")
        if step_index >= total_steps - config.protect_last:
            return StepDecision("REAL", "protected_tail")
        if len(history) < REQUIRED_HISTORY[config.order]:
            return StepDecision("REAL", "insufficient_history")
        if fixed_skip_decision(step_index, total_steps, len(history), config):
            eps_hat, used = predict_with_fallback(history, config.order)
            return StepDecision("SKIP", "cadence", used, eps_hat)
        return StepDecision("REAL", "cadence")
    if mode == "adaptive":
        window_ok = config.protect_first <= step_index < total_steps - config.protect_last
        if config.gate == "latent":
            return adaptive_state_space_gate(
                x,
                sigma_current,
                sigma_next,
                sampler_kind,
                history,
                config.tolerance,
                guard=guard,
                config=config,
                window_ok=window_ok,
                memory=memory,
            )
        return adaptive_skip_decision(history, config.tolerance, guard, config, window_ok)
    if mode == "explicit":
        if step_index in config.indices:
            if len(history) < 2:
                return StepDecision("REAL", "insufficient_history")
            eps_hat, used = predict_with_fallback(history, config.order)
            return StepDecision("SKIP", "explicit", used, eps_hat)
        return StepDecision("REAL", "explicit")
    raise ValueError(f"unknown skip mode {mode!r}")
