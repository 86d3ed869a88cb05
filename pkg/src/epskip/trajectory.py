"""Full-run execution: the per-step real/skip loop with validation, stabilizers,
and per-step logging."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericDivergenceError
from .extrapolation import EpsilonHistory, predict_with_fallback
from .models import DEFAULT_LATENT_SHAPE, CountingDenoiser, Denoiser, initial_latent
from .samplers import SAMPLER_KINDS, SamplerMemory, apply_step
from .schedules import Schedule
from .skip import GuardState, SkipConfig, StepDecision, decide_step, update_guard
from .stabilize import (
    LearningState,
    StabilizerConfig,
    grad_est_correction,
    learning_apply,
    learning_observe,
    res_magnitude_guard,
    validate_epsilon,
)

PredictionHook = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run byte for byte.

    `schedule` and `model` hold the serializable specs the harness materializes
    from; library callers may leave them empty and pass objects directly to
    run_trajectory.
    """

    sampler: str
    steps: int
    seed: int
    schedule: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    skip: SkipConfig = field(default_factory=SkipConfig)
    stabilizer: StabilizerConfig = field(default_factory=StabilizerConfig)
    shape: tuple[int, ...] = DEFAULT_LATENT_SHAPE
    name: str = "run"

    def __post_init__(self):
        if self.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")


@dataclass(frozen=True)
class StepLog:
    step_index: int
    sigma_current: float
    sigma_next: float
    decision: str
    reason: str
    predictor_order: str
    epsilon_norm: float
    learning_ratio: float
    validation_reason: str
    cumulative_nfe: int
    step_wall_time_s: float


@dataclass
class RunReport:
    config: dict
    steps: list[StepLog]
    nfe: int
    wall_time_s: float
    final_latent_digest: str
    final_shape: tuple[int, ...]
    comparison: Optional[object] = None  # metrics.RunComparison, attached by the harness


def config_to_dict(config: RunConfig) -> dict:
    skip = config.skip
    stab = config.stabilizer
    return {
        "name": config.name,
        "sampler": config.sampler,
        "steps": config.steps,
        "seed": config.seed,
        "shape": list(config.shape),
        "schedule": dict(config.schedule),
        "model": dict(config.model),
        "skip": {
            "mode": skip.mode,
            "order": skip.order,
            "skip_calls": skip.skip_calls,
            "tolerance": skip.tolerance,
            "anchor_interval": skip.anchor_interval,
            "max_consecutive_skips": skip.max_consecutive_skips,
            "indices": sorted(skip.indices),
            "gate": skip.gate,
            "protect_first": skip.protect_first,
            "protect_last": skip.protect_last,
        },
        "stabilizer": {
            "mode": stab.mode,
            "beta": stab.beta,
            "curvature_scale": stab.curvature_scale,
        },
    }


def latent_digest(x: np.ndarray) -> str:
    """sha256 over the C-order float64 bytes, shape included."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    digest = hashlib.sha256()
    digest.update(str(arr.shape).encode())
    digest.update(arr.tobytes())
    return digest.hexdigest()


def _shadow_order(skip_cfg: SkipConfig) -> str:
    # Matches what the skip path would have predicted on this step.
    if skip_cfg.mode in ("fixed", "explicit"):
        return skip_cfg.order
    if skip_cfg.mode == "adaptive":
        return "h3"
    return "h2"


def run_trajectory(
    config: RunConfig,
    model: Denoiser,
    schedule: Schedule,
    *,
    x0: Optional[np.ndarray] = None,
    prediction_hook: Optional[PredictionHook] = None,
) -> tuple[np.ndarray, RunReport]:
    """Integrate the full schedule, deciding each step between a real model call
    and a predicted-residual skip.

    Real steps call the model, store the residual, and (in learning mode) fold a
    shadow prediction into the learning ratio. Skip steps validate the predicted
    residual, demoting to a real call with reason "validation_reject" when a
    check fails. The whole run is deterministic for a fixed config and seed.

    `prediction_hook(step_index, epsilon_hat)` may replace a prediction before
    validation; it exists for fault injection and path-equivalence checks.

    Returns the final latent and a report with one StepLog per transition.
    """
    skip_cfg = config.skip
    stab = config.stabilizer
    learning_enabled = stab.mode in ("learning", "learn+grad_est")
    grad_enabled = stab.mode in ("grad_est", "learn+grad_est")

    counting = CountingDenoiser(model)
    sigmas = schedule.sigmas
    if x0 is not None:
        x = np.asarray(x0, dtype=np.float64).copy()
    else:
        x = initial_latent(config.shape, sigmas[0], config.seed)
    if not np.all(np.isfinite(x)):
        raise NumericDivergenceError(0, "initial state is non-finite")

    history = EpsilonHistory()
    guard = GuardState()
    memory = SamplerMemory()
    learning = LearningState(beta=stab.beta)
    logs: list[StepLog] = []
    run_start = time.perf_counter()

    for n in range(schedule.steps):
        step_start = time.perf_counter()
        sigma_current = sigmas[n]
        sigma_next = sigmas[n + 1]

        decision = decide_step(
            step_index=n,
            total_steps=schedule.steps,
            history=history,
            guard=guard,
            config=skip_cfg,
            x=x,
            sigma_current=sigma_current,
            sigma_next=sigma_next,
            sampler_kind=config.sampler,
            memory=memory,
        )

        validation_reason = ""
        eps_hat_raw: Optional[np.ndarray] = None
        eps_hat: Optional[np.ndarray] = None
        if decision.kind == "SKIP":
            eps_hat_raw = decision.epsilon_hat
            if prediction_hook is not None:
                eps_hat_raw = np.asarray(prediction_hook(n, eps_hat_raw), dtype=np.float64)
            eps_hat = learning_apply(learning, eps_hat_raw) if learning_enabled else eps_hat_raw
            outcome = validate_epsilon(eps_hat, history.last_epsilon())
            if outcome.accepted and config.sampler == "res2m" and len(history) > 0:
                outcome = res_magnitude_guard(eps_hat, history.last_epsilon())
            validation_reason = outcome.reason
            if not outcome.accepted:
                decision = StepDecision("REAL", "validation_reject", decision.predictor_order_used)

        correction = None
        res2m_scale = None
        if decision.kind == "REAL":
            denoised = counting.denoise(x, sigma_current)
            eps = np.asarray(denoised, dtype=np.float64) - x
            if not np.all(np.isfinite(eps)):
                raise NumericDivergenceError(n, f"model output non-finite at step {n}")
            if learning_enabled:
                shadow = eps_hat_raw
                if shadow is None and len(history) >= 2:
                    shadow, _ = predict_with_fallback(history, _shadow_order(skip_cfg))
                if shadow is not None and np.all(np.isfinite(shadow)):
                    learning = learning_observe(learning, shadow, eps)
            history.append(eps, step_index=n, sigma=sigma_current)
            if config.sampler == "res2m" and learning_enabled:
                res2m_scale = min(max(1.0 / learning.learning_ratio, 0.9), 1.1)
        else:
            eps = eps_hat
            if (
                grad_enabled
                and config.sampler in ("euler", "ddim", "ab2")
                and memory.derivative_last_real is not None
            ):
                derivative_hat = -eps / sigma_current
                correction = grad_est_correction(
                    derivative_hat, memory.derivative_last_real, stab.curvature_scale
                )

        x, memory = apply_step(
            config.sampler,
            x,
            eps,
            sigma_current,
            sigma_next,
            memory,
            is_real=decision.kind == "REAL",
            correction=correction,
            res2m_coeff1_scale=res2m_scale,
        )
        if not np.all(np.isfinite(x)):
            raise NumericDivergenceError(n)
        guard = update_guard(guard, decision)
        logs.append(
            StepLog(
                step_index=n,
                sigma_current=float(sigma_current),
                sigma_next=float(sigma_next),
                decision=decision.kind,
                reason=decision.reason,
                predictor_order=decision.predictor_order_used or "",
                epsilon_norm=float(np.linalg.norm(eps.ravel())),
                learning_ratio=learning.learning_ratio,
                validation_reason=validation_reason,
                cumulative_nfe=counting.call_count,
                step_wall_time_s=time.perf_counter() - step_start,
            )
        )

    report = RunReport(
        config=config_to_dict(config),
        steps=logs,
        nfe=counting.call_count,
        wall_time_s=time.perf_counter() - run_start,
        final_latent_digest=latent_digest(x),
        final_shape=tuple(x.shape),
    )
    return x, report
