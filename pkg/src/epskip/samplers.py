"""Per-step update rules: first-order, interpolation, two-step, and exponential two-step.

Every rule has a residual-based core taking (x, eps) with eps = denoised - x.
The run loop feeds both real and skipped steps through the same cores, so a
skipped step given the true residual reproduces the real update bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

SAMPLER_KINDS = ("euler", "ddim", "ab2", "res2m")


def phi1(h: float) -> float:
    """(e^h - 1) / h, with a series branch near zero."""
    if abs(h) < 1e-4:
        return 1.0 + h / 2.0 + h * h / 6.0
    return math.expm1(h) / h


def phi2(h: float) -> float:
    """(e^h - 1 - h) / h^2, with a series branch near zero."""
    if abs(h) < 1e-4:
        return 0.5 + h / 6.0 + h * h / 24.0
    return (math.expm1(h) - h) / (h * h)


@dataclass(frozen=True)
class Res2mCoefficients:
    """Variable-step exponential two-step weights.

    coeff1 + coeff2 equals phi1(h), the first-order consistency contract of
    this construction.
    """

    coeff1: float
    coeff2: float
    c2: float
    phi1_h: float
    phi2_h: float


def res2m_coefficients(
    log_snr_step: float, log_snr_step_previous: float
) -> Optional[Res2mCoefficients]:
    """Weights for the exponential two-step update; None signals the first-order fallback."""
    h = log_snr_step
    if h == 0 or not (math.isfinite(h) and math.isfinite(log_snr_step_previous)):
        return None
    r = log_snr_step_previous / h
    if not math.isfinite(r) or r <= 1e-8:
        return None
    p1 = phi1(h)
    p2 = phi2(h)
    c1 = p1 + p2 / r
    c2 = -p2 / r
    if not (math.isfinite(c1) and math.isfinite(c2)):
        return None
    return Res2mCoefficients(c1, c2, r, p1, p2)


@dataclass(frozen=True)
class SamplerMemory:
    """One-step state carried between transitions.

    derivative_previous / epsilon_previous are from the previous step, real or
    skipped; derivative_last_real is from the most recent real model call and
    anchors the curvature correction.
    """

    derivative_previous: Optional[np.ndarray] = None
    epsilon_previous: Optional[np.ndarray] = None
    log_snr_step_previous: Optional[float] = None
    derivative_last_real: Optional[np.ndarray] = None


def _require_positive_sigma(sigma_current: float) -> None:
    if sigma_current <= 0:
        raise ValueError("sigma_current must be positive")


def euler_step_eps(
    x: np.ndarray,
    eps: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    correction: Optional[np.ndarray] = None,
) -> np.ndarray:
    """First-order step x + d * dt with d = -eps / sigma_current."""
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return x + eps
    d = -eps / sigma_current
    if correction is not None:
        d = d + correction
    return x + d * (sigma_next - sigma_current)


def ddim_step_eps(
    x: np.ndarray,
    eps: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    correction: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Interpolation toward the predicted clean state by the sigma ratio.

    A curvature correction switches the step to its equivalent derivative form.
    """
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return x + eps
    if correction is not None:
        d = -eps / sigma_current + correction
        return x + d * (sigma_next - sigma_current)
    denoised = x + eps
    return denoised + (sigma_next / sigma_current) * (x - denoised)


def ab2_step_eps(
    x: np.ndarray,
    eps: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    derivative_previous: Optional[np.ndarray] = None,
    correction: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Two-step update with weights 1.5 / -0.5; plain first-order when no memory."""
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return x + eps
    d = -eps / sigma_current
    if correction is not None:
        d = d + correction
    dt = sigma_next - sigma_current
    if derivative_previous is None:
        return x + d * dt
    return x + dt * (1.5 * d - 0.5 * derivative_previous)


def res2m_step_eps(
    x: np.ndarray,
    eps: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    epsilon_previous: Optional[np.ndarray] = None,
    log_snr_step_previous: Optional[float] = None,
    coeff1_scale: Optional[float] = None,
) -> np.ndarray:
    """Exponential two-step update in log-SNR.

    Falls back to the first-order step when there is no previous residual, the
    coefficients are invalid, or the transition lands on sigma = 0. When
    coeff1_scale is given (learning mode, real steps) the first weight is
    rescaled and the second adjusted so their sum is preserved.
    """
    _require_positive_sigma(sigma_current)
    if sigma_next == 0 or epsilon_previous is None or log_snr_step_previous is None:
        return euler_step_eps(x, eps, sigma_current, sigma_next)
    h = -math.log(sigma_next) + math.log(sigma_current)
    coeffs = res2m_coefficients(h, log_snr_step_previous)
    if coeffs is None:
        return euler_step_eps(x, eps, sigma_current, sigma_next)
    c1 = coeffs.coeff1
    c2 = coeffs.coeff2
    if coeff1_scale is not None:
        scaled = c1 * coeff1_scale
        c2 = (c1 + c2) - scaled
        c1 = scaled
    return x + h * (c1 * eps + c2 * epsilon_previous)


def apply_step(
    kind: str,
    x: np.ndarray,
    eps: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    memory: SamplerMemory,
    *,
    is_real: bool,
    correction: Optional[np.ndarray] = None,
    res2m_coeff1_scale: Optional[float] = None,
) -> tuple[np.ndarray, SamplerMemory]:
    """One transition of the chosen sampler; returns the new state and memory.

    The stored derivative is always the uncorrected one, so memory evolves
    identically whether or not a curvature correction was applied.
    """
    if kind == "euler":
        x_next = euler_step_eps(x, eps, sigma_current, sigma_next, correction)
    elif kind == "ddim":
        x_next = ddim_step_eps(x, eps, sigma_current, sigma_next, correction)
    elif kind == "ab2":
        x_next = ab2_step_eps(
            x, eps, sigma_current, sigma_next, memory.derivative_previous, correction
        )
    elif kind == "res2m":
        x_next = res2m_step_eps(
            x,
            eps,
            sigma_current,
            sigma_next,
            memory.epsilon_previous,
            memory.log_snr_step_previous,
            res2m_coeff1_scale,
        )
    else:
        raise ValueError(f"unknown sampler kind {kind!r}")
    d = -eps / sigma_current
    h = (-math.log(sigma_next) + math.log(sigma_current)) if sigma_next > 0 else None
    new_memory = SamplerMemory(
        derivative_previous=d,
        epsilon_previous=eps,
        log_snr_step_previous=h,
        derivative_last_real=d if is_real else memory.derivative_last_real,
    )
    return x_next, new_memory


def preview_skip_state(
    kind: str,
    x: np.ndarray,
    eps: np.ndarray,
    sigma_current: float,
    sigma_next: float,
    memory: Optional[SamplerMemory] = None,
) -> np.ndarray:
    """Skip-step state `apply_step` would produce, without committing memory."""
    x_next, _ = apply_step(
        kind, x, eps, sigma_current, sigma_next, memory or SamplerMemory(), is_real=False
    )
    return x_next


# Convenience forms taking the predicted clean state directly.


def euler_step(x, denoised, sigma_current: float, sigma_next: float) -> np.ndarray:
    """x + derivative * (sigma_next - sigma_current); lands exactly on denoised at sigma 0."""
    x = np.asarray(x, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return denoised.copy()
    return euler_step_eps(x, denoised - x, sigma_current, sigma_next)


def ddim_step(x, denoised, sigma_current: float, sigma_next: float) -> np.ndarray:
    """denoised + (sigma_next / sigma_current) * (x - denoised)."""
    x = np.asarray(x, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return denoised.copy()
    return denoised + (sigma_next / sigma_current) * (x - denoised)


def ab2_step(
    x,
    denoised,
    sigma_current: float,
    sigma_next: float,
    derivative_previous: Optional[np.ndarray] = None,
) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return denoised.copy()
    return ab2_step_eps(x, denoised - x, sigma_current, sigma_next, derivative_previous)


def res2m_step(
    x,
    denoised,
    sigma_current: float,
    sigma_next: float,
    epsilon_previous: Optional[np.ndarray] = None,
    log_snr_step_previous: Optional[float] = None,
    coeff1_scale: Optional[float] = None,
) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    denoised = np.asarray(denoised, dtype=np.float64)
    _require_positive_sigma(sigma_current)
    if sigma_next == 0:
        return denoised.copy()
    return res2m_step_eps(
        x,
        denoised - x,
        sigma_current,
        sigma_next,
        epsilon_previous,
        log_snr_step_previous,
        coeff1_scale,
    )
