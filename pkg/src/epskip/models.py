"""Closed-form denoisers for exercising samplers without a neural network."""

from __future__ import annotations

import abc
import math
from typing import Sequence

import numpy as np

DEFAULT_LATENT_SHAPE = (1, 4, 32, 32)


class Denoiser(abc.ABC):
    """Predicts the clean state for a noisy latent at a given noise scale."""

    @abc.abstractmethod
    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Return the predicted clean state; output shape equals input shape."""

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return self.denoise(x, sigma)


class GaussianMixtureDenoiser(Denoiser):
    """Exact posterior mean of x0 given x = x0 + sigma * noise, with x0 drawn from
    an isotropic Gaussian mixture.

    Means may be scalars or arrays broadcastable to the latent shape. Weights are
    normalized on construction. With a single component the denoiser is affine in
    x; with two or more it is genuinely nonlinear.
    """

    def __init__(self, weights: Sequence[float], means: Sequence, variances: Sequence[float]):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-D sequence")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        self.weights = w / w.sum()
        self.means = [np.asarray(m, dtype=np.float64) for m in means]
        v = np.asarray(variances, dtype=np.float64)
        if v.shape != w.shape or len(self.means) != w.size:
            raise ValueError("weights, means, and variances must have matching lengths")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        self.variances = v

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        x = np.asarray(x, dtype=np.float64)
        d = x.size
        s2 = self.variances + sigma * sigma
        log_resp = np.empty(self.weights.size)
        posteriors = []
        for k in range(self.weights.size):
            diff = x - self.means[k]
            log_resp[k] = (
                math.log(self.weights[k])
                - float(np.sum(diff * diff)) / (2.0 * s2[k])
                - 0.5 * d * math.log(s2[k])
            )
            posteriors.append((self.variances[k] * x + (sigma * sigma) * self.means[k]) / s2[k])
        # log-sum-exp keeps responsibilities sane when components are far apart
        log_resp -= log_resp.max()
        resp = np.exp(log_resp)
        resp /= resp.sum()
        out = np.zeros_like(x)
        for k, post in enumerate(posteriors):
            out += resp[k] * post
        return out


def gm_exact_solution(
    model: GaussianMixtureDenoiser,
    x_start: np.ndarray,
    sigma_start: float,
    sigma_end: float,
) -> np.ndarray:
    """Analytic trajectory endpoint for a single-component model.

    Solves dx/dsigma = sigma * (x - m) / (c + sigma^2), which is separable.
    """
    if len(model.means) != 1:
        raise ValueError("exact solution requires a single-component model")
    if sigma_end < 0:
        raise ValueError("sigma_end must be non-negative")
    m = model.means[0]
    c = float(model.variances[0])
    scale = math.sqrt((c + sigma_end * sigma_end) / (c + sigma_start * sigma_start))
    return m + (np.asarray(x_start, dtype=np.float64) - m) * scale


class ScriptedDenoiser(Denoiser):
    """Returns x plus the next scripted residual; raises once the script runs out."""

    def __init__(self, epsilons: Sequence):
        self.epsilons = [np.asarray(e, dtype=np.float64) for e in epsilons]
        self.call_index = 0

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        if self.call_index >= len(self.epsilons):
            raise RuntimeError("scripted denoiser exhausted")
        eps = self.epsilons[self.call_index]
        self.call_index += 1
        return np.asarray(x, dtype=np.float64) + eps


class CountingDenoiser(Denoiser):
    """Wraps another denoiser and counts model calls."""

    def __init__(self, inner: Denoiser):
        self.inner = inner
        self.call_count = 0

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        self.call_count += 1
        return self.inner.denoise(x, sigma)


def initial_latent(shape: Sequence[int], sigma: float, seed: int) -> np.ndarray:
    """Seeded standard-normal draw scaled to the starting noise level."""
    rng = np.random.default_rng(seed)
    return sigma * rng.standard_normal(tuple(shape))
