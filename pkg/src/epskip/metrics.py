"""Quality and efficiency metrics between a run and its same-seed baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class RunComparison:
    ssim: float
    rmse: float
    mae: float
    nfe_baseline: int
    nfe_run: int
    nfe_reduction_pct: float
    time_baseline_s: float
    time_run_s: float
    time_saved_pct: float


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    diff = a - b
    return float(np.sqrt(np.mean(diff * diff)))


def mae(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    return float(np.mean(np.abs(a - b)))


def nfe_reduction(nfe_baseline: int, nfe_run: int) -> float:
    """Percent decrease in model calls relative to the baseline."""
    if nfe_baseline <= 0:
        raise ValueError("baseline NFE must be positive")
    return 100.0 * (1.0 - nfe_run / nfe_baseline)


def time_saved(time_baseline: float, time_run: float) -> float:
    """Percent decrease in wall time relative to the baseline."""
    if time_baseline <= 0:
        raise ValueError("baseline time must be positive")
    return 100.0 * (1.0 - time_run / time_baseline)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2-D Gaussian kernel."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords * coords) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_channel(a: np.ndarray, b: np.ndarray, kernel: np.ndarray, c1: float, c2: float) -> float:
    k = kernel.shape[0]
    wa = sliding_window_view(a, (k, k))
    wb = sliding_window_view(b, (k, k))
    mu_a = np.einsum("ijkl,kl->ij", wa, kernel)
    mu_b = np.einsum("ijkl,kl->ij", wb, kernel)
    e_aa = np.einsum("ijkl,kl->ij", wa * wa, kernel)
    e_bb = np.einsum("ijkl,kl->ij", wb * wb, kernel)
    e_ab = np.einsum("ijkl,kl->ij", wa * wb, kernel)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(
    a,
    b,
    *,
    window_size: int = 11,
    window_sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float | None = None,
) -> float:
    """Mean local structural similarity over valid Gaussian windows.

    Inputs are 2-D grids or stacks of them (leading axes are treated as
    channels and averaged). The dynamic range defaults to the larger of the two
    observed ranges, floored at 1e-6, since latents are not 8-bit images.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    if a.ndim < 2:
        raise ValueError("ssim needs 2-D grids")
    h, w = a.shape[-2:]
    if h < window_size or w < window_size:
        raise ValueError(f"grids must be at least {window_size}x{window_size}")
    if data_range is None:
        data_range = max(float(a.max() - a.min()), float(b.max() - b.min()))
    data_range = max(float(data_range), 1e-6)
    kernel = gaussian_window(window_size, window_sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    a_stack = a.reshape(-1, h, w)
    b_stack = b.reshape(-1, h, w)
    values = [
        _ssim_channel(a_stack[c], b_stack[c], kernel, c1, c2) for c in range(a_stack.shape[0])
    ]
    return float(np.mean(values))
