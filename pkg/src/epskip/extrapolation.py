"""Finite-difference extrapolation of noise residuals from recent real steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HistoryError

PREDICTOR_ORDERS = ("h2", "h3", "h4")
REQUIRED_HISTORY = {"h2": 2, "h3": 3, "h4": 4}

# Weights applied newest-first. Each row reproduces the next value of a
# polynomial sequence of the matching degree exactly.
_WEIGHTS = {
    "h2": (2.0, -1.0),
    "h3": (3.0, -3.0, 1.0),
    "h4": (4.0, -6.0, 4.0, -1.0),
}

_FALLBACK = {"h4": "h3", "h3": "h2"}


@dataclass(frozen=True)
class EpsilonRecord:
    epsilon: np.ndarray
    step_index: int
    sigma: float


class EpsilonHistory:
    """Bounded buffer of residuals from real model calls, oldest first.

    Predicted residuals must never be appended; only real-step ones.
    """

    def __init__(self, capacity: int = 4):
        if capacity < 4:
            raise ValueError("capacity must be at least 4")
        self.capacity = capacity
        self._records: list[EpsilonRecord] = []

    def append(self, epsilon: np.ndarray, step_index: int, sigma: float) -> None:
        eps = np.asarray(epsilon, dtype=np.float64)
        if not np.all(np.isfinite(eps)):
            raise ValueError("history only stores finite residuals")
        if self._records and step_index <= self._records[-1].step_index:
            raise ValueError("step_index must be strictly increasing")
        self._records.append(EpsilonRecord(eps, step_index, sigma))
        if len(self._records) > self.capacity:
            del self._records[0]

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[EpsilonRecord, ...]:
        return tuple(self._records)

    def last_epsilon(self) -> np.ndarray | None:
        return self._records[-1].epsilon if self._records else None


def _predict(history: EpsilonHistory, order: str) -> np.ndarray:
    need = REQUIRED_HISTORY[order]
    if len(history) < need:
        raise HistoryError(f"{order} needs {need} stored residuals, have {len(history)}")
    recs = history.records
    out = np.zeros_like(recs[-1].epsilon)
    for j, w in enumerate(_WEIGHTS[order]):
        out = out + w * recs[-1 - j].epsilon
    return out


def predict_h2(history: EpsilonHistory) -> np.ndarray:
    """2*e[-1] - e[-2]."""
    return _predict(history, "h2")


def predict_h3(history: EpsilonHistory) -> np.ndarray:
    """3*e[-1] - 3*e[-2] + e[-3]."""
    return _predict(history, "h3")


def predict_h4(history: EpsilonHistory) -> np.ndarray:
    """4*e[-1] - 6*e[-2] + 4*e[-3] - e[-4]."""
    return _predict(history, "h4")


def predict_with_fallback(history: EpsilonHistory, requested: str) -> tuple[np.ndarray, str]:
    """Predict at the highest order the history supports, capped at `requested`.

    Follows the h4 -> h3 -> h2 ladder and never upgrades past the request.
    Returns the prediction and the order actually used.
    """
    if requested not in REQUIRED_HISTORY:
        raise ValueError(f"unknown predictor order {requested!r}")
    if len(history) < 2:
        raise HistoryError("need at least two stored residuals to extrapolate")
    order = requested
    while len(history) < REQUIRED_HISTORY[order]:
        order = _FALLBACK[order]
    return _predict(history, order), order
