from __future__ import annotations

import numpy as np
import pytest

from epskip import EpsilonHistory


def make_history(values, start_index: int = 0, sigma: float = 1.0) -> EpsilonHistory:
    """Build a history from scalars or arrays, oldest first."""
    history = EpsilonHistory()
    for i, v in enumerate(values):
        history.append(np.asarray(v, dtype=np.float64), step_index=start_index + i, sigma=sigma)
    return history


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
