"""Shared helpers for the test suite.

Numeric tests run in 64-bit (see the engine design notes); training-shaped
tests use the library defaults. All randomness is seeded.
"""

import numpy as np
import pytest

from twingan.engine import Tensor


def t64(data, requires_grad: bool = False) -> Tensor:
    """Wrap data as a float64 Tensor."""
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def rand64(rng: np.random.Generator, shape, lo: float = -1.0, hi: float = 1.0,
           requires_grad: bool = False) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=requires_grad)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
