"""Shared helpers for the test suite."""

import numpy as np
import pytest

from condtest.distcore import DistributionTable


def random_table(rng, n, zeros=False):
    """A random dense distribution over {0,1}^n; with ``zeros`` roughly a
    quarter of the atoms are forced to zero probability."""
    w = rng.random(1 << n)
    if zeros:
        w[rng.random(1 << n) < 0.25] = 0.0
        if w.sum() == 0.0:
            w[0] = 1.0
    return DistributionTable(n, w / w.sum())


def positive_table(rng, n):
    """A random table with full support (needed for finite KL)."""
    w = rng.random(1 << n) + 0.05
    return DistributionTable(n, w / w.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20260824)
