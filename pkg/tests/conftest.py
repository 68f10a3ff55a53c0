#!/usr/bin/env python3
"""
Shared fixtures for the greensolve tests.

Assemblies are the expensive part of the suite, so grids and matrices are
built once per session and reused by every test module.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from domain_grid import build_ball_grid  # noqa: E402
from green_kernel import GreenKernel  # noqa: E402
from green_operator import assemble  # noqa: E402

# Geometric grid used by the transition experiments: 10 octaves, 2 shells
# per octave, 48 directions per shell (961 nodes).
GEOMETRIC = dict(dim=3, radial_count=20, angular_count=48, radial_rule="geometric", octaves=10)
# Smaller geometric grid for solver tests (769 nodes).
SMALL = dict(dim=3, radial_count=16, angular_count=48, radial_rule="geometric", octaves=8)


@pytest.fixture(scope="session")
def legendre_grid():
    return build_ball_grid(3, 24, 48)


@pytest.fixture(scope="session")
def geometric_grid():
    return build_ball_grid(**GEOMETRIC)


@pytest.fixture(scope="session")
def small_grid():
    return build_ball_grid(**SMALL)


@pytest.fixture(scope="session")
def classical_matrix(legendre_grid):
    return assemble(GreenKernel.classical(3), legendre_grid)


@pytest.fixture(scope="session")
def geometric_matrices(geometric_grid):
    """Green matrices on the geometric grid keyed by s, assembled on demand."""
    cache = {}

    def get(s):
        if s not in cache:
            cache[s] = assemble(GreenKernel.from_order(3, s), geometric_grid)
        return cache[s]

    return get


@pytest.fixture(scope="session")
def rfl_matrix(geometric_matrices):
    return geometric_matrices(0.5)


@pytest.fixture(scope="session")
def small_matrices(small_grid):
    cache = {}

    def get(s):
        if s not in cache:
            cache[s] = assemble(GreenKernel.from_order(3, s), small_grid)
        return cache[s]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
