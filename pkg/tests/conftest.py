"""Session-scoped fixtures for the reference construction.

Building the full reference ladder at n = 128 takes about a minute; every
test module that needs built levels shares these instead of rebuilding.
"""

import pytest

from mikadolab.branches import ComponentStore, build_branches, build_residual
from mikadolab.data_builder import build_all
from mikadolab.geometry import place_pipes
from mikadolab.params import ParameterSet
from mikadolab.spectral import Grid


@pytest.fixture(scope="session")
def reference_grid():
    return Grid(128)


@pytest.fixture(scope="session")
def reference_family():
    return place_pipes()


@pytest.fixture(scope="session")
def reference_params():
    return ParameterSet()


@pytest.fixture(scope="session")
def reference_levels(reference_params, reference_family, reference_grid):
    return build_all(reference_params, reference_family, reference_grid)


@pytest.fixture(scope="session")
def reference_store(reference_params, reference_family, reference_levels):
    return ComponentStore(reference_params, reference_family, reference_levels)


@pytest.fixture(scope="session")
def branch_pair(reference_params, reference_family, reference_levels, reference_store):
    b1 = build_branches(reference_params, reference_family, reference_levels, 1,
                        store=reference_store)
    b2 = build_branches(reference_params, reference_family, reference_levels, 2,
                        store=reference_store)
    return b1, b2


@pytest.fixture(scope="session")
def residual_pair(branch_pair):
    return build_residual(branch_pair[0]), build_residual(branch_pair[1])
