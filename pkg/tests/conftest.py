"""Shared fixtures: generated instances and a one-time kernel warmup.

The compiled kernels are exercised once per session on a tiny instance so
that JIT compilation never counts against the timed tests.
"""

import numpy as np
import pytest

from ridepool import fleetmin, ils
from ridepool.io import GeneratorConfig, generate
from ridepool.params import Params


def make_instance(n_requests, n_vehicles, seed=0, **kw):
    cfg = GeneratorConfig(n_requests=n_requests, n_vehicles=n_vehicles, seed=seed, **kw)
    return generate(cfg)


def fast_params(**kw):
    """Small budgets suitable for tests; override freely."""
    base = dict(
        time_limit=0.0,
        max_rounds=3,
        ls_iterations=2,
        sub_iterations=60,
        part_nodes=60,
        workers=1,
        fleet_perturbations=100,
        fleet_perturb_moves=4,
    )
    base.update(kw)
    return Params(**base)


@pytest.fixture(scope="session")
def gen():
    return make_instance


@pytest.fixture(scope="session")
def small_instance():
    return make_instance(12, 3, seed=11)


@pytest.fixture(scope="session")
def medium_instance():
    return make_instance(60, 10, seed=5)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    inst = make_instance(8, 2, seed=7)
    ils.solve(inst, "hybrid", fast_params(max_rounds=2), np.random.default_rng(0))
    fleetmin.hierarchical_run(inst, fast_params(max_rounds=1), np.random.default_rng(1))
