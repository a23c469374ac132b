import numpy as np
import pytest

from tierplan.cost import AppProfile, Weights
from tierplan.topology import build_topology

# Default constants used across the suite (sizes in bits, cycles, seconds):
# 2 MB input, 0.25 cycles/bit (4 Mcycles per task), 15 MB result, 0.15 GB
# chunks, compute caps 0.9/2.0 Gcycles/s, storage caps 0.75/1.5 GB.
GB = 8e9


def default_app(chunk_count=20, tau_p=0.5):
    return AppProfile(
        alpha=1.6e7,
        beta=0.25,
        gamma=1.2e8,
        chunk_bits=0.15 * GB,
        remote_bits=0.15 * GB,
        chunk_count=chunk_count,
        tau=300.0,
        tau_p=tau_p,
    )


def oracle_app(chunk_count=4, chunk_bits=2e8):
    """Small-chunk profile for oracle-scale instances: storage breaks even
    around four tasks per chunk, so optima sit strictly inside the grid."""
    return AppProfile(
        alpha=1.6e7,
        beta=0.25,
        gamma=1.2e8,
        chunk_bits=chunk_bits,
        remote_bits=chunk_bits,
        chunk_count=chunk_count,
        tau=300.0,
        tau_p=0.5,
    )


def default_weights(**overrides):
    base = dict(
        compute_w=1.0,
        storage_w=0.5e-7,
        comm_w=1.0,
        reconfig_weight=12.0,
        reconfig_cost=5.0,
        remote_budget=None,
    )
    base.update(overrides)
    return Weights(**base)


def four_bs_topology(**overrides):
    params = dict(
        bs_compute=0.9e9,
        nap_compute=2.0e9,
        bs_storage=0.75 * GB,
        nap_storage=1.5 * GB,
    )
    params.update(overrides)
    return build_topology(4, [[0, 1], [2, 3]], **params)


def tiny_topology(**overrides):
    params = dict(
        bs_compute=0.9e9,
        nap_compute=2.0e9,
        bs_storage=0.75 * GB,
        nap_storage=1.5 * GB,
    )
    params.update(overrides)
    return build_topology(2, [[0, 1]], **params)


@pytest.fixture
def app():
    return default_app()


@pytest.fixture
def weights():
    return default_weights()


@pytest.fixture
def topo4():
    return four_bs_topology()


@pytest.fixture
def topo2():
    return tiny_topology()


@pytest.fixture
def rng():
    return np.random.default_rng(7)
