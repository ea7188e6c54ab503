import random
from pathlib import Path

import pytest

from mcsp.generator import GeneratorConfig, Topology, generate_instance
from mcsp.instance import Instance, build_request_index, load_instance

DATA = Path(__file__).parent / "data"

TWO_CELL = Topology(num_servers=2, edges=((1, 2),), triples=())


@pytest.fixture(scope="session")
def tiny1() -> Instance:
    """Canonical 1-server, 1-content, 2-slot fixture with one SCR; optimum 3."""
    return load_instance(DATA / "tiny1.json")


@pytest.fixture(scope="session")
def tiny1_idx(tiny1):
    return build_request_index(tiny1)


def random_tiny_config(rng: random.Random, horizon_max: int = 4) -> GeneratorConfig:
    """Small two-cell instances used by the oracle suites."""
    num_requests = rng.randint(0, 10)
    return GeneratorConfig(
        cells="custom",
        custom_topology=TWO_CELL,
        num_contents=rng.randint(1, 3),
        num_requests=num_requests,
        horizon=rng.randint(1, horizon_max),
        rho_m=rng.choice([0.0, 0.3, 0.5]) if num_requests else 0.0,
        rho_tt=0.0,
        rho_b=rng.choice([0.3, 0.6, 1.0]),
        cache_scale=rng.choice([0.5, 1.0]),
        size_range=(1, 4),
        window_max=rng.randint(0, 2),
        seed=rng.randrange(2**63),
    )


def random_tiny_instance(rng: random.Random, horizon_max: int = 4) -> Instance:
    return generate_instance(random_tiny_config(rng, horizon_max))
