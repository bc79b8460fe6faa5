from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from gridpin.netgraph import build_network, load_network

DATA = Path(str(resources.files("gridpin") / "data"))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def fivebus():
    return load_network(DATA / "fivebus.net")


@pytest.fixture(scope="session")
def fourbus():
    return load_network(DATA / "fourbus.net")


def undirected(n, pairs):
    return build_network([e for a, b in pairs for e in ((a, b), (b, a))], n)


def complete(n):
    return undirected(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star(n):
    return undirected(n, [(0, j) for j in range(1, n)])


def random_connected(rng: np.random.Generator, n: int, p: float = 0.4):
    """Random undirected G(n, p) with a random spanning tree added."""
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                pairs.add((i, j))
    return undirected(n, sorted(pairs))
