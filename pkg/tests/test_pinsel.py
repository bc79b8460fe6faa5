import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridpin.netgraph import PinningConfig, build_network, laplacian
from gridpin.pinsel import (
    CoverageError,
    RateTarget,
    SelectionError,
    UnattainableTargetError,
    algorithm1,
    algorithm2,
    brute_force_opt,
    greedy_order,
    initial_size,
)
from gridpin.spectral import check_rate, phi

from conftest import complete, random_connected


def labels(net, result):
    return set(result.labels(net))


def test_rate_target():
    t = RateTarget.from_rate(10, 400, 500)
    assert t.mu_star == pytest.approx(0.025)
    with pytest.raises(ValueError):
        RateTarget(0, 1)


def test_fourbus_single_pin(fourbus):
    res = algorithm1(fourbus, 1, 0.2)
    assert res.labels(fourbus) == ["DG2"]
    # DG2 and DG3 tie on the greedy score; the lowest index wins and the tie is reported
    assert res.ties[0] == [1, 2]
    assert brute_force_opt(fourbus, 1, 0.2).labels(fourbus) == ["DG2"]


def test_fivebus_two_pins(fivebus):
    res = algorithm1(fivebus, 2, 0.2)
    assert labels(fivebus, res) in ({"DG2", "DG4"}, {"DG1", "DG3"})
    assert "DG5" not in labels(fivebus, res)


def test_algorithm1_records_scores(fivebus):
    res = algorithm1(fivebus, 2, 0.2)
    assert res.score_trace[0][4] == -math.inf
    assert res.achieved_phi == pytest.approx(phi(fivebus, PinningConfig.uniform(res.pinned, 0.2, 5)))
    d = res.to_dict(fivebus)
    assert d["score_trace"][0]["DG5"] == "-inf"


def test_algorithm1_m_equals_n(fivebus, fourbus):
    for net in (fivebus, fourbus):
        res = algorithm1(net, net.n_nodes)
        assert sorted(res.pinned) == list(range(net.n_nodes))


def test_algorithm1_rejects_bad_m(fivebus):
    with pytest.raises(SelectionError):
        algorithm1(fivebus, 6)
    with pytest.raises(SelectionError):
        algorithm1(fivebus, 0)


def test_uncoverable_network_names_nodes():
    # two components: one pin cannot reach the other side
    net = build_network([(0, 1), (1, 0), (2, 3), (3, 2)], 4)
    with pytest.raises(CoverageError, match="DG3, DG4|DG1, DG2") as info:
        algorithm1(net, 1)
    assert len(info.value.unreachable) == 2
    assert len(algorithm1(net, 2).pinned) == 2


def test_algorithm2_case_targets(fivebus):
    r10 = algorithm2(fivebus, 0.2, RateTarget.from_rate(10, 400, 400))
    assert labels(fivebus, r10) in ({"DG2"}, {"DG3"})
    r20 = algorithm2(fivebus, 0.2, RateTarget.from_rate(20, 400, 400))
    assert labels(fivebus, r20) in ({"DG1", "DG3"}, {"DG2", "DG4"})
    assert r20.iterations == 2


def test_algorithm2_singleton():
    net = build_network([], 1)
    res = algorithm2(net, 2.0, RateTarget(1.0, 1.5))
    assert res.pinned == [0]


def test_algorithm2_unattainable(fivebus):
    with pytest.raises(UnattainableTargetError) as info:
        algorithm2(fivebus, 0.2, RateTarget(100, 0.25))
    assert info.value.best_phi == pytest.approx(0.2)


def test_initial_size_floor(fivebus):
    assert initial_size(fivebus, 1e-9) == 1
    # top out-degrees 2 + 2 + 2 + 2: need (N - 1) mu* = 4 * 1.25 = 5 -> three nodes
    assert initial_size(fivebus, 1.25) == 3


def test_brute_force_guard():
    with pytest.raises(SelectionError, match="algorithm1"):
        brute_force_opt(complete(30), 15, 1.0)


def test_brute_force_all_nodes():
    net = complete(4)
    res = brute_force_opt(net, 4, 0.5)
    assert res.pinned == [0, 1, 2, 3]
    assert res.achieved_phi == pytest.approx(np.linalg.eigvalsh(laplacian(net) + 0.5 * np.eye(4))[0])


def test_brute_force_matches_independent_enumeration():
    rng = np.random.default_rng(42)
    net = random_connected(rng, 6)
    res = brute_force_opt(net, 2, 1.0)
    L = laplacian(net)
    best = -1.0
    for i, j in itertools.combinations(range(6), 2):
        M = L.copy()
        M[i, i] += 1.0
        M[j, j] += 1.0
        best = max(best, np.linalg.eigvalsh(M)[0])
    assert res.achieved_phi == pytest.approx(best, abs=1e-10)
    assert res.pinned in res.ties[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_greedy_properties(seed, m):
    rng = np.random.default_rng(seed)
    net = random_connected(rng, int(rng.integers(m + 1, 9)))
    a = algorithm1(net, m)
    b = algorithm1(net, m)
    assert a.pinned == b.pinned
    if m < net.n_nodes:
        assert algorithm1(net, m + 1).pinned[:m] == a.pinned
    assert brute_force_opt(net, m, 1.0).achieved_phi >= a.achieved_phi - 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.2, 1.0, 5.0]), st.floats(0.005, 0.5))
def test_algorithm2_minimal_within_greedy_family(seed, g, mu):
    rng = np.random.default_rng(seed)
    net = random_connected(rng, int(rng.integers(3, 9)))
    try:
        res = algorithm2(net, g, RateTarget(mu * 400, mu))
    except UnattainableTargetError:
        return
    n = net.n_nodes
    assert check_rate(net, PinningConfig.uniform(res.pinned, g, n), mu)
    m = len(res.pinned)
    if m > initial_size(net, mu):
        assert not check_rate(net, PinningConfig.uniform(res.pinned[:-1], g, n), mu)
    assert greedy_order(net, m)[0] == res.pinned


def test_sinks_never_pinned_while_alternatives_exist(fivebus, fourbus):
    for net in (fivebus, fourbus):
        sinks = {i for i, d in enumerate(net.out_degree()) if d == 0}
        for m in range(1, net.n_nodes - len(sinks) + 1):
            assert not sinks & set(algorithm1(net, m).pinned)
