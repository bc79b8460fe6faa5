"""Pinning-set selection.

``algorithm1`` grows the set greedily by the score
deg(P + {i}) - path(P + {i}, I - {i}); ``algorithm2`` picks the smallest
greedy prefix whose connectivity to the reference reaches mu*;
``brute_force_opt`` enumerates every m-subset and is the desk-scale oracle
for both.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .netgraph import INF, CommNetwork, PinningConfig, deg_metric, distances_from, path_metric
from .spectral import check_rate, phi

BRUTE_FORCE_LIMIT = 10**6
PHI_TIE_TOL = 1e-10


class SelectionError(ValueError):
    pass


class CoverageError(SelectionError):
    """The selected set leaves some nodes without a path from any pinned node."""

    def __init__(self, message: str, unreachable: set[int]):
        super().__init__(message)
        self.unreachable = unreachable


class UnattainableTargetError(SelectionError):
    def __init__(self, message: str, best_phi: float):
        super().__init__(message)
        self.best_phi = best_phi


@dataclass(frozen=True)
class RateTarget:
    lambda_star: float
    mu_star: float

    def __post_init__(self):
        if not (self.lambda_star > 0 and self.mu_star > 0):
            raise ValueError(f"rate target must be positive, got {self}")

    @classmethod
    def from_rate(cls, lambda_star: float, c_v: float, c_omega: float) -> "RateTarget":
        """mu* = lambda* / min(c_v, c_omega); the slower channel sets the requirement."""
        return cls(lambda_star, lambda_star / min(c_v, c_omega))


@dataclass
class SelectionResult:
    pinned: list[int]
    achieved_phi: float
    iterations: int
    score_trace: list[dict[int, float]] = field(default_factory=list)
    ties: list[list] = field(default_factory=list)
    method: str = ""

    def labels(self, net: CommNetwork) -> list[str]:
        return [net.node_labels[i] for i in self.pinned]

    def to_dict(self, net: CommNetwork | None = None) -> dict:
        def key(i):
            return net.node_labels[i] if net else i

        def score(v):
            return v if math.isfinite(v) else ("-inf" if v < 0 else "inf")

        return {
            "method": self.method,
            "pinned": [key(i) for i in self.pinned],
            "achieved_phi": self.achieved_phi,
            "iterations": self.iterations,
            "score_trace": [{key(i): score(v) for i, v in step.items()} for step in self.score_trace],
            "ties": [[key(i) if isinstance(i, int) else [key(j) for j in i] for i in t] for t in self.ties],
        }


def greedy_score(net: CommNetwork, P: list[int], i: int) -> float:
    cand = P + [i]
    rest = [j for j in range(net.n_nodes) if j not in cand]
    return deg_metric(net, cand) - path_metric(net, cand, rest)


def _uncovered(net: CommNetwork, P: list[int]) -> set[int]:
    dist = distances_from(net, P)
    return {j for j, d in enumerate(dist) if d == INF}


def greedy_order(net: CommNetwork, m: int) -> tuple[list[int], list[dict[int, float]], list[list[int]]]:
    """First ``m`` picks of the greedy loop with per-step scores and ties.

    Candidates that leave a node unreachable score -inf. When every
    candidate does, the step falls back to the fewest uncovered nodes and
    then the finite part of the score, so the loop still runs to ``m``.
    """
    n = net.n_nodes
    if not 1 <= m <= n:
        raise SelectionError(f"m must be in 1..{n}, got {m}")
    P: list[int] = []
    trace, ties = [], []
    while len(P) < m:
        candidates = [i for i in range(n) if i not in P]
        scores = {i: greedy_score(net, P, i) for i in candidates}
        best = max(scores.values())
        if best == -INF:
            keyed = {}
            for i in candidates:
                cand = P + [i]
                missing = _uncovered(net, cand)
                reach = [j for j in range(n) if j not in cand and j not in missing]
                keyed[i] = (-len(missing), deg_metric(net, cand) - path_metric(net, cand, reach))
            top = max(keyed.values())
            tied = [i for i in candidates if keyed[i] == top]
        else:
            tied = [i for i in candidates if scores[i] == best]
        P.append(min(tied))
        trace.append(scores)
        ties.append(tied)
    return P, trace, ties


def algorithm1(net: CommNetwork, m: int, g: float = 1.0) -> SelectionResult:
    """Greedy fixed-size selection; ``g`` only affects the reported phi."""
    if m > net.n_nodes:
        raise SelectionError(f"cannot pin {m} of {net.n_nodes} nodes")
    P, trace, ties = greedy_order(net, m)
    missing = _uncovered(net, P)
    if missing:
        names = ", ".join(net.node_labels[j] for j in sorted(missing))
        raise CoverageError(f"network cannot be covered by {m} pinned nodes; unreachable: {names}", missing)
    pin = PinningConfig.uniform(P, g, net.n_nodes)
    return SelectionResult(P, phi(net, pin), len(P), trace, ties, method="algorithm1")


def initial_size(net: CommNetwork, mu_star: float) -> int:
    """Smallest m >= 1 whose top-m out-degrees sum to at least (N - 1) mu*."""
    degrees = sorted(net.out_degree().tolist(), reverse=True)
    need = (net.n_nodes - 1) * mu_star
    total = 0
    for m, d in enumerate(degrees, start=1):
        total += d
        if total >= need:
            return m
    return net.n_nodes


def algorithm2(net: CommNetwork, g: float, target: RateTarget) -> SelectionResult:
    if not g > 0:
        raise SelectionError("pinning gain must be positive")
    n = net.n_nodes
    m = initial_size(net, target.mu_star)
    order, trace, ties = greedy_order(net, n)
    best_phi = -INF
    while m <= n:
        pin = PinningConfig.uniform(order[:m], g, n)
        value = phi(net, pin)
        best_phi = max(best_phi, value)
        if check_rate(net, pin, target.mu_star):
            return SelectionResult(order[:m], value, m, trace[:m], ties[:m], method="algorithm2")
        m += 1
    raise UnattainableTargetError(
        f"target rate unattainable with gain g={g}: need phi >= {target.mu_star:.6g}, "
        f"best achieved {best_phi:.6g}",
        best_phi,
    )


def brute_force_opt(net: CommNetwork, m: int, g: float) -> SelectionResult:
    n = net.n_nodes
    if not 1 <= m <= n:
        raise SelectionError(f"m must be in 1..{n}, got {m}")
    total = math.comb(n, m)
    if total > BRUTE_FORCE_LIMIT:
        raise SelectionError(f"C({n}, {m}) = {total} subsets exceeds {BRUTE_FORCE_LIMIT}; use algorithm1")
    values = {}
    for subset in itertools.combinations(range(n), m):
        values[subset] = phi(net, PinningConfig.uniform(subset, g, n))
    best = max(values.values())
    co_max = [list(s) for s, v in values.items() if v >= best - PHI_TIE_TOL]
    return SelectionResult(co_max[0], best, total, ties=[co_max], method="exhaustive")
