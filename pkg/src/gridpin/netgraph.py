"""Directed communication graphs among DGs and the structural metrics
used by the pinning-selection algorithms and the spectral bounds.

Adjacency convention: ``adjacency[i, j] == 1`` means DG ``j`` sends
information to DG ``i``. Edges are always given as ``(from, to)`` pairs so
callers never have to transpose by hand. Node indices are 0-based in the
API; network files use 1-based DG numbers.

Unreachable distances are ``math.inf``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


class NetworkError(ValueError):
    """Invalid network definition."""


@dataclass(frozen=True, eq=False)
class CommNetwork:
    adjacency: np.ndarray
    node_labels: tuple[str, ...] = ()

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise NetworkError(f"adjacency must be square, got shape {A.shape}")
        if A.shape[0] < 1:
            raise NetworkError("network needs at least one node")
        if not np.isin(A, (0.0, 1.0)).all():
            raise NetworkError("adjacency entries must be 0 or 1")
        if np.any(np.diag(A) != 0):
            bad = [int(i) for i in np.flatnonzero(np.diag(A))]
            raise NetworkError(f"self-loops are not allowed (nodes {bad})")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        labels = tuple(self.node_labels) or tuple(f"DG{i + 1}" for i in range(A.shape[0]))
        if len(labels) != A.shape[0]:
            raise NetworkError(f"{len(labels)} labels for {A.shape[0]} nodes")
        object.__setattr__(self, "node_labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def is_undirected(self) -> bool:
        return bool(np.array_equal(self.adjacency, self.adjacency.T))

    def out_neighbors(self, i: int) -> list[int]:
        return [int(t) for t in np.flatnonzero(self.adjacency[:, i])]

    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=0).astype(int)

    def in_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    def edges(self) -> list[tuple[int, int]]:
        """All links as (from, to) pairs, sorted."""
        to, frm = np.nonzero(self.adjacency)
        return sorted(zip(frm.tolist(), to.tolist()))

    def index(self, node: int | str) -> int:
        """Resolve a label (``"DG3"``) or a 0-based index."""
        if isinstance(node, str):
            try:
                return self.node_labels.index(node)
            except ValueError:
                raise NetworkError(f"unknown node label {node!r}") from None
        i = int(node)
        if not 0 <= i < self.n_nodes:
            raise NetworkError(f"node index {i} out of range 0..{self.n_nodes - 1}")
        return i

    def relabel(self, perm: Sequence[int]) -> "CommNetwork":
        """Network with node ``i`` renamed to ``perm[i]``."""
        n = self.n_nodes
        P = np.zeros((n, n))
        P[list(perm), range(n)] = 1.0
        labels = [""] * n
        for old, new in enumerate(perm):
            labels[new] = self.node_labels[old]
        return CommNetwork(P @ self.adjacency @ P.T, tuple(labels))


@dataclass(frozen=True, eq=False)
class PinningConfig:
    """Pinning set with per-node gains.

    ``gains`` holds g_i for every node; only entries of pinned nodes
    matter. Use :meth:`uniform` for the common single-gain case.
    """

    pinned: tuple[int, ...]
    gains: np.ndarray

    def __post_init__(self):
        pinned = tuple(int(i) for i in self.pinned)
        if len(set(pinned)) != len(pinned):
            raise NetworkError(f"duplicate nodes in pinning set {pinned}")
        gains = np.array(self.gains, dtype=float)
        n = gains.shape[0]
        for i in pinned:
            if not 0 <= i < n:
                raise NetworkError(f"pinned node {i} out of range 0..{n - 1}")
            if not gains[i] > 0:
                raise NetworkError(f"pinning gain of node {i} must be positive, got {gains[i]}")
        if np.any(gains < 0):
            raise NetworkError("pinning gains must be nonnegative")
        gains.setflags(write=False)
        object.__setattr__(self, "pinned", pinned)
        object.__setattr__(self, "gains", gains)

    @classmethod
    def uniform(cls, pinned: Iterable[int], g: float, n: int) -> "PinningConfig":
        return cls(tuple(pinned), np.full(n, float(g)))

    @property
    def n_nodes(self) -> int:
        return self.gains.shape[0]

    @property
    def indicator(self) -> np.ndarray:
        zeta = np.zeros(self.n_nodes)
        zeta[list(self.pinned)] = 1.0
        return zeta

    @property
    def G(self) -> np.ndarray:
        return np.diag(self.gains)

    @property
    def Z(self) -> np.ndarray:
        return np.diag(self.indicator)

    @property
    def GZ(self) -> np.ndarray:
        return np.diag(self.gains * self.indicator)

    def pinned_gains(self) -> np.ndarray:
        return self.gains[list(self.pinned)]


@dataclass(frozen=True)
class LayerDecomposition:
    """BFS layers I_0..I_k grown from the pinning set along outgoing links.

    ``d_in[i]`` counts links into ``i`` from the previous layer and
    ``d_out[i]`` links from ``i`` into the next layer.
    """

    layers: tuple[tuple[int, ...], ...]
    d_in: dict[int, int]
    d_out: dict[int, int]
    unreachable: frozenset[int]
    n_nodes: int
    undirected: bool
    max_degree: int
    layer_of: dict[int, int] = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def pinned(self) -> tuple[int, ...]:
        return self.layers[0]

    def layer_d_in(self, j: int) -> list[int]:
        return [self.d_in[i] for i in self.layers[j]]

    def layer_d_out(self, j: int) -> list[int]:
        return [self.d_out[i] for i in self.layers[j]]

    def is_strict(self) -> bool:
        """Every node before the last layer feeds the next layer."""
        return not self.unreachable and all(
            self.d_out[i] >= 1 for layer in self.layers[:-1] for i in layer
        )


def build_network(edges: Iterable[tuple[int, int]], n: int, labels: Sequence[str] = ()) -> CommNetwork:
    if n < 1:
        raise NetworkError("n must be at least 1")
    A = np.zeros((n, n))
    for frm, to in edges:
        frm, to = int(frm), int(to)
        if not (0 <= frm < n and 0 <= to < n):
            raise NetworkError(f"edge ({frm}, {to}) has an endpoint outside 0..{n - 1}")
        if frm == to:
            raise NetworkError(f"self-loop on node {frm} is not allowed")
        A[to, frm] = 1.0
    return CommNetwork(A, tuple(labels))


def laplacian(net: CommNetwork) -> np.ndarray:
    A = net.adjacency
    return np.diag(A.sum(axis=1)) - A


def distances_from(net: CommNetwork, sources: Iterable[int]) -> list[float]:
    """Directed hop distance from the nearest source to every node."""
    dist = [INF] * net.n_nodes
    queue = deque()
    for s in sources:
        if dist[s] != 0:
            dist[s] = 0
            queue.append(s)
    while queue:
        u = queue.popleft()
        for v in net.out_neighbors(u):
            if dist[v] == INF:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def path_length(net: CommNetwork, i: int, j: int) -> float:
    return distances_from(net, [i])[j]


def path_metric(net: CommNetwork, P: Iterable[int], I: Iterable[int]) -> float:
    P = list(P)
    if not P:
        raise NetworkError("path metric needs a nonempty pinning set")
    targets = list(I)
    overlap = set(P) & set(targets)
    if overlap:
        raise NetworkError(f"pinning set and target set overlap on {sorted(overlap)}")
    dist = distances_from(net, P)
    return sum((dist[j] for j in targets), 0)


def deg_metric(net: CommNetwork, P: Iterable[int]) -> int:
    P = sorted(set(P))
    if not P:
        raise NetworkError("deg metric needs a nonempty pinning set")
    outside = [i for i in range(net.n_nodes) if i not in P]
    return int(net.adjacency[np.ix_(outside, P)].sum())


def layer_decompose(net: CommNetwork, P: Iterable[int]) -> LayerDecomposition:
    P = tuple(sorted(set(int(p) for p in P)))
    if not P:
        raise NetworkError("layer decomposition needs a nonempty pinning set")
    A = net.adjacency
    dist = distances_from(net, P)
    reachable = [d for d in dist if d != INF]
    k = int(max(reachable))
    layers = tuple(tuple(i for i in range(net.n_nodes) if dist[i] == j) for j in range(k + 1))
    layer_of = {i: int(dist[i]) for i in range(net.n_nodes) if dist[i] != INF}
    d_in, d_out = {}, {}
    for j, layer in enumerate(layers):
        prev = list(layers[j - 1]) if j > 0 else []
        nxt = list(layers[j + 1]) if j < k else []
        for i in layer:
            d_in[i] = int(A[i, prev].sum())
            d_out[i] = int(A[nxt, i].sum())
    unreachable = frozenset(i for i in range(net.n_nodes) if dist[i] == INF)
    return LayerDecomposition(
        layers=layers,
        d_in=d_in,
        d_out=d_out,
        unreachable=unreachable,
        n_nodes=net.n_nodes,
        undirected=net.is_undirected,
        max_degree=int(A.sum(axis=1).max()),
        layer_of=layer_of,
    )


# -- network files ---------------------------------------------------------

def parse_network(text: str, source: str = "<string>") -> CommNetwork:
    """Parse the plain-text network format.

    Lines::

        # comment
        n 5
        directed yes        # 'no' makes every edge two-way
        labels DG1 DG2 ...  # optional
        1 2                 # link from DG1 to DG2 (1-based)
    """
    n = None
    directed = None
    labels: list[str] = []
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0].lower()
        where = f"{source}:{lineno}"
        if key == "n":
            if len(parts) != 2 or not parts[1].isdigit():
                raise NetworkError(f"{where}: expected 'n <count>'")
            n = int(parts[1])
        elif key == "directed":
            if len(parts) != 2 or parts[1].lower() not in ("yes", "no", "1", "0", "true", "false"):
                raise NetworkError(f"{where}: expected 'directed yes|no'")
            directed = parts[1].lower() in ("yes", "1", "true")
        elif key == "labels":
            labels = parts[1:]
        else:
            if len(parts) != 2:
                raise NetworkError(f"{where}: expected an edge 'from to', got {line!r}")
            try:
                frm, to = int(parts[0]), int(parts[1])
            except ValueError:
                raise NetworkError(f"{where}: edge endpoints must be integers") from None
            edges.append((frm - 1, to - 1, where))
    if n is None:
        raise NetworkError(f"{source}: missing 'n <count>' line")
    if directed is None:
        raise NetworkError(f"{source}: missing 'directed yes|no' line")
    pairs = []
    for frm, to, where in edges:
        if not (0 <= frm < n and 0 <= to < n):
            raise NetworkError(f"{where}: edge ({frm + 1}, {to + 1}) outside 1..{n}")
        if frm == to:
            raise NetworkError(f"{where}: self-loop on DG{frm + 1}")
        pairs.append((frm, to))
        if not directed:
            pairs.append((to, frm))
    if labels and len(labels) != n:
        raise NetworkError(f"{source}: {len(labels)} labels for n = {n}")
    return build_network(pairs, n, labels)


def load_network(path: str | Path) -> CommNetwork:
    path = Path(path)
    return parse_network(path.read_text(), str(path))


def format_network(net: CommNetwork) -> str:
    lines = [f"n {net.n_nodes}", "directed yes", "labels " + " ".join(net.node_labels)]
    lines += [f"{frm + 1} {to + 1}" for frm, to in net.edges()]
    return "\n".join(lines) + "\n"
