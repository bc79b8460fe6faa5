"""Algebraic connectivity to the reference, phi = lambda_min(L + GZ), and
closed-form bounds on it built from the BFS layers of the pinning set.

Two readings of the bound formulas are kept side by side. The defaults
("two_block" for the upper bound, "layer_chain" for the lower bound) are
the ones that hold on the random-graph validation suite; the others are
selectable for comparison and are recorded in every summary through
``interpretation_tag``.

Upper bound (all readings share the shape)::

    beta  = (E + (N - m)(g + D)) / (2 (N - m))
    phi_u = beta - sqrt(beta**2 - X / (N - m))

with E the number of links from the pinning set into layer 1.

    two_block   D = E / m,                X = g * E
    out_degree  D = min d_in over I_1,    X = sum of squared pinned out-degrees
    literal     D = min d_in over I_0,    X = sum of squared pinned in-degrees

"two_block" is the smaller eigenvalue of L + gZ compressed onto
span{1_P, 1_rest}, so it is an upper bound by Courant-Fischer.

Lower bound: smallest positive root of the chain

    alpha_k(mu) = a_k - mu
    alpha_i(mu) = a_i - mu - c_i / alpha_{i+1}(mu)

    layer_chain a_0 = g + max d_out(I_0),
                a_i = min d_in(I_i) + max d_out(I_i),
                c_i = max d_out(I_i) * min d_in(I_{i+1})
    literal     a_i = min d_out(I_{i-1}) + min d_in(I_i)  (min d_out(I_{-1}) = g),
                a_k = min d_in(I_k),  c_i = max d_in(I_i) ** 2

"layer_chain" is the Collatz-Wielandt bound min_i (Mx)_i / x_i for a test
vector constant on layers, after intra-layer links are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netgraph import CommNetwork, LayerDecomposition, PinningConfig, laplacian, layer_decompose

UPPER_READINGS = ("two_block", "out_degree", "literal")
LOWER_READINGS = ("layer_chain", "literal")
DEFAULT_UPPER = "two_block"
DEFAULT_LOWER = "layer_chain"

EIG_TOL = 1e-10
ROOT_TOL = 1e-9
SANDWICH_SLACK = 1e-7


class EigenSolverError(RuntimeError):
    pass


class BoundNotApplicable(ValueError):
    """The bound is undefined for this input (directed net, full pinning, ...)."""


class BoundError(ArithmeticError):
    """The bound formula broke down (negative radicand, no root on the scan)."""


@dataclass(frozen=True)
class SpectralSummary:
    phi: float
    phi_lower: float | None
    phi_upper: float | None
    beta: float | None
    interpretation_tag: str
    notes: tuple[str, ...] = ()

    def sandwiched(self, slack: float = SANDWICH_SLACK) -> bool:
        lo = self.phi_lower if self.phi_lower is not None else -math.inf
        hi = self.phi_upper if self.phi_upper is not None else math.inf
        return lo - slack <= self.phi <= hi + slack


def closed_loop_matrix(net: CommNetwork, pin: PinningConfig) -> np.ndarray:
    if pin.n_nodes != net.n_nodes:
        raise ValueError(f"pinning config has {pin.n_nodes} nodes, network has {net.n_nodes}")
    return laplacian(net) + pin.GZ


def min_real_eigenvalue(M: np.ndarray) -> float:
    """Smallest eigenvalue (symmetric) or smallest real part (general)."""
    try:
        if np.array_equal(M, M.T):
            return float(np.linalg.eigvalsh(M)[0])
        return float(np.linalg.eigvals(M).real.min())
    except np.linalg.LinAlgError as exc:
        with np.printoptions(precision=6, suppress=True):
            raise EigenSolverError(f"eigensolver failed ({exc}) on matrix\n{M}") from exc


def phi(net: CommNetwork, pin: PinningConfig) -> float:
    if not pin.pinned:
        raise ValueError("phi needs a nonempty pinning set")
    return min_real_eigenvalue(closed_loop_matrix(net, pin))


def check_rate(net: CommNetwork, pin: PinningConfig, mu_star: float) -> bool:
    """True when L + GZ - mu* I is positive semidefinite (min real part for digraphs)."""
    if mu_star < 0:
        raise ValueError("mu_star must be nonnegative")
    return phi(net, pin) >= mu_star - EIG_TOL


# -- upper bound -----------------------------------------------------------

def upper_bound_terms(decomp: LayerDecomposition, g: float, reading: str = DEFAULT_UPPER) -> tuple[float, float]:
    """Return ``(beta, phi_u)`` for the chosen reading."""
    if reading not in UPPER_READINGS:
        raise ValueError(f"unknown upper-bound reading {reading!r}; choose from {UPPER_READINGS}")
    if not decomp.undirected:
        raise BoundNotApplicable("bounds hold for undirected networks only")
    N = decomp.n_nodes
    P = decomp.pinned
    m = len(P)
    if m >= N:
        raise BoundNotApplicable("every node is pinned (m = N)")
    rest = N - m
    E = sum(decomp.d_out[i] for i in P)
    if reading == "two_block":
        D = E / m
        X = g * E
    elif reading == "out_degree":
        layer1 = decomp.layer_d_in(1) if decomp.depth >= 1 else []
        D = min(layer1) if layer1 else 0
        X = sum(decomp.d_out[i] ** 2 for i in P)
    else:
        D = min(decomp.d_in[i] for i in P)
        X = sum(decomp.d_in[i] ** 2 for i in P)
    beta = (E + rest * (g + D)) / (2 * rest)
    disc = beta**2 - X / rest
    if disc < 0:
        raise BoundError(
            f"negative radicand in upper bound ({reading}): beta={beta:.6g}, "
            f"X={X:.6g}, N={N}, m={m}, E={E}, g={g}"
        )
    # beta - sqrt(disc), written to avoid cancellation
    value = (X / rest) / (beta + math.sqrt(disc)) if X else 0.0
    return beta, value


def phi_upper(decomp: LayerDecomposition, g: float, n: int | None = None, reading: str = DEFAULT_UPPER) -> float:
    if n is not None and n != decomp.n_nodes:
        raise ValueError(f"n = {n} does not match decomposition size {decomp.n_nodes}")
    return upper_bound_terms(decomp, g, reading)[1]


# -- lower bound -----------------------------------------------------------

def lower_chain(decomp: LayerDecomposition, g: float, reading: str = DEFAULT_LOWER) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal terms ``a`` (length k+1) and couplings ``c`` (length k)."""
    if reading not in LOWER_READINGS:
        raise ValueError(f"unknown lower-bound reading {reading!r}; choose from {LOWER_READINGS}")
    k = decomp.depth
    din_min = [min(decomp.layer_d_in(j)) for j in range(k + 1)]
    din_max = [max(decomp.layer_d_in(j)) for j in range(k + 1)]
    dout_min = [min(decomp.layer_d_out(j)) for j in range(k + 1)]
    dout_max = [max(decomp.layer_d_out(j)) for j in range(k + 1)]
    if reading == "layer_chain":
        w_in = [g] + din_min[1:]
        a = np.array([w_in[j] + dout_max[j] for j in range(k + 1)], dtype=float)
        c = np.array([dout_max[j] * w_in[j + 1] for j in range(k)], dtype=float)
    else:
        prev_out = [g] + dout_min[:-1]
        a = np.array([prev_out[j] + din_min[j] for j in range(k)] + [din_min[k]], dtype=float)
        c = np.array([din_max[j] ** 2 for j in range(k)], dtype=float)
    return a, c


def chain_values(a: np.ndarray, c: np.ndarray, mu) -> np.ndarray:
    """alpha_0..alpha_k at ``mu`` (scalar or 1-D array); rows index the chain."""
    mu = np.asarray(mu, dtype=float)
    k = len(a) - 1
    out = np.empty((k + 1,) + mu.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[k] = a[k] - mu
        for i in range(k - 1, -1, -1):
            out[i] = a[i] - mu - c[i] / out[i + 1]
    return out


def _negative_pivots(a: np.ndarray, c: np.ndarray, mu: float) -> int:
    """Number of chain eigenvalues below ``mu`` (Sylvester inertia of the alphas)."""
    tiny = 1e-300
    alpha = a[-1] - mu
    count = int(alpha < 0)
    for i in range(len(a) - 2, -1, -1):
        if alpha == 0:
            alpha = tiny
        alpha = a[i] - mu - c[i] / alpha
        count += alpha < 0
    return count


def smallest_chain_root(a: np.ndarray, c: np.ndarray, scan_max: float, n_steps: int = 1000) -> float:
    """Smallest mu in [0, scan_max] at which the alpha chain vanishes.

    A sign change of a single alpha_i can come from a pole (a zero of
    alpha_{i+1}) instead of a root, so brackets are located with the
    negative-pivot count, which is monotone in mu and ignores poles. By
    interlacing, the smallest zero over alpha_0..alpha_{k-1} is the
    smallest eigenvalue of the whole chain.
    """
    scale = float(np.max(np.abs(a))) + float(np.max(np.abs(c), initial=0.0)) + 1.0
    if np.min(np.abs(chain_values(a, c, 0.0))) <= 1e-12 * scale:
        return 0.0
    base = _negative_pivots(a, c, 0.0)
    grid = np.linspace(0.0, scan_max, n_steps + 1)
    lo = 0.0
    for hi in grid[1:]:
        if _negative_pivots(a, c, hi) > base:
            break
        lo = hi
    else:
        raise BoundError(f"no root of the lower-bound chain on (0, {scan_max:.6g}]; a={a}, c={c}")
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if _negative_pivots(a, c, mid) > base:
            hi = mid
        else:
            lo = mid
    return float(0.5 * (lo + hi))


def phi_lower(decomp: LayerDecomposition, g: float, reading: str = DEFAULT_LOWER) -> float:
    if not decomp.undirected:
        raise BoundNotApplicable("bounds hold for undirected networks only")
    if decomp.unreachable:
        raise BoundNotApplicable(f"nodes {sorted(decomp.unreachable)} are unreachable from the pinning set")
    if decomp.depth == 0:
        raise BoundNotApplicable("every node is pinned (m = N)")
    a, c = lower_chain(decomp, g, reading)
    scan_max = decomp.max_degree + g
    return smallest_chain_root(a, c, scan_max)


# -- summaries -------------------------------------------------------------

def summarize(
    net: CommNetwork,
    pin: PinningConfig,
    upper_reading: str = DEFAULT_UPPER,
    lower_reading: str = DEFAULT_LOWER,
) -> SpectralSummary:
    """phi plus both bounds; bounds that do not apply are ``None`` with a note.

    Heterogeneous gains use the mean pinned gain for the upper bound and
    the smallest pinned gain for the lower bound.
    """
    value = phi(net, pin)
    decomp = layer_decompose(net, pin.pinned)
    gains = pin.pinned_gains()
    notes = []
    lower = upper = beta = None
    try:
        beta, upper = upper_bound_terms(decomp, float(gains.mean()), upper_reading)
    except (BoundNotApplicable, BoundError) as exc:
        notes.append(f"upper: {exc}")
    try:
        lower = phi_lower(decomp, float(gains.min()), lower_reading)
    except (BoundNotApplicable, BoundError) as exc:
        notes.append(f"lower: {exc}")
    return SpectralSummary(
        phi=value,
        phi_lower=lower,
        phi_upper=upper,
        beta=beta,
        interpretation_tag=f"upper={upper_reading};lower={lower_reading}",
        notes=tuple(notes),
    )


def validate_readings(n_graphs: int = 200, seed: int = 0) -> dict[str, int]:
    """Count sandwich violations of every reading on random connected graphs.

    Graphs are G(N, p) with N in [4, 12], m in [1, 3] and g in {0.2, 1, 10};
    a reading whose formula breaks down on a graph counts as a violation.
    """
    rng = np.random.default_rng(seed)
    counts = {f"upper:{r}": 0 for r in UPPER_READINGS} | {f"lower:{r}": 0 for r in LOWER_READINGS}
    for net, pin in random_connected_cases(n_graphs, rng):
        g = float(pin.pinned_gains()[0])
        value = phi(net, pin)
        decomp = layer_decompose(net, pin.pinned)
        for r in UPPER_READINGS:
            try:
                ok = value <= phi_upper(decomp, g, reading=r) + SANDWICH_SLACK
            except BoundError:
                ok = False
            counts[f"upper:{r}"] += not ok
        for r in LOWER_READINGS:
            try:
                ok = phi_lower(decomp, g, reading=r) - SANDWICH_SLACK <= value
            except BoundError:
                ok = False
            counts[f"lower:{r}"] += not ok
    return counts


def random_connected_cases(count: int, rng: np.random.Generator, n_range=(4, 12), m_range=(1, 3), gains=(0.2, 1.0, 10.0)):
    """Yield ``count`` (network, pinning) pairs on connected undirected graphs."""
    produced = 0
    while produced < count:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = int(rng.integers(m_range[0], min(m_range[1], n - 1) + 1))
        p = float(rng.uniform(0.2, 0.7))
        upper = np.triu(rng.random((n, n)) < p, k=1).astype(float)
        A = upper + upper.T
        if not _connected(A):
            continue
        net = CommNetwork(A)
        pinned = sorted(rng.choice(n, size=m, replace=False).tolist())
        g = float(rng.choice(gains))
        produced += 1
        yield net, PinningConfig.uniform(pinned, g, n)


def _connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(A[:, u]):
            if int(v) not in seen:
                seen.add(int(v))
                stack.append(int(v))
    return len(seen) == n
