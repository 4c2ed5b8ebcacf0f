"""Natural visibility graphs, degree statistics and reference random graphs.

Nodes are 0-based window offsets (oldest observation is node 0).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, InputError


@dataclass(frozen=True, eq=False)
class VisibilityGraph:
    adjacency: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got shape {a.shape}")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Edge list; undirected graphs list each edge once with ``src < dst``."""
        a = self.adjacency if self.directed else np.triu(self.adjacency)
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(a))]

    def symmetrized(self) -> "VisibilityGraph":
        if not self.directed:
            return self
        a = self.adjacency
        return VisibilityGraph(np.maximum(a, a.T), directed=False)

    def __eq__(self, other):
        if not isinstance(other, VisibilityGraph):
            return NotImplemented
        return self.directed == other.directed and np.array_equal(self.adjacency, other.adjacency)

    __hash__ = None


@dataclass(frozen=True)
class DegreeStats:
    degrees: np.ndarray
    mean: float
    variance: float
    histogram: dict[int, int]


def is_visible(values, i: int, j: int) -> bool:
    """Pairwise line-of-sight check: every point strictly between ``i`` and
    ``j`` must lie strictly below the chord joining them.

    O(j - i); used as the reference for :func:`build_vg`.
    """
    if i >= j:
        raise InputError(f"need i < j, got i={i}, j={j}")
    s = values
    si, sj = float(s[i]), float(s[j])
    span = j - i
    for k in range(i + 1, j):
        # cross-multiplied chord test, exact on integer-valued data
        if (float(s[k]) - si) * span >= (sj - si) * (k - i):
            return False
    return True


def _check_values(values) -> np.ndarray:
    s = np.asarray(values, dtype=float)
    if s.ndim != 1:
        raise InputError("visibility graphs need a 1-D series")
    if len(s) < 2:
        raise DimensionError(f"need at least 2 values, got {len(s)}")
    if not np.all(np.isfinite(s)):
        raise DomainError("series contains non-finite values")
    return s


def build_vg(values, directed: bool = False) -> VisibilityGraph:
    """Natural visibility graph via the per-source maximum-slope scan.

    From each source ``i`` the targets ``j > i`` are swept left to right; ``j``
    is visible iff its slope from ``i`` beats every slope seen so far.
    Directed graphs keep only the left-to-right arcs ``i -> j``.
    """
    s = _check_values(values)
    n = len(s)
    adj = np.zeros((n, n), dtype=np.uint8)
    for i in range(n - 1):
        slopes = (s[i + 1 :] - s[i]) / np.arange(1, n - i)
        best_before = np.empty_like(slopes)
        best_before[0] = -np.inf
        np.maximum.accumulate(slopes[:-1], out=best_before[1:])
        adj[i, i + 1 :] = slopes > best_before
    if not directed:
        adj = adj | adj.T
    return VisibilityGraph(adj, directed=directed)


def build_vg_bruteforce(values, directed: bool = False) -> VisibilityGraph:
    """O(n^3) construction straight from :func:`is_visible`."""
    s = _check_values(values)
    n = len(s)
    adj = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for j in range(i + 1, n):
            if is_visible(s, i, j):
                adj[i, j] = 1
                if not directed:
                    adj[j, i] = 1
    return VisibilityGraph(adj, directed=directed)


def degree_stats(g: VisibilityGraph) -> DegreeStats:
    a = g.adjacency.astype(np.int64)
    degrees = a.sum(axis=1)
    if g.directed:
        degrees = degrees + a.sum(axis=0)
    hist = Counter(int(k) for k in degrees)
    return DegreeStats(
        degrees=degrees,
        mean=float(degrees.mean()),
        variance=float(degrees.var()),
        histogram=dict(sorted(hist.items())),
    )


def is_connected(g: VisibilityGraph) -> bool:
    a = g.symmetrized().adjacency
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(a[u]):
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return bool(seen.all())


# -- reference generators ---------------------------------------------------

def gen_regular(n: int, k: int) -> VisibilityGraph:
    """Circulant graph: node ``u`` links to its ``k/2`` nearest neighbours on each side."""
    if not 0 <= k < n or (n * k) % 2 or k % 2:
        raise InputError(f"no circulant {k}-regular graph on {n} nodes")
    adj = np.zeros((n, n), dtype=np.uint8)
    idx = np.arange(n)
    for off in range(1, k // 2 + 1):
        adj[idx, (idx + off) % n] = 1
        adj[(idx + off) % n, idx] = 1
    return VisibilityGraph(adj)


def gen_random(n: int, p: float, seed: int) -> VisibilityGraph:
    """Erdos-Renyi G(n, p)."""
    if n < 1 or not 0.0 <= p <= 1.0:
        raise InputError(f"need n >= 1 and p in [0, 1], got n={n}, p={p}")
    rng = np.random.default_rng(np.uint64(seed))
    upper = np.triu(rng.random((n, n)) < p, k=1).astype(np.uint8)
    return VisibilityGraph(upper | upper.T)


def gen_small_world(n: int, k: int, p_rewire: float, seed: int) -> VisibilityGraph:
    """Watts-Strogatz rewiring of a ring lattice of even degree ``k``.

    Each lattice edge ``(u, u+off)`` is moved, with probability ``p_rewire``,
    to ``(u, w)`` for a uniformly drawn ``w`` that is neither ``u`` nor an
    existing neighbour. When no such ``w`` exists the edge stays put.
    """
    if k % 2 or not 0 <= k < n:
        raise InputError(f"small-world graph needs even k < n, got n={n}, k={k}")
    if not 0.0 <= p_rewire <= 1.0:
        raise InputError(f"rewiring probability must lie in [0, 1], got {p_rewire}")
    rng = np.random.default_rng(np.uint64(seed))
    adj = gen_regular(n, k).adjacency.copy()
    for off in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + off) % n
            if not adj[u, v] or rng.random() >= p_rewire:
                continue
            candidates = np.flatnonzero(adj[u] == 0)
            candidates = candidates[candidates != u]
            if candidates.size == 0:
                continue
            w = int(candidates[rng.integers(candidates.size)])
            adj[u, v] = adj[v, u] = 0
            adj[u, w] = adj[w, u] = 1
    return VisibilityGraph(adj)


# -- export -----------------------------------------------------------------

def write_edge_list(g: VisibilityGraph, path) -> None:
    lines = ["src,dst"] + [f"{i},{j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix(g: VisibilityGraph, path) -> None:
    rows = (",".join(str(int(v)) for v in row) for row in g.adjacency)
    Path(path).write_text("\n".join(rows) + "\n")
