"""Areal adjacency graphs, orderings and DAGAR directed neighbourhoods.

Regions are 0-indexed in memory. The edge-list text format is 1-indexed::

    # comment
    # label 1 Aotizhongxin
    1 2
    2 3

Lines of the form ``# label <i> <name>`` attach optional region names; any
other ``#`` line is ignored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IsolatedRegion, ParseError

__all__ = [
    "SpatialGraph",
    "Ordering",
    "DirectedNeighborhoods",
    "grid_graph",
    "path_graph",
    "adjacency_matrix",
    "row_stochastic",
    "directed_neighbors",
    "random_connected_graph",
    "read_edge_list",
    "write_edge_list",
]


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected graph over ``n`` regions.

    ``edges`` holds each undirected edge once as a sorted pair ``(i, j)``
    with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("a graph needs at least one region")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ConfigError(f"self-loop at region {i + 1}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ConfigError(f"edge ({i + 1}, {j + 1}) outside 1..{self.n}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.n:
                raise ConfigError("need exactly one label per region")
            if len(set(labels)) != self.n:
                raise ConfigError("region labels must be unique")
            object.__setattr__(self, "labels", labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> list[int]:
        return [b if a == i else a for a, b in self.edges if i in (a, b)]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def region_names(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(str(i + 1) for i in range(self.n))

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        adj = [[] for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n


@dataclass(frozen=True)
class Ordering:
    """Permutation ``perm`` of the regions; ``perm[r]`` is the region placed at rank ``r``."""

    perm: tuple[int, ...]
    inverse: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        perm = tuple(int(v) for v in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ConfigError("ordering must be a permutation of the regions")
        inv = [0] * len(perm)
        for rank, region in enumerate(perm):
            inv[region] = rank
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inverse", tuple(inv))

    @classmethod
    def natural(cls, n: int) -> "Ordering":
        return cls(tuple(range(n)))

    def __len__(self):
        return len(self.perm)


@dataclass(frozen=True)
class DirectedNeighborhoods:
    """Earlier-ordered neighbours of each region (the DAGAR parent sets)."""

    parents: tuple[tuple[int, ...], ...]
    ordering: Ordering

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(p) for p in self.parents], dtype=int)

    def directed_edges(self) -> list[tuple[int, int]]:
        """Edges as ``(parent, child)`` pairs."""
        return [(k, i) for i, ps in enumerate(self.parents) for k in ps]


def grid_graph(side: int) -> SpatialGraph:
    """Rook-adjacency lattice with ``side**2`` regions in row-major order."""
    if side < 1:
        raise ConfigError("grid side must be >= 1")
    edges = []
    for r in range(side):
        for c in range(side):
            v = r * side + c
            if c + 1 < side:
                edges.append((v, v + 1))
            if r + 1 < side:
                edges.append((v, v + side))
    return SpatialGraph(side * side, tuple(edges))


def path_graph(n: int) -> SpatialGraph:
    return SpatialGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def adjacency_matrix(g: SpatialGraph) -> np.ndarray:
    A = np.zeros((g.n, g.n))
    for i, j in g.edges:
        A[i, j] = A[j, i] = 1.0
    return A


def row_stochastic(A: np.ndarray) -> np.ndarray:
    """Divide each row of a proximity matrix by its sum."""
    A = np.asarray(A, dtype=float)
    rs = A.sum(axis=1)
    if np.any(rs == 0):
        bad = np.flatnonzero(rs == 0) + 1
        raise IsolatedRegion(f"regions without neighbours: {bad.tolist()}")
    return A / rs[:, None]


def directed_neighbors(g: SpatialGraph, ordering: Ordering | None = None) -> DirectedNeighborhoods:
    """Direct every edge from the earlier-ordered endpoint to the later one."""
    if ordering is None:
        ordering = Ordering.natural(g.n)
    if len(ordering) != g.n:
        raise ConfigError("ordering length differs from the number of regions")
    rank = ordering.inverse
    parents: list[list[int]] = [[] for _ in range(g.n)]
    for a, b in g.edges:
        if rank[a] < rank[b]:
            parents[b].append(a)
        else:
            parents[a].append(b)
    return DirectedNeighborhoods(tuple(tuple(sorted(p)) for p in parents), ordering)


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3) -> SpatialGraph:
    """Random spanning tree plus independently added extra edges."""
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        j = int(order[rng.integers(0, k)])
        i = int(order[k])
        edges.add((min(i, j), max(i, j)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    return SpatialGraph(n, tuple(sorted(edges)))


def read_edge_list(path: str | Path, n: int | None = None) -> SpatialGraph:
    """Parse the 1-indexed edge-list format described in the module docstring."""
    edges = []
    labels: dict[int, str] = {}
    max_idx = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 3 and parts[0] == "label":
                    try:
                        idx = int(parts[1])
                    except ValueError:
                        raise ParseError(f"bad label index {parts[1]!r}", lineno) from None
                    labels[idx] = " ".join(parts[2:])
                    max_idx = max(max_idx, idx)
                continue
            line = line.split("#", 1)[0]
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'i j', got {raw.rstrip()!r}", lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer vertex in {raw.rstrip()!r}", lineno) from None
            if i < 1 or j < 1:
                raise ParseError("vertices are 1-indexed", lineno)
            if i == j:
                raise ParseError(f"self-loop at {i}", lineno)
            edges.append((i - 1, j - 1))
            max_idx = max(max_idx, i, j)
    if n is None:
        n = max_idx
    if labels:
        if sorted(labels) != list(range(1, n + 1)):
            raise ParseError("labels must cover every region 1..n exactly once")
        lab = tuple(labels[i] for i in range(1, n + 1))
    else:
        lab = None
    return SpatialGraph(n, tuple(edges), lab)


def write_edge_list(g: SpatialGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {g.n} regions, {g.n_edges} edges\n")
        if g.labels is not None:
            for i, name in enumerate(g.labels, start=1):
                fh.write(f"# label {i} {name}\n")
        for i, j in g.edges:
            fh.write(f"{i + 1} {j + 1}\n")
