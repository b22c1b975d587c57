"""Finite directed graphs with self-loops: closure, exits, sink cliques, paths."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SupportDigraph:
    m: int
    edges: frozenset  # of (i, j) pairs, 0-based

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        bad = [e for e in edges if not (0 <= e[0] < self.m and 0 <= e[1] < self.m)]
        if bad:
            raise ValueError(f"edges {bad} reference vertices outside 0..{self.m - 1}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_adjacency(cls, adj) -> "SupportDigraph":
        adj = np.asarray(adj, dtype=bool)
        ii, jj = np.nonzero(adj)
        return cls(adj.shape[0], frozenset(zip(ii.tolist(), jj.tolist())))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    def successors(self, i: int) -> list[int]:
        return sorted(j for a, j in self.edges if a == i)

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edges

    def is_transitive(self) -> bool:
        adj = self.adjacency().astype(int)
        return not np.any((adj @ adj > 0) & (adj == 0))

    def to_dot(self, name: str = "G") -> str:
        lines = [f"digraph {name} {{"]
        lines += [f"  {i} -> {j};" for i, j in sorted(self.edges)]
        lines.append("}")
        return "\n".join(lines) + "\n"


def transitive_closure(g: SupportDigraph) -> SupportDigraph:
    """Edge ``(i, j)`` iff a nonempty path ``i -> ... -> j`` exists (Warshall)."""
    reach = g.adjacency()
    for k in range(g.m):
        reach |= np.outer(reach[:, k], reach[k, :])
    return SupportDigraph.from_adjacency(reach)


def every_vertex_has_exit(g: SupportDigraph) -> tuple[bool, int | None]:
    """Every vertex has some out-edge; a self-loop counts."""
    sources = {i for i, _ in g.edges}
    for v in range(g.m):
        if v not in sources:
            return False, v
    return True, None


def strongly_connected_components(g: SupportDigraph) -> list[list[int]]:
    """Tarjan's algorithm, iterative; components come out in reverse topological order."""
    succ = [g.successors(v) for v in range(g.m)]
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack = [False] * g.m
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(g.m):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            for k in range(pos, len(succ[v])):
                w = succ[v][k]
                if w not in index:
                    work.append((v, k + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def terminal_full_subgraph(g: SupportDigraph) -> list[int]:
    """A vertex set ``W`` that is complete (loops included) and has no out-edges.

    Takes a sink strongly connected component; among several, the one with the
    smallest minimal vertex.  ``g`` must be transitive with every out-degree
    positive.
    """
    if g.m == 0:
        raise ValueError("graph has no vertices")
    if not g.is_transitive():
        raise ValueError("graph is not transitive")
    ok, v = every_vertex_has_exit(g)
    if not ok:
        raise ValueError(f"vertex {v} has no out-edge")
    comps = strongly_connected_components(g)
    label = {v: c for c, comp in enumerate(comps) for v in comp}
    sinks = [
        comp for c, comp in enumerate(comps)
        if all(label[j] == c for i in comp for j in g.successors(i))
    ]
    return min(sinks, key=lambda comp: comp[0])


def path_to_targets(g: SupportDigraph, source: int, targets, through=None) -> list[int] | None:
    """Shortest path from ``source`` to any target, or ``None``.

    ``through`` optionally restricts which vertices may be left along the way
    (the source and intermediate vertices must all lie in it).
    """
    targets = set(targets)
    if source in targets:
        return [source]
    succ = [g.successors(v) for v in range(g.m)]
    prev = {source: None}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        if through is not None and v not in through:
            continue
        for w in succ[v]:
            if w in prev:
                continue
            prev[w] = v
            if w in targets:
                path = [w]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(w)
    return None


def reachable(g: SupportDigraph, source: int) -> set[int]:
    """Vertices reachable from ``source``, including ``source`` itself."""
    seen = {source}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in g.successors(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen
