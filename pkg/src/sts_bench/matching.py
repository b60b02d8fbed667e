"""Backtracking subgraph-motif matcher used for ground-truth labeling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graphs import AnnotatedGraph

FEATURE_TOLERANCE = 1e-6
DEFAULT_MATCH_CAP = 1000


@dataclass(frozen=True)
class NodePredicate:
    """Either an exact feature vector (``color``) or a categorical attribute match.

    Attribute predicates read ``graph.metadata["node_attributes"][attribute][i]``.
    """

    color: Optional[Tuple[float, ...]] = None
    attribute: Optional[str] = None
    values: Tuple[Any, ...] = ()

    def holds(self, graph: AnnotatedGraph, node: int) -> bool:
        if self.color is not None:
            row = graph.node_features[node]
            return row.shape[0] == len(self.color) and bool(
                np.all(np.abs(row - np.asarray(self.color)) <= FEATURE_TOLERANCE))
        attrs = graph.metadata.get("node_attributes", {}).get(self.attribute)
        return attrs is not None and attrs[node] in self.values


@dataclass(frozen=True)
class MotifPattern:
    node_count: int
    edges: Tuple[Tuple[int, int], ...]
    predicates: Tuple[NodePredicate, ...]
    name: str = ""

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("a motif needs at least one node")
        if len(self.predicates) != self.node_count:
            raise ValueError(f"{len(self.predicates)} predicates for {self.node_count} nodes")
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if not _connected(self.node_count, self.edges):
            raise ValueError(f"motif {self.name!r} is not connected")

    def neighbors(self) -> List[set]:
        adj = [set() for _ in range(self.node_count)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


def _connected(n, edges) -> bool:
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def _undirected_adjacency(graph: AnnotatedGraph) -> List[set]:
    """Pairs connected in both directions."""
    out = [set() for _ in range(graph.node_count)]
    directed = set(map(tuple, graph.edges.tolist()))
    for i, j in directed:
        if (j, i) in directed and i != j:
            out[i].add(j)
    return out


def match_motif(graph: AnnotatedGraph, pattern: MotifPattern,
                cap: int = DEFAULT_MATCH_CAP) -> List[Tuple[int, ...]]:
    """All injective pattern-to-graph maps preserving pattern adjacency and predicates.

    Non-edges of the pattern are not enforced (monomorphism). Assignment ``m``
    maps pattern node ``p`` to graph node ``m[p]``. At most ``cap`` results.
    """
    if pattern.node_count > graph.node_count:
        return []
    candidates = [
        [v for v in range(graph.node_count) if pred.holds(graph, v)]
        for pred in pattern.predicates
    ]
    if any(not c for c in candidates):
        return []
    adj = _undirected_adjacency(graph)
    pnb = pattern.neighbors()

    # most selective node first, then grow along pattern edges
    order = [min(range(pattern.node_count), key=lambda p: (len(candidates[p]), p))]
    while len(order) < pattern.node_count:
        placed = set(order)
        frontier = [p for p in range(pattern.node_count)
                    if p not in placed and pnb[p] & placed]
        order.append(min(frontier, key=lambda p: (len(candidates[p]), p)))
    cand_sets = [set(c) for c in candidates]

    results: List[Tuple[int, ...]] = []
    assignment = [-1] * pattern.node_count
    used = set()

    def extend(depth):
        if len(results) >= cap:
            return
        if depth == len(order):
            results.append(tuple(assignment))
            return
        p = order[depth]
        anchors = [assignment[q] for q in pnb[p] if assignment[q] >= 0]
        if anchors:
            pool = set(adj[anchors[0]])
            for a in anchors[1:]:
                pool &= adj[a]
            pool &= cand_sets[p]
            pool = sorted(pool)
        else:
            pool = candidates[p]
        for v in pool:
            if v in used:
                continue
            assignment[p] = v
            used.add(v)
            extend(depth + 1)
            used.discard(v)
            assignment[p] = -1
            if len(results) >= cap:
                return

    extend(0)
    return results

