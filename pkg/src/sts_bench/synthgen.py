"""Generator for the red/blue adversarial motif classification dataset.

Every graph is a random colored base graph with two seeded motifs:

* a red motif that decides the label: ``red_star`` (red hub, 4 yellow leaves)
  for the "active" class, ``red_ring`` (6-cycle alternating red/green) for
  "inactive";
* a blue motif (``blue_ring``: 6-cycle alternating blue/yellow, or
  ``blue_star``: blue hub with 4 green leaves) whose kind is balanced within
  each class and therefore carries no label information.

Ground-truth masks mark the red motif in the channel of the graph's class.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .graphs import CLASSIFICATION, AnnotatedGraph, Dataset, ExplanationMasks
from .matching import MotifPattern, NodePredicate
from .optim import make_rng

RED = (1.0, 0.0, 0.0)
YELLOW = (1.0, 1.0, 0.0)
GREEN = (0.0, 1.0, 0.0)
BLUE = (0.0, 0.0, 1.0)

INACTIVE, ACTIVE = 0, 1
CLASS_NAMES = ("inactive", "active")


def _star(hub, leaf, name) -> MotifPattern:
    return MotifPattern(5, ((0, 1), (0, 2), (0, 3), (0, 4)),
                        (NodePredicate(color=hub),) + (NodePredicate(color=leaf),) * 4, name)


def _ring(a, b, name) -> MotifPattern:
    return MotifPattern(6, tuple((i, (i + 1) % 6) for i in range(6)),
                        tuple(NodePredicate(color=a if i % 2 == 0 else b) for i in range(6)), name)


MOTIFS: Dict[str, MotifPattern] = {
    "red_star": _star(RED, YELLOW, "red_star"),
    "red_ring": _ring(RED, GREEN, "red_ring"),
    "blue_ring": _ring(BLUE, YELLOW, "blue_ring"),
    "blue_star": _star(BLUE, GREEN, "blue_star"),
}
LABEL_MOTIF = {ACTIVE: "red_star", INACTIVE: "red_ring"}
# fixed, label-independent channel for adversarial explanations
ADVERSARIAL_CHANNEL = {"blue_ring": ACTIVE, "blue_star": INACTIVE}


@dataclass(frozen=True)
class SynthConfig:
    graph_count: int = 5000
    min_nodes: int = 15
    max_nodes: int = 40
    extra_edge_ratio: float = 0.3
    background_low: float = 0.3
    background_high: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.graph_count < 2 or self.graph_count % 2:
            raise ValueError(f"graph_count must be a positive even number, got {self.graph_count}")
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise ValueError("need 1 <= min_nodes <= max_nodes")
        if self.extra_edge_ratio < 0:
            raise ValueError("extra_edge_ratio must be >= 0")
        if not 0.0 <= self.background_low <= self.background_high <= 1.0:
            raise ValueError("background band must lie inside [0, 1]")


def _motif_colors(pattern: MotifPattern) -> np.ndarray:
    return np.array([p.color for p in pattern.predicates], dtype=np.float64)


def base_graph(n: int, cfg: SynthConfig, rng: np.random.Generator) -> AnnotatedGraph:
    """Random spanning tree plus ``floor(ratio * n)`` extra undirected edges."""
    pairs = []
    present = set()
    for t in range(1, n):
        p = int(rng.integers(0, t))
        pairs.append((p, t))
        present.add((p, t))
    wanted = int(np.floor(cfg.extra_edge_ratio * n))
    max_pairs = n * (n - 1) // 2
    attempts = 0
    while wanted and len(present) < max_pairs and attempts < 100 * (wanted + 1):
        attempts += 1
        a, b = sorted(int(x) for x in rng.integers(0, n, size=2))
        if a == b or (a, b) in present:
            continue
        present.add((a, b))
        pairs.append((a, b))
        wanted -= 1
    colors = rng.uniform(cfg.background_low, cfg.background_high, size=(n, 3))
    edges = [e for a, b in pairs for e in ((a, b), (b, a))]
    return AnnotatedGraph(colors, np.array(edges, dtype=np.int64).reshape(-1, 2),
                          np.ones((len(edges), 1)), np.zeros(2))


def seed_motif(graph: AnnotatedGraph, motif: MotifPattern, rng: np.random.Generator):
    """Append ``motif`` and attach it by one edge to a random pre-existing node.

    Returns ``(graph, node_ids, edge_ids)``; the ids cover the motif's own nodes
    and directed edges, not the attachment edge.
    """
    if graph.node_count < 1:
        raise ValueError("seed_motif needs a graph with at least one node")
    offset = graph.node_count
    node_ids = list(range(offset, offset + motif.node_count))
    new_edges = []
    for a, b in motif.edges:
        new_edges += [(offset + a, offset + b), (offset + b, offset + a)]
    edge_start = graph.edge_count
    edge_ids = list(range(edge_start, edge_start + len(new_edges)))
    inner = offset + int(rng.integers(0, motif.node_count))
    outer = int(rng.integers(0, offset))
    new_edges += [(inner, outer), (outer, inner)]
    edges = np.concatenate([graph.edges, np.array(new_edges, dtype=np.int64)])
    features = np.concatenate([graph.node_features, _motif_colors(motif)])
    edge_features = np.concatenate([graph.edge_features,
                                    np.ones((len(new_edges), graph.edge_features.shape[1]))])
    out = AnnotatedGraph(features, edges, edge_features, graph.targets, None, dict(graph.metadata))
    return out, node_ids, edge_ids


def _support_masks(graph: AnnotatedGraph, nodes, edges, channel: int, channels: int = 2):
    nm = np.zeros((graph.node_count, channels))
    em = np.zeros((graph.edge_count, channels))
    nm[list(nodes), channel] = 1.0
    em[list(edges), channel] = 1.0
    return ExplanationMasks(nm, em)


def generate_graph(cfg: SynthConfig, index: int, label: int, blue_kind: str) -> AnnotatedGraph:
    rng = make_rng(cfg.seed, index, "synth-graph")
    n = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
    g = base_graph(n, cfg, rng)
    red_kind = LABEL_MOTIF[label]
    g, red_nodes, red_edges = seed_motif(g, MOTIFS[red_kind], rng)
    g, blue_nodes, blue_edges = seed_motif(g, MOTIFS[blue_kind], rng)
    targets = np.zeros(2)
    targets[label] = 1.0
    meta = {
        "index": index,
        "label": CLASS_NAMES[label],
        "red_motif": red_kind, "red_nodes": red_nodes, "red_edges": red_edges,
        "blue_motif": blue_kind, "blue_nodes": blue_nodes, "blue_edges": blue_edges,
    }
    masks = _support_masks(g, red_nodes, red_edges, label)
    return AnnotatedGraph(g.node_features, g.edges, g.edge_features, targets, masks, meta)


def assignments(cfg: SynthConfig) -> Tuple[np.ndarray, List[str]]:
    """Exactly balanced labels, and blue-motif kinds balanced inside each class."""
    rng = make_rng(cfg.seed, "synth-labels")
    half = cfg.graph_count // 2
    labels = rng.permutation(np.repeat([ACTIVE, INACTIVE], half))
    kinds = [""] * cfg.graph_count
    for cls in (ACTIVE, INACTIVE):
        members = np.flatnonzero(labels == cls)
        pool = np.array(["blue_ring", "blue_star"])[np.arange(members.size) % 2]
        for idx, kind in zip(members, rng.permutation(pool)):
            kinds[idx] = str(kind)
    return labels, kinds


def generate(config: SynthConfig = SynthConfig()) -> Dataset:
    labels, kinds = assignments(config)
    graphs = [generate_graph(config, i, int(labels[i]), kinds[i]) for i in range(config.graph_count)]
    return Dataset(tuple(graphs), channels=2, target_dim=2, task_kind=CLASSIFICATION)


def adversarial_masks(graph: AnnotatedGraph, channels: int = 2) -> ExplanationMasks:
    """Masks on the label-independent blue motif, channel fixed by its kind."""
    meta = graph.metadata
    if "blue_nodes" not in meta or "blue_motif" not in meta:
        raise KeyError("graph metadata lacks blue-motif placement")
    return _support_masks(graph, meta["blue_nodes"], meta["blue_edges"],
                          ADVERSARIAL_CHANNEL[meta["blue_motif"]], channels)
