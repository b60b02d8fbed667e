import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sts_bench import synthgen
from sts_bench.graphs import AnnotatedGraph
from sts_bench.matching import MotifPattern, NodePredicate, match_motif

PALETTE = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]


def colored_graph(colors, undirected_edges):
    edges = [e for a, b in undirected_edges for e in ((a, b), (b, a))]
    return AnnotatedGraph(np.array([PALETTE[c] for c in colors], dtype=float), edges,
                          np.ones((len(edges), 1)), [1.0, 0.0])


def brute_force(graph, pattern):
    """Every injective map satisfying predicates and pattern adjacency, by enumeration."""
    directed = set(map(tuple, graph.edges.tolist()))
    found = []
    for perm in itertools.permutations(range(graph.node_count), pattern.node_count):
        if not all(pattern.predicates[p].holds(graph, v) for p, v in enumerate(perm)):
            continue
        if all((perm[a], perm[b]) in directed and (perm[b], perm[a]) in directed
               for a, b in pattern.edges):
            found.append(perm)
    return sorted(found)


def is_valid(graph, pattern, m):
    directed = set(map(tuple, graph.edges.tolist()))
    return (len(set(m)) == len(m)
            and all(pattern.predicates[p].holds(graph, v) for p, v in enumerate(m))
            and all((m[a], m[b]) in directed and (m[b], m[a]) in directed for a, b in pattern.edges))


def test_single_node_pattern():
    g = colored_graph([0, 1, 1, 2], [(0, 1), (1, 2), (2, 3)])
    red = MotifPattern(1, (), (NodePredicate(color=PALETTE[0]),))
    assert match_motif(g, red) == [(0,)]


def test_pattern_larger_than_graph():
    g = colored_graph([0], [])
    assert match_motif(g, synthgen.MOTIFS["red_star"]) == []


def test_triangle_has_six_automorphic_matches():
    g = colored_graph([0, 0, 0], [(0, 1), (1, 2), (0, 2)])
    any_red = NodePredicate(color=PALETTE[0])
    tri = MotifPattern(3, ((0, 1), (1, 2), (0, 2)), (any_red,) * 3)
    assert len(match_motif(g, tri)) == 6


def test_cap_limits_results():
    g = colored_graph([0] * 6, [(0, i) for i in range(1, 6)])
    star = MotifPattern(3, ((0, 1), (0, 2)), (NodePredicate(color=PALETTE[0]),) * 3)
    assert len(match_motif(g, star)) == 20
    assert len(match_motif(g, star, cap=7)) == 7


def test_one_directional_edge_is_not_adjacency():
    g = AnnotatedGraph(np.array([PALETTE[0], PALETTE[1]]), [(0, 1)], np.ones((1, 1)), [1.0, 0.0])
    pair = MotifPattern(2, ((0, 1),), (NodePredicate(color=PALETTE[0]), NodePredicate(color=PALETTE[1])))
    assert match_motif(g, pair) == []


def test_attribute_predicate():
    g = AnnotatedGraph(np.zeros((3, 1)), [(0, 1), (1, 0), (1, 2), (2, 1)], np.ones((4, 1)), [1.0, 0.0],
                       metadata={"node_attributes": {"symbol": ["C", "N", "O"]}})
    no = MotifPattern(2, ((0, 1),), (NodePredicate(attribute="symbol", values=("N",)),
                                     NodePredicate(attribute="symbol", values=("O",))))
    assert match_motif(g, no) == [(1, 2)]


def test_disconnected_pattern_rejected():
    with pytest.raises(ValueError, match="connected"):
        MotifPattern(2, (), (NodePredicate(color=PALETTE[0]),) * 2)


@st.composite
def instances(draw):
    v = draw(st.integers(1, 8))
    colors = draw(st.lists(st.integers(0, 2), min_size=v, max_size=v))
    pairs = [(a, b) for a in range(v) for b in range(a + 1, v)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=12)) if pairs else []
    k = draw(st.integers(1, min(v, 4)))
    # random connected pattern: a tree plus optional extra edges
    p_edges = {(draw(st.integers(0, t - 1)), t) for t in range(1, k)}
    extra = [(a, b) for a in range(k) for b in range(a + 1, k)]
    if extra:
        p_edges |= set(draw(st.lists(st.sampled_from(extra), unique=True, max_size=2)))
    preds = tuple(NodePredicate(color=PALETTE[draw(st.integers(0, 2))]) for _ in range(k))
    return colored_graph(colors, edges), MotifPattern(k, tuple(sorted(p_edges)), preds)


@settings(max_examples=150, deadline=None)
@given(instances())
def test_complete_and_sound_against_brute_force(instance):
    graph, pattern = instance
    got = match_motif(graph, pattern, cap=10**6)
    assert all(is_valid(graph, pattern, m) for m in got)
    assert sorted(got) == brute_force(graph, pattern)


def test_synthetic_seeded_motifs_are_found():
    ds = synthgen.generate(synthgen.SynthConfig(graph_count=100, seed=5))
    for g in ds.graphs:
        for family in ("red", "blue"):
            pattern = synthgen.MOTIFS[g.metadata[f"{family}_motif"]]
            matches = match_motif(g, pattern)
            recorded = set(g.metadata[f"{family}_nodes"])
            assert any(set(m) == recorded for m in matches), (g.metadata["index"], family)
