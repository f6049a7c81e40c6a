import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csgkit.graph import Edge, Node, build_graph
from csgkit.metrics import (CSV_FIELDS, EmptyInput, LengthMismatch, NegativeRate, all_pairs_distances,
                            classification_metrics, corpus_report, format_percent, node_distances,
                            simplification_rates)
from csgkit.simplify import gs
from csgkit.synth import generate_synthetic_corpus

from helpers import CONFUSION_CASES, distance_stats_oracle, floyd_warshall, random_graph


def line_graph(n, kind="CFG"):
    return build_graph([Node(i, "T") for i in range(n)], [Edge(i, i + 1, kind) for i in range(n - 1)])


# simplification rates --------------------------------------------------------

def test_rate_ten_to_six():
    before = line_graph(10)
    after = line_graph(6)
    r = simplification_rates(before, after)
    assert r.node_rate == 0.4
    assert r.edge_rate == (9 - 5) / 9


def test_identical_graphs_zero_rates():
    g = line_graph(4)
    r = simplification_rates(g, g)
    assert (r.node_rate, r.edge_rate) == (0.0, 0.0)
    empty = build_graph([], [])
    assert simplification_rates(empty, empty).node_rate == 0.0


def test_negative_rate():
    with pytest.raises(NegativeRate):
        simplification_rates(line_graph(3), line_graph(4))


def test_percent_format():
    assert format_percent(0.41642) == "41.64%"
    assert format_percent(0.1679) == "16.79%"
    assert format_percent(0.0) == "0.00%"


# distances -------------------------------------------------------------------

def test_single_node_distances():
    s = node_distances(line_graph(1))
    assert (s.avg_distance, s.max_distance) == (0.0, 0)


def test_path_of_three():
    s = node_distances(line_graph(3))
    assert s.avg_distance == 4 / 3 and s.max_distance == 2


def test_direction_is_ignored():
    g = build_graph([Node(i, "T") for i in range(3)], [Edge(1, 0, "AST"), Edge(1, 2, "DFG", "x")])
    assert node_distances(g).avg_distance == 4 / 3


def test_two_disconnected_nodes():
    s = node_distances(build_graph([Node(0, "T"), Node(1, "T")], []))
    assert (s.avg_distance, s.max_distance) == (0.0, 0)


def test_unreachable_pairs_excluded():
    g = build_graph([Node(i, "T") for i in range(4)], [Edge(0, 1, "CFG")])
    s = node_distances(g)
    assert (s.avg_distance, s.max_distance) == (1.0, 1)
    D = all_pairs_distances(g)
    assert D[0, 2] == -1 and D[2, 2] == 0


def test_self_loops_and_parallel_edges_do_not_matter():
    g = build_graph([Node(i, "T") for i in range(3)],
                    [Edge(0, 1, "CFG"), Edge(0, 1, "DFG", "a"), Edge(1, 1, "CFG"), Edge(2, 1, "NCS")])
    assert node_distances(g) == node_distances(line_graph(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distances_match_floyd_warshall(seed):
    g = random_graph(np.random.default_rng(seed), max_nodes=50)
    D = all_pairs_distances(g)
    W = floyd_warshall(g)
    n = g.num_nodes
    for i in range(n):
        for j in range(n):
            assert D[i, j] == (-1 if W[i][j] == math.inf else W[i][j])
    s = node_distances(g)
    assert (s.avg_distance, s.max_distance) == distance_stats_oracle(g)
    assert s.avg_distance <= s.max_distance


# classification --------------------------------------------------------------

@pytest.mark.parametrize("case", CONFUSION_CASES, ids=[f"cm{k}" for k in range(len(CONFUSION_CASES))])
def test_hand_counted_confusion_matrices(case):
    preds, labels, counts, expected = case
    s = classification_metrics(preds, labels)
    assert (s.tp, s.fp, s.tn, s.fn) == counts
    assert (s.accuracy, s.precision, s.recall, s.f1) == tuple(float(v) for v in expected)


def test_f1_is_harmonic_mean_when_defined():
    for preds, labels, _, (_, p, r, f1) in CONFUSION_CASES:
        if p + r:
            assert f1 == 2 * p * r / (p + r)


def test_classification_errors():
    with pytest.raises(LengthMismatch):
        classification_metrics([1, 0], [1])
    with pytest.raises(EmptyInput):
        classification_metrics([], [])
    with pytest.raises(ValueError):
        classification_metrics([2], [1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40), st.randoms())
def test_classification_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = classification_metrics([p for p, _ in pairs], [y for _, y in pairs])
    b = classification_metrics([p for p, _ in shuffled], [y for _, y in shuffled])
    assert a == b
    for v in (a.accuracy, a.precision, a.recall, a.f1):
        assert 0.0 <= v <= 1.0


# reports ---------------------------------------------------------------------

def test_csv_report_schema():
    corpus = generate_synthetic_corpus(6, seed=2)
    simplified = [gs(g)[0] for g in corpus.graphs]
    report = corpus_report(corpus.names, corpus.graphs, simplified)
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == CSV_FIELDS
    assert [r[0] for r in rows[1:]] == corpus.names + ["MEAN"]
    for r, g, s in zip(rows[1:], corpus.graphs, simplified):
        assert int(r[1]) == g.num_nodes and int(r[2]) == s.num_nodes
        assert int(r[3]) == g.num_edges and int(r[4]) == s.num_edges
        assert all(math.isfinite(float(x)) for x in r[1:])
    mean_nodes = sum(g.num_nodes for g in corpus.graphs) / len(corpus)
    assert float(rows[-1][1]) == pytest.approx(mean_nodes, abs=1e-6)
    text = report.reduction_text()
    assert text.count("%") == 4
    assert all(len(tok.split(".")[1]) == 3 for tok in text.replace(";", "").split() if tok.endswith("%"))
