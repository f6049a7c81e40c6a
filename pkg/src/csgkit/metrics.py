"""Graph size/distance statistics and binary classification scores."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import _accel
from .graph import CodeStructureGraph


class NegativeRate(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class SimplificationStats:
    node_rate: float
    edge_rate: float


@dataclass(frozen=True)
class DistanceStats:
    avg_distance: float
    max_distance: int


@dataclass(frozen=True)
class ClassificationScores:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _rate(before: int, after: int) -> float:
    if after > before:
        raise NegativeRate(f"simplified graph is larger than the original ({after} > {before})")
    return (before - after) / before if before else 0.0


def simplification_rates(original: CodeStructureGraph, simplified: CodeStructureGraph) -> SimplificationStats:
    return SimplificationStats(_rate(original.num_nodes, simplified.num_nodes),
                               _rate(original.num_edges, simplified.num_edges))


def csr_undirected(g: CodeStructureGraph) -> tuple[np.ndarray, np.ndarray]:
    """CSR neighbour arrays of the undirected, self-loop-free, simple view of ``g``."""
    n = g.num_nodes
    pairs = {(e.src, e.dst) for e in g.edges if e.src != e.dst}
    pairs |= {(d, s) for s, d in pairs}
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        src, dst = arr[:, 0], arr[:, 1]
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, np.ascontiguousarray(dst)


def all_pairs_distances(g: CodeStructureGraph) -> np.ndarray:
    """|V| x |V| hop distances over the undirected view; -1 marks unreachable."""
    return _accel.all_pairs_bfs(*csr_undirected(g))


def node_distances(g: CodeStructureGraph) -> DistanceStats:
    """Mean and max shortest-path length over reachable ordered pairs a != b."""
    total, pairs, maxd = _accel.distance_summary(*csr_undirected(g))
    if pairs == 0:
        return DistanceStats(0.0, 0)
    return DistanceStats(total / pairs, int(maxd))


def classification_metrics(predictions: Sequence[int], labels: Sequence[int]) -> ClassificationScores:
    """Accuracy, precision, recall and F1 with 1 (vulnerable) as the positive class.

    Precision, recall and F1 are 0 when their denominators are 0.
    """
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not labels:
        raise EmptyInput("no predictions to score")
    tp = fp = tn = fn = 0
    for p, y in zip(predictions, labels):
        p, y = int(p), int(y)
        if p not in (0, 1) or y not in (0, 1):
            raise ValueError("predictions and labels must be 0 or 1")
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    # 2PR/(P+R) in count form, so the value is the correctly rounded ratio
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    accuracy = (tp + tn) / (tp + tn + fn + fp)
    return ClassificationScores(accuracy, precision, recall, f1, tp, fp, tn, fn)


def format_percent(x: float) -> str:
    """``0.41642`` -> ``'41.64%'``."""
    return f"{100 * x:.2f}%"


CSV_FIELDS = ["id", "nodes_before", "nodes_after", "edges_before", "edges_after",
              "node_rate", "edge_rate", "avg_dist_before", "avg_dist_after",
              "max_dist_before", "max_dist_after"]


@dataclass
class GraphReport:
    id: str
    nodes_before: int
    nodes_after: int
    edges_before: int
    edges_after: int
    node_rate: float
    edge_rate: float
    avg_dist_before: float
    avg_dist_after: float
    max_dist_before: int
    max_dist_after: int


def graph_report(name: str, original: CodeStructureGraph, simplified: CodeStructureGraph) -> GraphReport:
    rates = simplification_rates(original, simplified)
    before, after = node_distances(original), node_distances(simplified)
    return GraphReport(name, original.num_nodes, simplified.num_nodes,
                       original.num_edges, simplified.num_edges,
                       rates.node_rate, rates.edge_rate,
                       before.avg_distance, after.avg_distance,
                       before.max_distance, after.max_distance)


@dataclass
class MetricsReport:
    rows: list[GraphReport]

    def summary(self) -> GraphReport:
        """Corpus means (the ``id`` column reads ``MEAN``)."""
        k = len(self.rows)
        if k == 0:
            return GraphReport("MEAN", 0, 0, 0, 0, 0.0, 0.0, 0.0, 0.0, 0, 0)
        mean = lambda attr: sum(getattr(r, attr) for r in self.rows) / k  # noqa: E731
        return GraphReport("MEAN", *(mean(f) for f in CSV_FIELDS[1:]))

    def reduction_text(self) -> str:
        s = self.summary()
        avg_drop = _drop(s.avg_dist_before, s.avg_dist_after)
        max_drop = _drop(s.max_dist_before, s.max_dist_after)
        return (f"average node/edge simplification rate: {format_percent(s.node_rate)} and "
                f"{format_percent(s.edge_rate)}; average/maximum node distance drop: "
                f"{format_percent(avg_drop)} and {format_percent(max_drop)}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows + [self.summary()]:
            w.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
        return buf.getvalue()


def _drop(before: float, after: float) -> float:
    return (before - after) / before if before else 0.0


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def corpus_report(names: Iterable[str], originals: Iterable[CodeStructureGraph],
                  simplified: Iterable[CodeStructureGraph]) -> MetricsReport:
    return MetricsReport([graph_report(n, o, s) for n, o, s in zip(names, originals, simplified)])
