"""Edge-aware graph convolution: relational propagation plus multi-head edge attention.

Each layer first mixes neighbour states per edge type,

    h_i' = act( sum_beta sum_{j in N_i^beta} (a_beta / c_{i,beta}) V h_j + W0 h_i ),

then refines them with scaled dot-product attention over incoming edges,

    A_i   = concat_k( sum_j w_{j->i}^k h_j'^k ) W_h + h_i
    out_i = W2 act(W1 A_i) + A_i

where ``h^k`` is the k-th contiguous ``d/P`` slice of a node vector and the
attention weights of every destination are a softmax over its in-edges.

Per-destination sums are evaluated in an order fixed by the summed values
themselves (not by node or edge ids), so relabelling nodes or shuffling the
edge list gives bit-identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .graph import BASE_KINDS, CodeStructureGraph

ACTIVATIONS = {"relu": torch.relu, "tanh": torch.tanh, "identity": lambda x: x}


class DimensionMismatch(ValueError):
    pass


@dataclass
class EaGcnConfig:
    layers: int = 2
    heads: int = 10
    hidden: int = 100
    d_ff: Optional[int] = None
    activation: str = "relu"
    reverse_edges: bool = False
    relations: tuple[str, ...] = BASE_KINDS

    def __post_init__(self):
        self.relations = tuple(self.relations)
        if self.layers < 1 or self.heads < 1:
            raise ValueError("layers and heads must be >= 1")
        if self.hidden % self.heads:
            raise ValueError(f"hidden width {self.hidden} is not divisible by {self.heads} heads")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def ff_width(self) -> int:
        return self.d_ff or self.hidden


@dataclass
class GraphTensors:
    """Edge index tensors of one graph or of a disjoint union of graphs."""

    num_nodes: int
    prop_src: torch.Tensor
    prop_dst: torch.Tensor
    prop_rel: torch.Tensor
    prop_norm: torch.Tensor  # 1 / c_{dst, rel} per edge
    att_src: torch.Tensor
    att_dst: torch.Tensor
    offsets: list[int] = field(default_factory=list)


def graph_tensors(graphs: Sequence[CodeStructureGraph], relations: Sequence[str],
                  reverse_edges: bool = False, dtype=torch.float64) -> GraphTensors:
    """Index the (deduplicated) neighbourhoods of one or more graphs.

    Messages flow src -> dst (or dst -> src with ``reverse_edges``).  Edge
    labels are ignored: ``N_i^beta`` is a set of neighbours.
    """
    rel_index = {r: k for k, r in enumerate(relations)}
    triples: set[tuple[int, int, int]] = set()
    pairs: set[tuple[int, int]] = set()
    offsets = []
    base = 0
    for g in graphs:
        offsets.append(base)
        for e in g.edges:
            if e.kind not in rel_index:
                raise ValueError(f"edge kind {e.kind!r} is not one of the model relations {list(relations)}")
            s, d = (e.dst, e.src) if reverse_edges else (e.src, e.dst)
            triples.add((base + s, base + d, rel_index[e.kind]))
            pairs.add((base + s, base + d))
        base += g.num_nodes

    if triples:
        t = np.array(sorted(triples), dtype=np.int64)
        src, dst, rel = t[:, 0], t[:, 1], t[:, 2]
        counts = {}
        for d, r in zip(dst.tolist(), rel.tolist()):
            counts[(d, r)] = counts.get((d, r), 0) + 1
        norm = np.array([1.0 / counts[(d, r)] for d, r in zip(dst.tolist(), rel.tolist())])
    else:
        src = dst = rel = np.zeros(0, dtype=np.int64)
        norm = np.zeros(0)
    p = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return GraphTensors(
        num_nodes=base,
        prop_src=torch.from_numpy(src), prop_dst=torch.from_numpy(dst),
        prop_rel=torch.from_numpy(rel), prop_norm=torch.from_numpy(norm).to(dtype),
        att_src=torch.from_numpy(p[:, 0].copy()), att_dst=torch.from_numpy(p[:, 1].copy()),
        offsets=offsets,
    )


def canonical_order(dst: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    """Edge permutation grouping by destination, ordered inside each group by value.

    Rows of ``values`` are compared by their raw bytes, so equal rows tie and
    the order never depends on node or edge numbering.
    """
    if dst.numel() == 0:
        return torch.zeros(0, dtype=torch.long)
    v = np.ascontiguousarray(values.detach().cpu().numpy())
    rows = v.view(np.dtype((np.void, v.dtype.itemsize * v.shape[1]))).ravel()
    _, rank = np.unique(rows, return_inverse=True)
    order = np.lexsort((rank.ravel(), dst.numpy()))
    return torch.from_numpy(order)


def segment_sum(values: torch.Tensor, dst: torch.Tensor, num_nodes: int,
                order: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Sum rows of ``values`` into ``num_nodes`` buckets, in canonical order."""
    out = values.new_zeros((num_nodes,) + tuple(values.shape[1:]))
    if values.shape[0] == 0:
        return out
    if order is None:
        order = canonical_order(dst, values.reshape(values.shape[0], -1))
    if order.numel():
        out = out.index_add(0, dst[order], values[order])
    return out


class EaGcnLayer(nn.Module):
    """One edge-aware layer; parameter names mirror the update rule above."""

    def __init__(self, config: EaGcnConfig):
        super().__init__()
        d = config.hidden
        self.config = config
        self.relation_weight = nn.Parameter(torch.ones(len(config.relations)))
        self.V = nn.Linear(d, d, bias=False)
        self.W0 = nn.Linear(d, d, bias=False)
        self.W_h = nn.Linear(d, d, bias=False)
        self.W1 = nn.Linear(d, config.ff_width)
        self.W2 = nn.Linear(config.ff_width, d)
        self.act = ACTIVATIONS[config.activation]

    def _check(self, H: torch.Tensor, gt: GraphTensors):
        if H.dim() != 2 or H.shape[0] != gt.num_nodes or H.shape[1] != self.config.hidden:
            raise DimensionMismatch(
                f"expected {gt.num_nodes} x {self.config.hidden} node matrix, got {tuple(H.shape)}")

    def propagate(self, H: torch.Tensor, gt: GraphTensors) -> torch.Tensor:
        self._check(H, gt)
        VH = self.V(H)
        coef = self.relation_weight[gt.prop_rel] * gt.prop_norm
        msgs = coef.unsqueeze(1) * VH[gt.prop_src]
        agg = segment_sum(msgs, gt.prop_dst, gt.num_nodes)
        return self.act(agg + self.W0(H))

    def attention(self, H: torch.Tensor, gt: GraphTensors):
        """Per-edge, per-head softmax weights (E x P) plus the canonical edge order."""
        P, hd = self.config.heads, self.config.head_dim
        src, dst = gt.att_src, gt.att_dst
        hs = H[src].reshape(-1, P, hd)
        hdst = H[dst].reshape(-1, P, hd)
        scores = (hs * hdst).sum(-1) / math.sqrt(hd)
        order = canonical_order(dst, H[src])
        if scores.shape[0] == 0:
            return scores, order
        peak = torch.full((gt.num_nodes, P), -math.inf, dtype=H.dtype)
        peak = peak.scatter_reduce(0, dst.unsqueeze(1).expand(-1, P), scores.detach(),
                                   reduce="amax", include_self=True)
        ex = torch.exp(scores - peak[dst])
        denom = segment_sum(ex, dst, gt.num_nodes, order)
        return ex / denom[dst], order

    def aggregate(self, H: torch.Tensor, gt: GraphTensors, H_prev: torch.Tensor) -> torch.Tensor:
        self._check(H, gt)
        self._check(H_prev, gt)
        P, hd = self.config.heads, self.config.head_dim
        w, order = self.attention(H, gt)
        if w.shape[0]:
            weighted = w.unsqueeze(-1) * H[gt.att_src].reshape(-1, P, hd)
            agg = segment_sum(weighted, gt.att_dst, gt.num_nodes, order).reshape(-1, P * hd)
        else:
            agg = H.new_zeros(H.shape)
        A = self.W_h(agg) + H_prev
        return self.W2(self.act(self.W1(A))) + A

    def forward(self, H: torch.Tensor, gt: GraphTensors) -> torch.Tensor:
        return self.aggregate(self.propagate(H, gt), gt, H)


class EaGcn(nn.Module):
    def __init__(self, config: EaGcnConfig):
        super().__init__()
        self.config = config
        self.layers = nn.ModuleList(EaGcnLayer(config) for _ in range(config.layers))

    def forward(self, H0: torch.Tensor, gt: GraphTensors) -> torch.Tensor:
        H = H0
        for layer in self.layers:
            H = layer(H, gt)
        return H


# Functional spellings of the layer steps.

def relational_propagate(H, g: CodeStructureGraph, layer: EaGcnLayer) -> torch.Tensor:
    gt = graph_tensors([g], layer.config.relations, layer.config.reverse_edges, H.dtype)
    return layer.propagate(H, gt)


def edge_attention_scores(H, g: CodeStructureGraph, head: int, layer: EaGcnLayer):
    """``(src, dst, weight)`` triples of one head; weights of each destination sum to 1."""
    if not 0 <= head < layer.config.heads:
        raise IndexError(f"head {head} out of range")
    gt = graph_tensors([g], layer.config.relations, layer.config.reverse_edges, H.dtype)
    w, _ = layer.attention(H, gt)
    return gt.att_src, gt.att_dst, w[:, head]


def attention_aggregate(H, g: CodeStructureGraph, layer: EaGcnLayer, H_prev) -> torch.Tensor:
    gt = graph_tensors([g], layer.config.relations, layer.config.reverse_edges, H.dtype)
    return layer.aggregate(H, gt, H_prev)


def eagcn_forward(g: CodeStructureGraph, H0, model: EaGcn) -> torch.Tensor:
    gt = graph_tensors([g], model.config.relations, model.config.reverse_edges, H0.dtype)
    return model(H0, gt)
