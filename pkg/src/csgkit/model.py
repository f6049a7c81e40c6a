"""The full detector (EA-GCN encoder + kernel-scaled readout) and checkpoints."""
from __future__ import annotations

import io
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch
from torch import nn

from .eagcn import EaGcn, EaGcnConfig, GraphTensors, graph_tensors
from .embed import TokenEmbeddingTable, initial_node_matrix
from .graph import BASE_KINDS, CodeStructureGraph
from .ksr import KernelScaledRepresentation, KsrConfig, lengths_to_mask
from .simplify import DEFAULT_IDENTIFIER_TYPES, DEFAULT_RULES, MergeRuleTable

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = "ample-checkpoint/1"


@dataclass
class ModelConfig:
    d: int = 100
    layers: int = 2
    heads: int = 10
    d_ff: Optional[int] = None
    large_kernel: int = 11
    small_kernel: int = 3
    out_channels: Optional[int] = None
    fc_hidden: Optional[int] = None
    pooling: str = "max"
    activation: str = "relu"
    reverse_edges: bool = False
    max_nodes: int = 500
    relations: tuple[str, ...] = BASE_KINDS

    def __post_init__(self):
        self.relations = tuple(self.relations)

    def eagcn(self) -> EaGcnConfig:
        return EaGcnConfig(self.layers, self.heads, self.d, self.d_ff, self.activation,
                           self.reverse_edges, self.relations)

    def ksr(self) -> KsrConfig:
        return KsrConfig(self.d, self.out_channels or self.d, self.large_kernel, self.small_kernel,
                         self.fc_hidden or self.d, self.pooling, self.activation)

    def to_json(self) -> dict:
        out = asdict(self)
        out["relations"] = list(self.relations)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class GraphBatch:
    H0: torch.Tensor
    tensors: GraphTensors
    lengths: list[int]
    max_len: int
    labels: Optional[torch.Tensor] = None

    @property
    def size(self) -> int:
        return len(self.lengths)


def make_batch(graphs: Sequence[CodeStructureGraph], matrices: Sequence[np.ndarray],
               config: ModelConfig, pad_to: Optional[int] = None) -> GraphBatch:
    """Disjoint union of simplified graphs with their initial node matrices."""
    gt = graph_tensors(graphs, config.relations, config.reverse_edges)
    H0 = torch.from_numpy(np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=0)
                          if matrices else np.zeros((0, config.d)))
    lengths = []
    for g in graphs:
        if g.num_nodes > config.max_nodes:
            warnings.warn(f"graph {g.function_name!r} has {g.num_nodes} nodes; the readout "
                          f"only sees the first {config.max_nodes}", stacklevel=2)
        lengths.append(max(1, min(g.num_nodes, config.max_nodes)))
    max_len = pad_to or max(lengths, default=1)
    labels = None
    if graphs and all(g.label is not None for g in graphs):
        labels = torch.tensor([int(g.label) for g in graphs], dtype=torch.long)
    return GraphBatch(H0, gt, lengths, max_len, labels)


class AmpleModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = EaGcn(config.eagcn())
        self.readout = KernelScaledRepresentation(config.ksr())
        self.double()

    def pad(self, H: torch.Tensor, batch: GraphBatch) -> torch.Tensor:
        """Scatter node rows into a zero-padded (B, L, d) tensor in node-id order."""
        out = H.new_zeros((batch.size, batch.max_len, H.shape[1]))
        rows, slots = [], []
        for b, (start, n) in enumerate(zip(batch.tensors.offsets, batch.lengths)):
            take = min(n, batch.max_len)
            rows.extend(range(start, start + take))
            slots.extend(b * batch.max_len + k for k in range(take))
        if rows:
            flat = out.view(-1, H.shape[1]).index_copy(0, torch.tensor(slots), H[torch.tensor(rows)])
            out = flat.view(batch.size, batch.max_len, H.shape[1])
        return out

    def feature_map(self, batch: GraphBatch):
        H = self.encoder(batch.H0, batch.tensors)
        X = self.pad(H, batch)
        mask = lengths_to_mask(batch.lengths, batch.max_len)
        return self.readout.feature_map(X, mask), mask

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        K, mask = self.feature_map(batch)
        return self.readout.logits(K, mask)

    def predict_proba(self, batch: GraphBatch) -> torch.Tensor:
        return torch.softmax(self.forward(batch), dim=-1)


@dataclass
class Checkpoint:
    """Everything needed to score new graphs: weights, embeddings and simplification settings."""

    model: AmpleModel
    embeddings: TokenEmbeddingTable
    rules: MergeRuleTable = DEFAULT_RULES
    identifier_types: tuple[str, ...] = tuple(sorted(DEFAULT_IDENTIFIER_TYPES))
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    def node_matrix(self, g: CodeStructureGraph) -> np.ndarray:
        return initial_node_matrix(g, self.embeddings)

    def save(self, path: Union[str, os.PathLike]) -> None:
        header = {
            "version": CHECKPOINT_VERSION,
            "model_config": self.config.to_json(),
            "rules": self.rules.to_json(),
            "identifier_types": list(self.identifier_types),
            "vocab": sorted(self.embeddings.vocab, key=self.embeddings.vocab.__getitem__),
            "meta": self.meta,
            "tensors": {},
        }
        arrays = {}
        for name, t in self.model.state_dict().items():
            arr = t.detach().cpu().numpy()
            header["tensors"][name] = list(arr.shape)
            arrays["t/" + name] = arr
        arrays["emb/vectors"] = self.embeddings.vectors
        arrays["emb/oov"] = self.embeddings.oov_vector
        arrays["header"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "Checkpoint":
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(bytes(data["header"]).decode("utf-8"))
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
            model = AmpleModel(ModelConfig.from_json(header["model_config"]))
            state = {}
            for name, shape in header["tensors"].items():
                arr = data["t/" + name]
                if list(arr.shape) != shape:
                    raise ValueError(f"tensor {name} has shape {arr.shape}, header says {shape}")
                state[name] = torch.from_numpy(arr.copy())
            model.load_state_dict(state)
            vocab = {t: i for i, t in enumerate(header["vocab"])}
            emb = TokenEmbeddingTable(vocab, data["emb/vectors"].copy(), data["emb/oov"].copy())
        return cls(model, emb, MergeRuleTable.from_json(header["rules"]),
                   tuple(header["identifier_types"]), header.get("meta", {}))
