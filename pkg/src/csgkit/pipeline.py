"""Dataset splitting, training with early stopping, evaluation and statement attribution."""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from .embed import Word2VecConfig, fit_token_embeddings, hashing_embeddings, initial_node_matrix
from .graph import BASE_KINDS, CodeStructureGraph
from .io import Corpus, EmptyCorpus
from .metrics import ClassificationScores, classification_metrics
from .model import AmpleModel, Checkpoint, ModelConfig, make_batch
from .simplify import (DEFAULT_IDENTIFIER_TYPES, DEFAULT_RULES, MergeRuleTable,
                       SimplificationTrace, gs)

logger = logging.getLogger(__name__)


class NonFiniteLoss(RuntimeError):
    pass


class UnknownTrace(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 20
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    optimizer: str = "radam"
    embedding: str = "word2vec"
    word2vec: Word2VecConfig = field(default_factory=Word2VecConfig)

    def __post_init__(self):
        self.ratios = tuple(self.ratios)
        if isinstance(self.word2vec, dict):
            self.word2vec = Word2VecConfig(**self.word2vec)
        if abs(sum(self.ratios) - 1.0) > 1e-9 or any(r < 0 for r in self.ratios):
            raise ValueError(f"split ratios must be non-negative and sum to 1, got {self.ratios}")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.embedding not in ("word2vec", "hash"):
            raise ValueError(f"unknown embedding method {self.embedding!r}")


OPTIMIZERS = {
    "radam": torch.optim.RAdam,
    "adam": torch.optim.Adam,
}


# splitting -------------------------------------------------------------------

def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor allocation for validation/test (at least one each when ``n >= 3``
    and the ratio is positive); the remainder goes to training."""
    _, rv, rt = ratios
    valid = math.floor(n * rv + 1e-9)
    test = math.floor(n * rt + 1e-9)
    if n >= 3:
        valid = max(valid, 1) if rv > 0 else valid
        test = max(test, 1) if rt > 0 else test
    return n - valid - test, valid, test


def split_corpus(corpus: Corpus, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0
                 ) -> tuple[Corpus, Corpus, Corpus]:
    """Seeded shuffle into disjoint train/valid/test corpora."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    n_train, n_valid, _ = split_sizes(len(corpus), ratios)
    order = np.random.default_rng(seed).permutation(len(corpus))
    return (corpus.subset(order[:n_train]),
            corpus.subset(order[n_train:n_train + n_valid]),
            corpus.subset(order[n_train + n_valid:]))


# preparation -----------------------------------------------------------------

@dataclass
class Prepared:
    graphs: list[CodeStructureGraph]       # simplified
    matrices: list[np.ndarray]
    traces: list[SimplificationTrace]

    def labels(self) -> list[int]:
        return [int(g.label) for g in self.graphs]


def simplify_all(graphs: Sequence[CodeStructureGraph], rules: MergeRuleTable,
                 identifier_types=DEFAULT_IDENTIFIER_TYPES):
    out = [gs(g, rules, identifier_types) for g in graphs]
    return [o[0] for o in out], [o[1] for o in out]


def prepare(graphs: Sequence[CodeStructureGraph], ckpt: Checkpoint) -> Prepared:
    simplified, traces = simplify_all(graphs, ckpt.rules, ckpt.identifier_types)
    return Prepared(simplified, [ckpt.node_matrix(g) for g in simplified], traces)


def _relations(graphs: Sequence[CodeStructureGraph]) -> tuple[str, ...]:
    extra = sorted({e.kind for g in graphs for e in g.edges} - set(BASE_KINDS))
    return tuple(BASE_KINDS) + tuple(extra)


# training --------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid_f1: float
    valid_accuracy: float
    seconds: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochRecord]
    best_epoch: int
    stopped_early: bool

    def history_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.history)


def _batches(n: int, batch_size: int, rng: Optional[np.random.Generator]):
    idx = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield idx[start:start + batch_size].tolist()


def predict(model: AmpleModel, data: Prepared, batch_size: int = 64) -> np.ndarray:
    """p_vul for every graph (eval mode)."""
    model.eval()
    out = []
    with torch.no_grad():
        for idx in _batches(len(data.graphs), batch_size, None):
            batch = make_batch([data.graphs[i] for i in idx], [data.matrices[i] for i in idx],
                               model.config)
            out.append(model.predict_proba(batch)[:, 1].numpy())
    return np.concatenate(out) if out else np.zeros(0)


def decide(p_vul: np.ndarray, threshold: float = 0.5) -> list[int]:
    """1 iff p_vul is strictly above the threshold (ties are non-vulnerable)."""
    return [int(p > threshold) for p in p_vul]


def train_model(train: Sequence[CodeStructureGraph], valid: Sequence[CodeStructureGraph],
                cfg: TrainConfig = TrainConfig(), model_config: Optional[ModelConfig] = None,
                rules: MergeRuleTable = DEFAULT_RULES,
                identifier_types=DEFAULT_IDENTIFIER_TYPES,
                on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """Simplify, embed, then fit the detector; keeps the best-validation-F1 weights."""
    train, valid = list(train), list(valid)
    if not train:
        raise EmptyCorpus("empty training set")
    if any(g.label is None for g in train + valid):
        raise ValueError("training and validation graphs must be labelled")
    mcfg = copy.deepcopy(model_config) if model_config else ModelConfig()
    mcfg.relations = _relations(train + valid)

    tr_graphs, _ = simplify_all(train, rules, identifier_types)
    va_graphs, _ = simplify_all(valid, rules, identifier_types)
    if cfg.embedding == "word2vec":
        table = fit_token_embeddings(tr_graphs, mcfg.d, cfg.seed, Word2VecConfig(
            mcfg.d, cfg.word2vec.window, cfg.word2vec.negative, cfg.word2vec.epochs,
            cfg.word2vec.alpha, cfg.word2vec.min_alpha))
    else:
        table = hashing_embeddings(tr_graphs, mcfg.d)

    torch.manual_seed(cfg.seed)
    model = AmpleModel(mcfg)
    ckpt = Checkpoint(model, table, rules, tuple(sorted(identifier_types)),
                      meta={"train_config": _jsonable(asdict(cfg))})
    tr = Prepared(tr_graphs, [initial_node_matrix(g, table) for g in tr_graphs], [])
    va = Prepared(va_graphs, [initial_node_matrix(g, table) for g in va_graphs], [])
    y_valid = va.labels()

    optim = OPTIMIZERS[cfg.optimizer](model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    history: list[EpochRecord] = []
    best_f1, best_epoch, best_state = -1.0, 0, copy.deepcopy(model.state_dict())
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        total, count = 0.0, 0
        for idx in _batches(len(tr.graphs), cfg.batch_size, rng):
            batch = make_batch([tr.graphs[i] for i in idx], [tr.matrices[i] for i in idx], mcfg)
            logits = model(batch)
            loss = F.cross_entropy(logits, batch.labels)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss.item()} at epoch {epoch}; "
                                    f"batch of {len(idx)} graphs, lr={cfg.learning_rate}")
            optim.zero_grad()
            loss.backward()
            optim.step()
            total += loss.item() * len(idx)
            count += len(idx)

        if va.graphs:
            scores = classification_metrics(decide(predict(model, va, cfg.batch_size)), y_valid)
        else:
            scores = ClassificationScores(0.0, 0.0, 0.0, 0.0)
        rec = EpochRecord(epoch, total / count, scores.f1, scores.accuracy, time.perf_counter() - t0)
        history.append(rec)
        if on_epoch:
            on_epoch(rec)
        logger.info("epoch %d loss %.4f valid f1 %.4f", epoch, rec.loss, rec.valid_f1)
        if scores.f1 > best_f1:
            best_f1, best_epoch = scores.f1, epoch
            best_state = copy.deepcopy(model.state_dict())
        elif epoch - best_epoch >= cfg.patience:
            stopped_early = epoch < cfg.max_epochs
            break

    model.load_state_dict(best_state)
    ckpt.meta.update(best_epoch=best_epoch, best_valid_f1=best_f1)
    return TrainResult(ckpt, history, best_epoch, stopped_early)


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: asdict(o) if hasattr(o, "__dataclass_fields__") else list(o)))


# evaluation ------------------------------------------------------------------

@dataclass
class Evaluation:
    scores: ClassificationScores
    predictions: list[int]
    probabilities: list[float]
    labels: list[int]


def evaluate_model(ckpt: Checkpoint, test: Sequence[CodeStructureGraph], batch_size: int = 64) -> Evaluation:
    data = prepare(list(test), ckpt)
    p = predict(ckpt.model, data, batch_size)
    preds = decide(p)
    labels = data.labels()
    return Evaluation(classification_metrics(preds, labels), preds, [float(x) for x in p], labels)


# explanation -----------------------------------------------------------------

@dataclass
class StatementWeight:
    statement: int                 # original node id of the statement (or AST root)
    weight: float
    exact_weight: Fraction
    members: list[int]             # original node ids attributed to this statement
    line: Optional[int] = None
    code: str = ""


@dataclass
class StatementAttribution:
    statements: list[StatementWeight]      # sorted by weight, descending
    node_importance: list[float]           # per original node

    def rank_of(self, statement: int) -> Optional[int]:
        """1-based rank of a statement, or None if it is not a bucket."""
        for k, sw in enumerate(self.statements, 1):
            if sw.statement == statement:
                return k
        return None

    def total(self) -> Fraction:
        return sum((sw.exact_weight for sw in self.statements), Fraction(0))


def statement_buckets(g: CodeStructureGraph) -> dict[int, list[int]]:
    """Assign every node to its nearest enclosing statement.

    Nodes with no statement ancestor fall into the bucket of their AST root.
    """
    owner: dict[int, int] = {}
    for v in range(g.num_nodes):
        u = v
        path = []
        while True:
            if u in owner:
                target = owner[u]
                break
            path.append(u)
            if g.nodes[u].is_statement:
                target = u
                break
            parents = g.ast_parents(u)
            if not parents:
                target = u
                break
            u = parents[0]
        for p in path:
            # an inner statement owns itself even if reached from below
            owner[p] = p if g.nodes[p].is_statement else target
    buckets: dict[int, list[int]] = {}
    for v in range(g.num_nodes):
        buckets.setdefault(owner[v], []).append(v)
    return buckets


def node_importance(ckpt: Checkpoint, simplified: CodeStructureGraph) -> np.ndarray:
    """ReLU of the summed-branch feature map, summed over channels, per node position."""
    model = ckpt.model
    model.eval()
    batch = make_batch([simplified], [ckpt.node_matrix(simplified)], model.config)
    with torch.no_grad():
        K, _ = model.feature_map(batch)
    imp = torch.relu(K[0]).sum(dim=0).numpy()
    out = np.zeros(simplified.num_nodes)
    n = min(simplified.num_nodes, imp.shape[0])
    out[:n] = imp[:n]
    return out


def explain_statements(ckpt: Checkpoint, g: CodeStructureGraph,
                       trace: Optional[SimplificationTrace] = None) -> StatementAttribution:
    """Per-statement importance of an original (unsimplified) graph.

    Each original node inherits the importance of the simplified node that
    absorbed it; a statement's weight sums its own node and its sub-AST.
    """
    simplified, own_trace = gs(g, ckpt.rules, ckpt.identifier_types)
    if trace is not None:
        if trace.num_input_nodes != g.num_nodes or trace != own_trace:
            raise UnknownTrace("trace does not describe the simplification of this graph")
    reps = own_trace.representatives()
    imp_simplified = node_importance(ckpt, simplified)
    imp = [float(imp_simplified[reps[v]]) for v in range(g.num_nodes)]
    stmts = []
    for stmt, members in statement_buckets(g).items():
        exact = sum((Fraction(imp[v]) for v in members), Fraction(0))
        nd = g.nodes[stmt]
        stmts.append(StatementWeight(stmt, float(exact), exact, members, nd.line, nd.code))
    stmts.sort(key=lambda s: (-s.exact_weight, s.statement))
    return StatementAttribution(stmts, imp)
