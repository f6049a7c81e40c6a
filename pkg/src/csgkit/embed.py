"""Initial node features: tokenize node code, embed tokens, average per node."""
from __future__ import annotations

import hashlib
import json
import os
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from . import _accel
from .graph import CodeStructureGraph
from .io import EmptyCorpus

_OPERATORS = [
    "<<=", ">>=", "...", "->*", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::", ".*", "##",
]
_TOKEN_RE = re.compile(
    r'''
    (?P<string>[LuU8]*"(?:\\.|[^"\\\n])*"?)
  | (?P<char>[LuU8]*'(?:\\.|[^'\\\n])*'?)
  | (?P<number>(?:0[xX][0-9a-fA-F]+|\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)[uUlLfF]*)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op>''' + "|".join(re.escape(op) for op in _OPERATORS) + r''')
  | (?P<punct>\S)
    ''',
    re.VERBOSE,
)


def tokenize_code(code: str) -> list[str]:
    """Split C-like code into identifier, literal and punctuation tokens.

    String and character literals stay whole; multi-character operators such
    as ``->`` or ``<<=`` are one token; every other non-space character is its
    own token.  Whitespace is dropped and nothing else is.
    """
    return [m.group(0) for m in _TOKEN_RE.finditer(code)]


@dataclass
class TokenEmbeddingTable:
    vocab: dict[str, int]
    vectors: np.ndarray
    oov_vector: np.ndarray

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])

    def lookup(self, token: str) -> np.ndarray:
        i = self.vocab.get(token)
        return self.oov_vector if i is None else self.vectors[i]

    def __eq__(self, other):
        return (isinstance(other, TokenEmbeddingTable) and self.vocab == other.vocab
                and np.array_equal(self.vectors, other.vectors)
                and np.array_equal(self.oov_vector, other.oov_vector))

    def to_json(self) -> dict:
        tokens = sorted(self.vocab, key=self.vocab.__getitem__)
        return {"d": self.d, "vocab": tokens,
                "vectors": self.vectors.reshape(-1).tolist(),
                "oov": self.oov_vector.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "TokenEmbeddingTable":
        d = int(data["d"])
        tokens = list(data["vocab"])
        vectors = np.asarray(data["vectors"], dtype=np.float64).reshape(len(tokens), d)
        return cls({t: i for i, t in enumerate(tokens)}, vectors,
                   np.asarray(data["oov"], dtype=np.float64))

    def save(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "TokenEmbeddingTable":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Word2VecConfig:
    d: int = 100
    window: int = 5
    negative: int = 5
    epochs: int = 5
    alpha: float = 0.025
    min_alpha: float = 0.0001


def graph_sentence(g: CodeStructureGraph) -> list[str]:
    """All node token sequences of ``g`` concatenated in node-id order."""
    out: list[str] = []
    for nd in g.nodes:
        out.extend(tokenize_code(nd.code))
    return out


def _unigram_table(counts: np.ndarray, power: float = 0.75, domain: int = 2**31 - 1) -> np.ndarray:
    weights = counts.astype(np.float64) ** power
    cum = np.round(np.cumsum(weights) / weights.sum() * domain).astype(np.int64)
    cum[-1] = domain
    return cum


def fit_token_embeddings(graphs: Iterable[CodeStructureGraph], d: int = 100, seed: int = 0,
                         config: Word2VecConfig | None = None) -> TokenEmbeddingTable:
    """Skip-gram/negative-sampling token vectors over every node's tokens.

    Each graph contributes one sentence.  No token is dropped (min count 1, no
    subsampling).  The OOV vector is the mean of all learned vectors.
    """
    cfg = config or Word2VecConfig(d=d)
    d = cfg.d
    if d < 1:
        raise ValueError("embedding dimension must be >= 1")
    sentences = [graph_sentence(g) for g in graphs]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise EmptyCorpus("no tokens to fit embeddings on")
    counts = Counter(t for s in sentences for t in s)
    tokens = sorted(counts, key=lambda t: (-counts[t], t))
    vocab = {t: i for i, t in enumerate(tokens)}

    flat = np.fromiter((vocab[t] for s in sentences for t in s), dtype=np.int64)
    offsets = np.zeros(len(sentences) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in sentences])
    cum = _unigram_table(np.array([counts[t] for t in tokens]))

    rng = np.random.default_rng(seed)
    syn0 = (rng.random((len(tokens), d)) - 0.5) / d
    syn1neg = np.zeros_like(syn0)
    _accel.sgns_train(syn0, syn1neg, flat, offsets, cum, cfg.window, cfg.negative,
                      cfg.epochs, cfg.alpha, cfg.min_alpha,
                      (int(seed) * 2654435761 + 1) & 0xFFFFFFFFFFFF)
    return TokenEmbeddingTable(vocab, syn0, syn0.mean(axis=0))


def _hash_vector(token: str, d: int) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    v = np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(d)
    return v / np.linalg.norm(v)


def hashing_embeddings(graphs: Iterable[CodeStructureGraph], d: int = 100) -> TokenEmbeddingTable:
    """Training-free table: each token maps to a unit vector seeded by its hash."""
    tokens = sorted({t for g in graphs for t in graph_sentence(g)})
    vectors = np.array([_hash_vector(t, d) for t in tokens]).reshape(len(tokens), d)
    oov = _hash_vector("<oov>", d)
    return TokenEmbeddingTable({t: i for i, t in enumerate(tokens)}, vectors, oov)


def initial_node_matrix(g: CodeStructureGraph, table: TokenEmbeddingTable) -> np.ndarray:
    """|V| x d matrix; row i is the mean token vector of node i (OOV vector if tokenless)."""
    out = np.empty((g.num_nodes, table.d), dtype=np.float64)
    for i, nd in enumerate(g.nodes):
        toks = tokenize_code(nd.code)
        if not toks:
            out[i] = table.oov_vector
            continue
        acc = np.zeros(table.d)
        for t in toks:
            acc += table.lookup(t)
        out[i] = acc / len(toks)
    return out


def node_matrices(graphs: Sequence[CodeStructureGraph], table: TokenEmbeddingTable) -> list[np.ndarray]:
    return [initial_node_matrix(g, table) for g in graphs]
