"""JSON serialization for code structure graphs and corpora.

One graph per UTF-8 file::

    {"version": "ample-graph/1", "function": "main", "label": 1,
     "nodes": [{"id": 0, "type": "IdentifierDeclStatement", "code": "...",
                "line": 3, "is_statement": true}, ...],
     "edges": [{"src": 0, "dst": 1, "kind": "AST", "label": null}, ...]}

Optional fields: ``orig_id`` per node (exporter id, defaults to ``id``) and a
top-level ``shared_leaves`` flag for simplified graphs whose identifier leaves
have several AST parents.  Unknown fields are ignored.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .graph import CodeStructureGraph, Edge, GraphError, Node, build_graph, is_valid_kind

logger = logging.getLogger(__name__)

FORMAT_VERSION = "ample-graph/1"


class MalformedJson(ValueError):
    pass


class SchemaViolation(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaViolation(f"{where}: missing field {key!r}")
    return obj[key]


def _opt_int(value, where: str) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{where}: expected integer, got {value!r}")
    return value


def graph_from_document(doc: dict) -> CodeStructureGraph:
    if not isinstance(doc, dict):
        raise SchemaViolation("top level must be an object")
    version = _require(doc, "version", "document")
    if version != FORMAT_VERSION:
        raise SchemaViolation(f"unsupported version {version!r}")
    function = _require(doc, "function", "document")
    if not isinstance(function, str):
        raise SchemaViolation("function must be a string")
    label = doc.get("label")
    if label not in (0, 1, None) or isinstance(label, bool):
        raise SchemaViolation(f"label must be 0, 1 or null, got {label!r}")
    raw_nodes = _require(doc, "nodes", "document")
    raw_edges = _require(doc, "edges", "document")
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise SchemaViolation("nodes and edges must be arrays")

    nodes = []
    for k, rn in enumerate(raw_nodes):
        where = f"nodes[{k}]"
        if not isinstance(rn, dict):
            raise SchemaViolation(f"{where}: expected object")
        nid = _opt_int(_require(rn, "id", where), where + ".id")
        ntype = _require(rn, "type", where)
        if not isinstance(ntype, str) or not ntype:
            raise SchemaViolation(f"{where}: type must be a non-empty string")
        code = rn.get("code", "")
        if not isinstance(code, str):
            raise SchemaViolation(f"{where}: code must be a string")
        line = _opt_int(rn.get("line"), where + ".line")
        is_stmt = rn.get("is_statement", False)
        if not isinstance(is_stmt, bool):
            raise SchemaViolation(f"{where}: is_statement must be boolean")
        orig = _opt_int(rn.get("orig_id"), where + ".orig_id")
        nodes.append(Node(nid, ntype, code, line, is_stmt, orig))

    edges = []
    for k, re_ in enumerate(raw_edges):
        where = f"edges[{k}]"
        if not isinstance(re_, dict):
            raise SchemaViolation(f"{where}: expected object")
        src = _opt_int(_require(re_, "src", where), where + ".src")
        dst = _opt_int(_require(re_, "dst", where), where + ".dst")
        kind = _require(re_, "kind", where)
        if not isinstance(kind, str) or not is_valid_kind(kind):
            raise SchemaViolation(f"{where}: bad edge kind {kind!r}")
        elabel = re_.get("label")
        if elabel is not None and not isinstance(elabel, str):
            raise SchemaViolation(f"{where}: label must be a string or null")
        edges.append(Edge(src, dst, kind, elabel))

    return build_graph(nodes, edges, function, label, bool(doc.get("shared_leaves", False)))


def parse_graph(text: Union[bytes, str]) -> CodeStructureGraph:
    """Parse one graph document.  Raises MalformedJson, SchemaViolation or a GraphError."""
    try:
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    return graph_from_document(doc)


def graph_to_document(g: CodeStructureGraph) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "function": g.function_name,
        "label": g.label,
        "nodes": [],
        "edges": [],
    }
    if g.shared_leaves:
        doc["shared_leaves"] = True
    for nd in g.nodes:
        rec = {"id": nd.id, "type": nd.node_type, "code": nd.code, "line": nd.line,
               "is_statement": nd.is_statement}
        if nd.orig_id is not None and nd.orig_id != nd.id:
            rec["orig_id"] = nd.orig_id
        doc["nodes"].append(rec)
    for e in g.edges:
        doc["edges"].append({"src": e.src, "dst": e.dst, "kind": e.kind, "label": e.label})
    return doc


def serialize_graph(g: CodeStructureGraph) -> bytes:
    """Byte-stable encoding: nodes by id, edges in insertion order."""
    return json.dumps(graph_to_document(g), ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def write_graph(g: CodeStructureGraph, path: Union[str, os.PathLike]) -> None:
    Path(path).write_bytes(serialize_graph(g))


def read_graph(path: Union[str, os.PathLike]) -> CodeStructureGraph:
    return parse_graph(Path(path).read_bytes())


@dataclass
class Corpus:
    graphs: list[CodeStructureGraph]
    names: list[str] = field(default_factory=list)
    provenance: str = ""
    errors: list[tuple[str, str]] = field(default_factory=list)
    # optional per-graph ground truth (planted motif statement id), keyed by name
    motifs: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    @property
    def labels(self) -> list[Optional[int]]:
        return [g.label for g in self.graphs]

    def subset(self, indices) -> "Corpus":
        idx = list(indices)
        names = [self.names[i] for i in idx] if self.names else []
        motifs = {n: self.motifs[n] for n in names if n in self.motifs}
        return Corpus([self.graphs[i] for i in idx], names, self.provenance, [], motifs)

    def summary(self) -> str:
        return f"{len(self.graphs)} graphs loaded from {self.provenance or '<memory>'}, {len(self.errors)} errors"


MOTIF_FILE = "ground_truth.json"


def _load_one(path: Path):
    try:
        return path.name, read_graph(path), None
    except (MalformedJson, SchemaViolation, GraphError, OSError) as exc:
        return path.name, None, f"{type(exc).__name__}: {exc}"


def load_corpus(path: Union[str, os.PathLike], jobs: int = 1) -> Corpus:
    """Load every ``*.json`` graph in a flat directory.

    Files that fail to parse are recorded in ``Corpus.errors``.  A
    ``ground_truth.json`` sidecar (written by the synthetic generator) is read
    into ``Corpus.motifs`` rather than parsed as a graph.
    """
    root = Path(path)
    files = sorted(p for p in root.glob("*.json") if p.name != MOTIF_FILE)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(_load_one, files))
    else:
        results = [_load_one(p) for p in files]
    corpus = Corpus([], [], str(root))
    for name, g, err in results:
        if err is not None:
            logger.warning("skipping %s: %s", name, err)
            corpus.errors.append((name, err))
        else:
            corpus.graphs.append(g)
            corpus.names.append(name)
    if not corpus.graphs:
        raise EmptyCorpus(f"no valid graphs in {root}")
    motif_path = root / MOTIF_FILE
    if motif_path.exists():
        corpus.motifs = {k: int(v) for k, v in json.loads(motif_path.read_text()).items()}
    return corpus


def write_corpus(corpus: Corpus, path: Union[str, os.PathLike]) -> list[Path]:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    names = corpus.names or [f"graph_{i:05d}.json" for i in range(len(corpus.graphs))]
    written = []
    for name, g in zip(names, corpus.graphs):
        p = root / name
        write_graph(g, p)
        written.append(p)
    if corpus.motifs:
        (root / MOTIF_FILE).write_text(json.dumps(corpus.motifs, indent=1, sort_keys=True))
    return written
