"""In-memory code structure graphs.

A :class:`CodeStructureGraph` is an immutable directed multigraph of typed
nodes (one function's AST, CFG, DFG and NCS views merged together).  Node ids
are dense ``0..|V|-1``; the exporter's original ids survive in
:attr:`Node.orig_id`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence


AST = "AST"
CFG = "CFG"
DFG = "DFG"
NCS = "NCS"
BASE_KINDS = (AST, CFG, DFG, NCS)

VULNERABLE = 1
NON_VULNERABLE = 0


class GraphError(ValueError):
    """Base class for graph validation failures."""


class DanglingEdge(GraphError):
    pass


class AstCycle(GraphError):
    pass


class AstMultiParent(GraphError):
    pass


class UnknownNode(GraphError, KeyError):
    pass


class DuplicateNode(GraphError):
    pass


class BadEdgeKind(GraphError):
    pass


def is_valid_kind(kind: str) -> bool:
    """Edge kinds are the four base kinds or an ``X-<tag>`` extension."""
    return kind in BASE_KINDS or (kind.startswith("X-") and len(kind) > 2)


@dataclass(frozen=True)
class Node:
    id: int
    node_type: str
    code: str = ""
    line: Optional[int] = None
    is_statement: bool = False
    orig_id: Optional[int] = None


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str
    label: Optional[str] = None

    def key(self):
        return (self.src, self.dst, self.kind, self.label)


@dataclass(frozen=True, eq=True)
class CodeStructureGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    function_name: str = ""
    label: Optional[int] = None
    # True once leaves may have several AST parents (after VGS).
    shared_leaves: bool = False
    _children: tuple = field(default=(), compare=False, repr=False)
    _parents: tuple = field(default=(), compare=False, repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _check(self, u: int) -> None:
        if not (0 <= u < len(self.nodes)):
            raise UnknownNode(u)

    def ast_children(self, u: int) -> list[int]:
        self._check(u)
        return list(self._children[u])

    def ast_parents(self, u: int) -> list[int]:
        self._check(u)
        return list(self._parents[u])

    def ast_leaf_nodes(self) -> list[int]:
        return [i for i, ch in enumerate(self._children) if not ch]

    def ast_roots(self) -> list[int]:
        return [i for i, ps in enumerate(self._parents) if not ps]

    def edge_kinds(self) -> list[str]:
        return sorted({e.kind for e in self.edges})

    def __len__(self) -> int:
        return len(self.nodes)


def ast_children(g: CodeStructureGraph, u: int) -> list[int]:
    """AST children of ``u`` in edge insertion order."""
    return g.ast_children(u)


def ast_leaf_nodes(g: CodeStructureGraph) -> list[int]:
    """Nodes without outgoing AST edges, in id order."""
    return g.ast_leaf_nodes()


def _ast_adjacency(n: int, edges: Sequence[Edge]):
    children: list[list[int]] = [[] for _ in range(n)]
    parents: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        if e.kind == AST:
            children[e.src].append(e.dst)
            parents[e.dst].append(e.src)
    return children, parents


def _check_acyclic(n: int, children: list[list[int]], parents: list[list[int]]) -> None:
    indeg = [len(p) for p in parents]
    queue = deque(i for i in range(n) if indeg[i] == 0)
    seen = 0
    while queue:
        u = queue.popleft()
        seen += 1
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if seen != n:
        raise AstCycle("AST edges contain a cycle")


def build_graph(
    nodes: Iterable[Node],
    edges: Iterable[Edge],
    function_name: str = "",
    label: Optional[int] = None,
    shared_leaves: bool = False,
) -> CodeStructureGraph:
    """Validate and re-index a graph.

    Node ids in the input may be arbitrary unique integers; the position in
    ``nodes`` becomes the dense id and the input id is kept as ``orig_id``
    (unless one is already set).  Edges refer to input ids.

    With ``shared_leaves`` set, AST leaves may have several AST parents (the
    shape VGS produces); inner AST nodes must still have at most one.
    """
    nodes = list(nodes)
    edges = list(edges)
    remap: dict[int, int] = {}
    dense: list[Node] = []
    for new_id, nd in enumerate(nodes):
        if nd.id in remap:
            raise DuplicateNode(f"duplicate node id {nd.id}")
        if not nd.node_type:
            raise GraphError(f"node {nd.id} has an empty node_type")
        remap[nd.id] = new_id
        orig = nd.orig_id if nd.orig_id is not None else nd.id
        dense.append(Node(new_id, nd.node_type, nd.code, nd.line, bool(nd.is_statement), orig))

    new_edges: list[Edge] = []
    for e in edges:
        if e.src not in remap or e.dst not in remap:
            raise DanglingEdge(f"edge {e.src}->{e.dst} references an unknown node")
        if not is_valid_kind(e.kind):
            raise BadEdgeKind(f"bad edge kind {e.kind!r}")
        s, d = remap[e.src], remap[e.dst]
        if e.kind == AST and s == d:
            raise AstCycle(f"AST self-loop on node {e.src}")
        new_edges.append(Edge(s, d, e.kind, e.label))

    n = len(dense)
    children, parents = _ast_adjacency(n, new_edges)
    _check_acyclic(n, children, parents)
    for v, ps in enumerate(parents):
        if len(ps) > 1 and not (shared_leaves and not children[v]):
            raise AstMultiParent(f"node {nodes[v].id} has {len(ps)} AST parents")

    return CodeStructureGraph(
        nodes=tuple(dense),
        edges=tuple(new_edges),
        function_name=function_name,
        label=label,
        shared_leaves=shared_leaves,
        _children=tuple(tuple(c) for c in children),
        _parents=tuple(tuple(p) for p in parents),
    )


def relabel(g: CodeStructureGraph, perm: Sequence[int]) -> CodeStructureGraph:
    """Return ``g`` with node ``i`` moved to position ``perm[i]``."""
    n = g.num_nodes
    if sorted(perm) != list(range(n)):
        raise ValueError("perm must be a permutation of range(|V|)")
    order = [0] * n
    for old, new in enumerate(perm):
        order[new] = old
    nodes = [Node(i, g.nodes[old].node_type, g.nodes[old].code, g.nodes[old].line,
                  g.nodes[old].is_statement, g.nodes[old].orig_id) for i, old in enumerate(order)]
    edges = [Edge(perm[e.src], perm[e.dst], e.kind, e.label) for e in g.edges]
    return build_graph(nodes, edges, g.function_name, g.label, g.shared_leaves)


def undirected_adjacency(g: CodeStructureGraph) -> list[list[int]]:
    """Neighbour lists over all edge kinds, ignoring direction and self-loops."""
    adj: list[set[int]] = [set() for _ in range(g.num_nodes)]
    for e in g.edges:
        if e.src != e.dst:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
    return [sorted(a) for a in adj]
