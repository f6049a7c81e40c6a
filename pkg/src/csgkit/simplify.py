"""Type-based (TGS) and variable-based (VGS) graph simplification.

TGS walks every AST breadth-first and folds a child into its parent whenever
the ``(parent type, child type)`` pair is listed in a :class:`MergeRuleTable`;
the child's own children are re-parented in place and examined against the
same parent again.  VGS then contracts identifier leaves that share the same
variable name onto their first occurrence.  Both phases re-target CFG/DFG/NCS
edges of removed nodes onto the absorbing node.
"""
from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .graph import AST, CodeStructureGraph, Edge, Node, build_graph

WILDCARD = "*"
TGS = "TGS"
VGS = "VGS"


@dataclass(frozen=True)
class MergeRule:
    ptype: str
    ctype: str
    require_equal_code: bool = False

    def __post_init__(self):
        if not self.ptype or not self.ctype:
            raise ValueError("ptype and ctype must be non-empty")

    def matches(self, parent: Node, child: Node) -> bool:
        if parent.node_type != self.ptype:
            return False
        if self.ctype != WILDCARD and child.node_type != self.ctype:
            return False
        return not self.require_equal_code or parent.code.strip() == child.code.strip()


class MergeRuleTable:
    """Ordered, duplicate-free list of merge rules."""

    def __init__(self, rules: Iterable[MergeRule] = ()):
        self.rules: tuple[MergeRule, ...] = tuple(rules)
        pairs = [(r.ptype, r.ctype) for r in self.rules]
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate (ptype, ctype) pair in rule table")

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __eq__(self, other):
        return isinstance(other, MergeRuleTable) and self.rules == other.rules

    def __repr__(self):
        return f"MergeRuleTable({list(self.rules)!r})"

    def to_json(self) -> list[dict]:
        return [{"ptype": r.ptype, "ctype": r.ctype, "require_equal_code": r.require_equal_code}
                for r in self.rules]

    @classmethod
    def from_json(cls, data: Sequence[dict]) -> "MergeRuleTable":
        if not isinstance(data, list):
            raise ValueError("rule table must be a JSON array")
        return cls(MergeRule(d["ptype"], d["ctype"], bool(d.get("require_equal_code", False)))
                   for d in data)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "MergeRuleTable":
        return cls.from_json(json.loads(Path(path).read_text()))


# Rule numbering follows the statement categories: 1 expression statement,
# 2 identifier declaration, 3 condition, 4 for-init, 5-7 function calls.
DEFAULT_RULES = MergeRuleTable([
    MergeRule("ExpressionStatement", "Expression"),
    MergeRule("IdentifierDeclStatement", "IdentifierDecl"),
    MergeRule("Condition", "Expression"),
    MergeRule("ForInit", "Expression"),
    MergeRule("CallExpression", "ArgumentList"),
    MergeRule("Argument", WILDCARD, require_equal_code=True),
    MergeRule("Callee", "Identifier"),
])

DEFAULT_IDENTIFIER_TYPES = frozenset({"Identifier"})


def match_rule(table: MergeRuleTable, parent: Node, child: Node) -> Optional[int]:
    """Index of the first rule that folds ``child`` into ``parent``, else None."""
    for i, rule in enumerate(table.rules):
        if rule.matches(parent, child):
            return i
    return None


@dataclass(frozen=True)
class MergeEvent:
    kept: int
    removed: int
    phase: str
    rule_index: Optional[int] = None


@dataclass
class SimplificationTrace:
    """Merge log of one simplification run.

    Ids in ``events`` refer to the input graph of the run.  ``survivors[k]`` is
    the input id of output node ``k``.
    """

    num_input_nodes: int
    events: list[MergeEvent] = field(default_factory=list)
    survivors: tuple[int, ...] = ()

    def representatives(self) -> list[int]:
        """Map every input node id to the output node id that absorbed it."""
        absorbed_by = {ev.removed: ev.kept for ev in self.events}
        out_pos = {orig: k for k, orig in enumerate(self.survivors)}
        reps = []
        for v in range(self.num_input_nodes):
            u = v
            while u in absorbed_by:
                u = absorbed_by[u]
            reps.append(out_pos[u])
        return reps

    def removed(self) -> list[int]:
        return [ev.removed for ev in self.events]

    def __eq__(self, other):
        return (isinstance(other, SimplificationTrace)
                and self.num_input_nodes == other.num_input_nodes
                and self.events == other.events
                and tuple(self.survivors) == tuple(other.survivors))


def _rebuild(g: CodeStructureGraph, rep: list[int], ast_slots: dict[int, list[Edge]],
             shared_leaves: bool) -> tuple[CodeStructureGraph, tuple[int, ...]]:
    """Assemble the contracted graph.

    ``rep[v]`` is the surviving input node that absorbs ``v``.  Original AST
    edge ``i`` is replaced by ``ast_slots[i]`` (possibly empty, possibly
    several edges); every other edge is re-targeted through ``rep``.  Parallel
    duplicates are dropped, keeping the first.
    """
    survivors = tuple(v for v in range(g.num_nodes) if rep[v] == v)
    new_id = {v: k for k, v in enumerate(survivors)}
    nodes = [Node(new_id[v], g.nodes[v].node_type, g.nodes[v].code, g.nodes[v].line,
                  g.nodes[v].is_statement, g.nodes[v].orig_id) for v in survivors]
    seen = set()
    edges = []
    for i, e in enumerate(g.edges):
        mapped = ast_slots.get(i, ()) if e.kind == AST else (e,)
        for m in mapped:
            src, dst = new_id[rep[m.src]], new_id[rep[m.dst]]
            if m.kind == AST and src == dst:
                continue
            key = (src, dst, m.kind, m.label)
            if key not in seen:
                seen.add(key)
                edges.append(Edge(src, dst, m.kind, m.label))
    out = build_graph(nodes, edges, g.function_name, g.label, shared_leaves)
    return out, survivors


def tgs(g: CodeStructureGraph, table: MergeRuleTable = DEFAULT_RULES
        ) -> tuple[CodeStructureGraph, SimplificationTrace]:
    """Type-based simplification: fold rule-matching AST children into parents."""
    n = g.num_nodes
    # (edge index, edge) so each surviving child edge can be put back in the slot
    # of the original edge it descends from
    child_edges: list[list[tuple[int, Edge]]] = [[] for _ in range(n)]
    for i, e in enumerate(g.edges):
        if e.kind == AST:
            child_edges[e.src].append((i, e))

    rep = list(range(n))
    events: list[MergeEvent] = []
    slots: dict[int, list[Edge]] = {}
    visited = [False] * n

    for root in g.ast_roots():
        queue = deque([root])
        visited[root] = True
        while queue:
            u = queue.popleft()
            pending = deque(child_edges[u])
            while pending:
                slot, e = pending.popleft()
                v = e.dst
                ri = match_rule(table, g.nodes[u], g.nodes[v]) if rep[v] == v else None
                if ri is not None:
                    rep[v] = u
                    events.append(MergeEvent(u, v, TGS, ri))
                    # grandchildren take v's place and are checked against u next
                    pending.extendleft(reversed([(slot, Edge(u, ge.dst, ge.kind, ge.label))
                                                 for _, ge in child_edges[v]]))
                else:
                    slots.setdefault(slot, []).append(Edge(u, v, e.kind, e.label))
                    if not visited[v]:
                        visited[v] = True
                        queue.append(v)

    for v in range(n):
        u = v
        while rep[u] != u:
            u = rep[u]
        rep[v] = u

    out, survivors = _rebuild(g, rep, slots, g.shared_leaves)
    return out, SimplificationTrace(n, events, survivors)


def vgs(g: CodeStructureGraph, identifier_types: Iterable[str] = DEFAULT_IDENTIFIER_TYPES
        ) -> tuple[CodeStructureGraph, SimplificationTrace]:
    """Variable-based simplification: contract equal identifier leaves."""
    ident = frozenset(identifier_types)
    n = g.num_nodes
    rep = list(range(n))
    events: list[MergeEvent] = []
    first: dict[tuple[str, str], int] = {}
    for v in g.ast_leaf_nodes():
        nd = g.nodes[v]
        if nd.node_type not in ident:
            continue
        # keyed on type as well as code so a merged leaf never changes type under
        # any of its new parents (keeps gs idempotent with custom identifier sets)
        key = (nd.node_type, nd.code)
        if key in first:
            rep[v] = first[key]
            events.append(MergeEvent(first[key], v, VGS))
        else:
            first[key] = v
    slots = {i: [e] for i, e in enumerate(g.edges) if e.kind == AST}
    out, survivors = _rebuild(g, rep, slots, g.shared_leaves or bool(events))
    return out, SimplificationTrace(n, events, survivors)


def compose_traces(first: SimplificationTrace, second: SimplificationTrace) -> SimplificationTrace:
    """Chain two traces, expressing every id in the first run's input numbering."""
    to_orig = first.survivors
    events = list(first.events)
    for ev in second.events:
        events.append(MergeEvent(to_orig[ev.kept], to_orig[ev.removed], ev.phase, ev.rule_index))
    survivors = tuple(to_orig[k] for k in second.survivors)
    return SimplificationTrace(first.num_input_nodes, events, survivors)


def gs(g: CodeStructureGraph, table: MergeRuleTable = DEFAULT_RULES,
       identifier_types: Iterable[str] = DEFAULT_IDENTIFIER_TYPES
       ) -> tuple[CodeStructureGraph, SimplificationTrace]:
    """Full simplification: TGS followed by VGS."""
    g1, t1 = tgs(g, table)
    g2, t2 = vgs(g1, identifier_types)
    return g2, compose_traces(t1, t2)


PHASES = {"tgs": tgs, "vgs": lambda g, table=DEFAULT_RULES: vgs(g), "gs": gs}
