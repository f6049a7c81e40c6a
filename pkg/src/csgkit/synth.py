"""Synthetic Joern-style function graphs for desk-scale experiments.

Every graph is a list of statement subtrees (parameters, declarations,
assignments, calls, conditionals, loops, returns) joined by a CFG chain over
statements, DFG def-use edges labelled with the variable name, and NCS edges
between consecutive AST leaves.  Vulnerable graphs contain an unchecked
``strcpy(buf, <parameter>)`` call reached by a DFG edge from the parameter;
benign graphs contain look-alikes (copies from literals, bounded copies, or
guarded copies) but never the motif.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import AST, CFG, DFG, NCS, CodeStructureGraph, Edge, Node, build_graph
from .io import Corpus

MIN_NODES = 10
MAX_NODES = 80

_VARS = ["len", "count", "idx", "size", "total", "offset", "flag", "ret", "tmp", "val", "pos", "limit"]
_BUFS = ["buf", "dest", "name", "path", "line", "out"]
_PARAMS = ["src", "input", "data", "str", "arg", "msg"]
_SAFE_CALLS = ["printf", "free", "log_msg", "memset", "puts", "close"]


@dataclass
class _Builder:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    statements: list[int] = field(default_factory=list)  # in source order
    leaves: list[int] = field(default_factory=list)      # in source order
    line: int = 1

    def node(self, ntype: str, code: str, parent: Optional[int] = None, stmt: bool = False) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, ntype, code, self.line, stmt))
        if parent is not None:
            self.edges.append(Edge(parent, nid, AST))
        if stmt:
            self.statements.append(nid)
        return nid

    def leaf(self, ntype: str, code: str, parent: int) -> int:
        nid = self.node(ntype, code, parent)
        self.leaves.append(nid)
        return nid

    def call(self, fn: str, args: list[str], parent: Optional[int], stmt_code: Optional[str] = None,
             literal_args: frozenset = frozenset()) -> int:
        text = f"{fn}({', '.join(args)})"
        st = self.node("ExpressionStatement", stmt_code or text + ";", parent, stmt=True)
        ce = self.node("CallExpression", text, st)
        callee = self.node("Callee", fn, ce)
        self.leaf("Identifier", fn, callee)
        al = self.node("ArgumentList", ", ".join(args), ce)
        for a in args:
            arg = self.node("Argument", a, al)
            kind = "PrimaryExpression" if a in literal_args else "Identifier"
            self.leaf(kind, a, arg)
        self.line += 1
        return st


class _FunctionGen:
    def __init__(self, rng: np.random.Generator, vulnerable: bool):
        self.rng = rng
        self.vulnerable = vulnerable
        self.b = _Builder()
        self.defs: dict[str, int] = {}       # variable -> defining statement
        self.uses: list[tuple[int, str]] = []
        self.params: list[str] = []
        self.locals: list[str] = []
        self.buffers: list[str] = []
        self.motif: Optional[int] = None

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def use(self, stmt: int, *names: str):
        for n in names:
            if n in self.defs:
                self.uses.append((stmt, n))

    # statement templates -------------------------------------------------
    def parameter(self, name: str, ctype: str):
        b = self.b
        st = b.node("Parameter", f"{ctype} {name}", stmt=True)
        b.leaf("ParameterType", ctype, st)
        b.leaf("Identifier", name, st)
        self.defs[name] = st
        self.params.append(name)

    def declare_buffer(self):
        b = self.b
        name = self.pick([x for x in _BUFS if x not in self.buffers] or _BUFS)
        size = int(self.rng.choice([16, 32, 64, 128]))
        st = b.node("IdentifierDeclStatement", f"char {name}[{size}];", stmt=True)
        decl = b.node("IdentifierDecl", f"{name}[{size}]", st)
        b.leaf("IdentifierDeclType", f"char [ {size} ]", decl)
        b.leaf("Identifier", name, decl)
        b.line += 1
        self.defs[name] = st
        if name not in self.buffers:
            self.buffers.append(name)

    def declare_int(self):
        b = self.b
        name = self.pick(_VARS)
        rhs = self.pick(self.locals) if self.locals and self.rng.random() < 0.5 else None
        if rhs and rhs != name:
            st = b.node("IdentifierDeclStatement", f"int {name} = {rhs} + 1;", stmt=True)
            decl = b.node("IdentifierDecl", f"{name} = {rhs} + 1", st)
            b.leaf("IdentifierDeclType", "int", decl)
            b.leaf("Identifier", name, decl)
            asg = b.node("AssignmentExpression", f"{name} = {rhs} + 1", decl)
            b.leaf("Identifier", name, asg)
            add = b.node("AdditiveExpression", f"{rhs} + 1", asg)
            b.leaf("Identifier", rhs, add)
            b.leaf("PrimaryExpression", "1", add)
            self.use(st, rhs)
        else:
            val = str(int(self.rng.integers(0, 100)))
            st = b.node("IdentifierDeclStatement", f"int {name} = {val};", stmt=True)
            decl = b.node("IdentifierDecl", f"{name} = {val}", st)
            b.leaf("IdentifierDeclType", "int", decl)
            b.leaf("Identifier", name, decl)
            asg = b.node("AssignmentExpression", f"{name} = {val}", decl)
            b.leaf("Identifier", name, asg)
            b.leaf("PrimaryExpression", val, asg)
        b.line += 1
        self.defs[name] = st
        if name not in self.locals:
            self.locals.append(name)

    def assign(self):
        if not self.locals:
            return self.declare_int()
        b = self.b
        lhs, rhs = self.pick(self.locals), self.pick(self.locals)
        op = self.pick(["*", "+", "-"])
        k = str(int(self.rng.integers(1, 9)))
        text = f"{lhs} = {rhs} {op} {k}"
        st = b.node("ExpressionStatement", text + ";", stmt=True)
        ex = b.node("Expression", text, st)
        b.leaf("Identifier", lhs, ex)
        ar = b.node("MultiplicativeExpression" if op == "*" else "AdditiveExpression", f"{rhs} {op} {k}", ex)
        b.leaf("Identifier", rhs, ar)
        b.leaf("PrimaryExpression", k, ar)
        b.line += 1
        self.use(st, rhs)
        self.defs[lhs] = st

    def safe_call(self):
        fn = self.pick(_SAFE_CALLS)
        pool = self.locals + self.buffers
        args = [self.pick(pool)] if pool else ['"done"']
        st = self.b.call(fn, args, None, literal_args=frozenset({'"done"'}))
        self.use(st, *args)

    def condition(self):
        if not self.locals:
            return self.declare_int()
        b = self.b
        v = self.pick(self.locals)
        k = str(int(self.rng.integers(0, 50)))
        st = b.node("IfStatement", f"if ( {v} > {k} )", stmt=True)
        cond = b.node("Condition", f"{v} > {k}", st)
        ex = b.node("Expression", f"{v} > {k}", cond)
        b.leaf("Identifier", v, ex)
        b.leaf("PrimaryExpression", k, ex)
        b.line += 1
        self.use(st, v)
        inner = self.b.call("puts", [f'"{v}"'], st, literal_args=frozenset({f'"{v}"'}))
        del inner

    def loop(self):
        if not self.locals:
            return self.declare_int()
        b = self.b
        bound = self.pick(self.locals)
        st = b.node("ForStatement", f"for ( i = 0 ; i < {bound} ; i ++ )", stmt=True)
        init = b.node("ForInit", "i = 0", st)
        ex = b.node("Expression", "i = 0", init)
        b.leaf("Identifier", "i", ex)
        b.leaf("PrimaryExpression", "0", ex)
        cond = b.node("Condition", f"i < {bound}", st)
        ce = b.node("Expression", f"i < {bound}", cond)
        b.leaf("Identifier", "i", ce)
        b.leaf("Identifier", bound, ce)
        inc = b.node("PostIncDecOperationExpression", "i ++", st)
        b.leaf("Identifier", "i", inc)
        b.leaf("IncDec", "++", inc)
        b.line += 1
        self.use(st, bound)

    def copy_statement(self, kind: str):
        """``kind``: motif | literal | bounded | guarded."""
        b = self.b
        if not self.buffers:
            self.declare_buffer()
        buf = self.pick(self.buffers)
        param = self.pick(self.params)
        if kind == "motif":
            st = b.call("strcpy", [buf, param], None)
            self.use(st, buf, param)
            self.motif = st
        elif kind == "literal":
            lit = self.pick(['"default"', '"none"', '"/tmp/x"', '"guest"'])
            st = b.call("strcpy", [buf, lit], None, literal_args=frozenset({lit}))
            self.use(st, buf)
        elif kind == "bounded":
            fn = self.pick(["strncpy", "snprintf_copy", "strlcpy"])
            st = b.call(fn, [buf, param, f"sizeof({buf})"], None,
                        literal_args=frozenset({f"sizeof({buf})"}))
            self.use(st, buf, param)
        else:
            guard = b.node("IfStatement", f"if ( strlen ( {param} ) < sizeof ( {buf} ) )", stmt=True)
            cond = b.node("Condition", f"strlen ( {param} ) < sizeof ( {buf} )", guard)
            rel = b.node("RelationalExpression", f"strlen ( {param} ) < sizeof ( {buf} )", cond)
            sl = b.node("CallExpression", f"strlen ( {param} )", rel)
            callee = b.node("Callee", "strlen", sl)
            b.leaf("Identifier", "strlen", callee)
            al = b.node("ArgumentList", param, sl)
            arg = b.node("Argument", param, al)
            b.leaf("Identifier", param, arg)
            b.leaf("SizeofExpression", f"sizeof ( {buf} )", rel)
            b.line += 1
            self.use(guard, param, buf)
            st = b.call("strcpy", [buf, param], guard)
            self.use(st, buf, param)

    def ret(self):
        b = self.b
        if self.locals:
            v = self.pick(self.locals)
            st = b.node("ReturnStatement", f"return {v} ;", stmt=True)
            b.leaf("Identifier", v, st)
            self.use(st, v)
        else:
            st = b.node("ReturnStatement", "return 0 ;", stmt=True)
            b.leaf("PrimaryExpression", "0", st)
        b.line += 1

    # assembly ------------------------------------------------------------
    def generate(self, target: int) -> tuple[list[Node], list[Edge]]:
        nparams = int(self.rng.integers(1, 3))
        names = list(self.rng.permutation(_PARAMS))[:nparams]
        for name in names:
            self.parameter(str(name), self.pick(["char *", "const char *"]))
        if self.rng.random() < 0.5:
            self.parameter("n", "int")
        self.declare_buffer()
        copy_kind = "motif" if self.vulnerable else self.pick(["literal", "bounded", "guarded", "none"])
        copy_at = None
        fillers = [self.declare_int, self.assign, self.safe_call, self.condition, self.loop,
                   self.declare_buffer]
        weights = np.array([3, 3, 3, 2, 1, 1], dtype=float)
        weights /= weights.sum()
        while len(self.b.nodes) < target - 14:
            if copy_at is None and self.rng.random() < 0.25 and copy_kind != "none":
                copy_at = len(self.b.nodes)
                self.copy_statement(copy_kind)
                continue
            fillers[int(self.rng.choice(len(fillers), p=weights))]()
        if copy_at is None and copy_kind != "none":
            self.copy_statement(copy_kind)
        self.ret()
        return self.b.nodes, self._edges()

    def _edges(self) -> list[Edge]:
        b = self.b
        edges = list(b.edges)
        stmts = b.statements
        for a, c in zip(stmts, stmts[1:]):
            edges.append(Edge(a, c, CFG))
        for st, name in self.uses:
            src = self.defs.get(name)
            if src is not None and src != st:
                edges.append(Edge(src, st, DFG, name))
        for a, c in zip(b.leaves, b.leaves[1:]):
            edges.append(Edge(a, c, NCS))
        # def-use edges must point forward in source order; drop the rest
        out, seen = [], set()
        for e in edges:
            if e.kind == DFG and e.src > e.dst:
                continue
            if e.key() not in seen:
                seen.add(e.key())
                out.append(e)
        return out


def generate_graph(rng: np.random.Generator, vulnerable: bool, name: str = "f"
                   ) -> tuple[CodeStructureGraph, Optional[int]]:
    """One synthetic function and the id of its planted motif statement (None if benign)."""
    for _ in range(100):
        target = int(rng.integers(MIN_NODES + 8, MAX_NODES + 1))
        gen = _FunctionGen(rng, vulnerable)
        nodes, edges = gen.generate(target)
        if MIN_NODES <= len(nodes) <= MAX_NODES:
            g = build_graph(nodes, edges, name, 1 if vulnerable else 0)
            return g, gen.motif
    raise RuntimeError("could not generate a graph within the node budget")


def generate_synthetic_corpus(n: int, seed: int = 0) -> Corpus:
    """``n`` graphs, half of them (rounded down) vulnerable, in shuffled order."""
    if n < 2:
        raise ValueError("need at least two graphs")
    rng = np.random.default_rng(seed)
    labels = np.array([1] * (n // 2) + [0] * (n - n // 2))
    rng.shuffle(labels)
    corpus = Corpus([], [], f"synthetic(n={n}, seed={seed})")
    for i, lab in enumerate(labels):
        name = f"graph_{i:05d}.json"
        g, motif = generate_graph(rng, bool(lab), f"func_{i}")
        corpus.graphs.append(g)
        corpus.names.append(name)
        if motif is not None:
            corpus.motifs[name] = motif
    return corpus
