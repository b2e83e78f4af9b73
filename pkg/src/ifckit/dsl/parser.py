"""S-expression reader and parser for client programs.

A source file is a sequence of ``(def ...)`` forms.  A leading comment
``; lattice: NAME`` selects the label lattice (default ``trilevel``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .. import lattice as lat
from ..lattice import LatticeSpec
from . import syntax as S


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass
class Atom:
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: list
    line: int
    col: int


_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")
MAX_NESTING = 200  # deeper input would exhaust the recursive passes


def read_sexprs(text: str) -> list:
    """Tokenize and read all top-level data."""
    stack: list[SList] = []
    out: list = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches any character
            raise ParseError("unreadable input", line, pos - line_start + 1)
        tok = m.group()
        col = pos - line_start + 1
        if tok == "(":
            if len(stack) >= MAX_NESTING:
                raise ParseError(f"nesting deeper than {MAX_NESTING}", line, col)
            stack.append(SList([], line, col))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            (stack[-1].items if stack else out).append(done)
        elif not tok[0].isspace() and tok[0] != ";":
            atom = Atom(tok, line, col)
            (stack[-1].items if stack else out).append(atom)
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    if stack:
        s = stack[-1]
        raise ParseError("unclosed '('", s.line, s.col)
    return out


_LATTICE_PRAGMA = re.compile(r"^\s*;+\s*lattice:\s*(\S+)", re.MULTILINE)
_INT = re.compile(r"-?\d+\Z")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_'!?\-]*\Z")

KEYWORDS = frozenset(
    {
        "def", "let", "if", "canflow", "join", "label", "label-unchecked", "unlabel", "tolabeled",
        "getcurrent", "call", "nil", "cons", "match", "pair", "fst", "snd", "eraselabeled",
        "setcurrent!", "true", "false", "unit", "cur", "and", "or", "not", ":pre",
    }
)


def lattice_pragma(text: str) -> str | None:
    m = _LATTICE_PRAGMA.search(text)
    return m.group(1) if m else None


def parse(text: str, lattice: LatticeSpec | str | None = None, *, allow_tcb: bool = False) -> S.Program:
    """Parse a program.

    ``lattice`` overrides the source pragma.  ``allow_tcb`` admits the trusted
    ``setcurrent!`` form, which client programs may not use.
    """
    if lattice is None:
        lattice = lattice_pragma(text) or "trilevel"
    spec = lat.resolve(lattice) if isinstance(lattice, str) else lattice
    return _Parser(spec, allow_tcb).program(read_sexprs(text))


class _Parser:
    def __init__(self, spec: LatticeSpec, allow_tcb: bool):
        self.spec = spec
        self.allow_tcb = allow_tcb
        self.positions: dict[int, tuple[int, int]] = {}
        self.next_site = 0
        self.sites: dict[int, tuple[int, int]] = {}

    # -- helpers ---------------------------------------------------------

    def at(self, node, term):
        self.positions[id(term)] = (node.line, node.col)
        return term

    def label_atom(self, text: str):
        if self.spec.is_label_name(text) or text.startswith("{"):
            try:
                return self.spec.parse_label(text)
            except ValueError:
                return None
        return None

    def binder(self, node) -> str:
        if not isinstance(node, Atom):
            raise ParseError("expected a name", node.line, node.col)
        name = node.text
        if not _NAME.match(name) or name in KEYWORDS or self.label_atom(name) is not None:
            raise ParseError(f"invalid binder name {name!r}", node.line, node.col)
        return name

    def fname(self, node) -> str:
        if not isinstance(node, Atom) or not _NAME.match(node.text) or node.text in KEYWORDS:
            raise ParseError("expected a function name", node.line, node.col)
        return node.text

    # -- top level -------------------------------------------------------

    def program(self, data: list) -> S.Program:
        if not data:
            raise ParseError("empty program", 1, 1)
        funs: list[S.FunDef] = []
        seen: dict[str, SList] = {}
        for d in data:
            f = self.defn(d)
            if f.name in seen:
                raise ParseError(f"duplicate function {f.name!r}", d.line, d.col)
            seen[f.name] = d
            funs.append(f)
        sigs = {f.name: len(f.params) for f in funs}
        for f in funs:
            for node in S.walk(f.body):
                if isinstance(node, (S.Call, S.ToLabeled)):
                    line, col = self.positions.get(id(node), (None, None))
                    if node.fname not in sigs:
                        raise ParseError(f"unknown function {node.fname!r}", line, col)
                    if len(node.args) != sigs[node.fname]:
                        raise ParseError(
                            f"{node.fname} expects {sigs[node.fname]} arguments, got {len(node.args)}", line, col
                        )
        return S.Program(tuple(funs), self.spec, self.positions)

    def defn(self, d) -> S.FunDef:
        if not isinstance(d, SList) or not d.items or not isinstance(d.items[0], Atom) or d.items[0].text != "def":
            raise ParseError("expected (def name (params) body)", d.line, d.col)
        items = d.items
        if len(items) not in (4, 6):
            raise ParseError("syntax error (arity) in def", d.line, d.col)
        name = self.fname(items[1])
        if not isinstance(items[2], SList):
            raise ParseError("expected parameter list", items[2].line, items[2].col)
        params: list[tuple[str, S.TypeExpr]] = []
        for p in items[2].items:
            if not isinstance(p, SList) or len(p.items) != 2:
                raise ParseError("expected (name Type)", p.line, p.col)
            pname = self.binder(p.items[0])
            if any(pname == q for q, _ in params):
                raise ParseError(f"duplicate parameter {pname!r}", p.line, p.col)
            params.append((pname, self.type_expr(p.items[1])))
        pre: tuple = ()
        rest = items[3:]
        if len(rest) == 3:
            if not isinstance(rest[0], Atom) or rest[0].text != ":pre":
                raise ParseError("expected :pre", rest[0].line, rest[0].col)
            pre = tuple(self.labelprop(rest[1], dict(params)))
            rest = rest[2:]
        body = self.term(rest[0], {n for n, _ in params})
        return S.FunDef(name, tuple(params), pre, body)

    def labelprop(self, node, params: dict) -> list:
        if not isinstance(node, SList) or not node.items or not isinstance(node.items[0], Atom):
            raise ParseError("expected (canflow cur l) or (and ...)", node.line, node.col)
        head = node.items[0].text
        if head == "and":
            out = []
            for sub in node.items[1:]:
                out.extend(self.labelprop(sub, params))
            return out
        if head != "canflow" or len(node.items) != 3:
            raise ParseError("precondition must be (canflow cur l)", node.line, node.col)
        lhs, rhs = node.items[1], node.items[2]
        if not isinstance(lhs, Atom) or lhs.text != "cur":
            raise ParseError("precondition must constrain cur", lhs.line, lhs.col)
        if not isinstance(rhs, Atom):
            raise ParseError("precondition bound must be a label parameter or literal", rhs.line, rhs.col)
        lab = self.label_atom(rhs.text)
        if lab is not None:
            return [self.at(rhs, S.LabelLit(lab))]
        if params.get(rhs.text) != S.LABEL:
            raise ParseError(f"{rhs.text!r} is not a Label parameter", rhs.line, rhs.col)
        return [self.at(rhs, S.Var(rhs.text))]

    def type_expr(self, node) -> S.TypeExpr:
        if isinstance(node, Atom):
            simple = {"Int": S.INT, "Bool": S.BOOL, "Unit": S.UNIT, "Label": S.LABEL}
            if node.text in simple:
                return simple[node.text]
            raise ParseError(f"unknown type {node.text!r}", node.line, node.col)
        items = node.items
        if items and isinstance(items[0], Atom):
            head = items[0].text
            if head == "Labeled" and len(items) == 2:
                return S.LabeledT(self.type_expr(items[1]))
            if head == "List" and len(items) == 2:
                return S.ListT(self.type_expr(items[1]))
            if head == "Pair" and len(items) == 3:
                return S.PairT(self.type_expr(items[1]), self.type_expr(items[2]))
        raise ParseError("malformed type", node.line, node.col)

    # -- terms -----------------------------------------------------------

    def term(self, node, scope: set[str]) -> S.Term:
        if isinstance(node, Atom):
            return self.at(node, self.atom(node, scope))
        items = node.items
        if not items or not isinstance(items[0], Atom):
            raise ParseError("expected a form", node.line, node.col)
        head = items[0].text
        args = items[1:]

        def arity(*ns):
            if len(args) not in ns:
                raise ParseError(f"syntax error (arity) in {head}", node.line, node.col)

        def sub(x, sc=scope):
            return self.term(x, sc)

        if head == "let":
            arity(3)
            name = self.binder(args[0])
            t = S.Let(name, sub(args[1]), sub(args[2], scope | {name}))
        elif head == "if":
            arity(3)
            t = S.If(sub(args[0]), sub(args[1]), sub(args[2]))
        elif head in S.PRIM_ARITY:
            arity(S.PRIM_ARITY[head])
            t = S.Prim(head, tuple(sub(a) for a in args))
        elif head == "canflow":
            arity(2)
            t = S.CanFlow(sub(args[0]), sub(args[1]))
        elif head == "join":
            arity(2)
            t = S.Join(sub(args[0]), sub(args[1]))
        elif head in ("label", "label-unchecked"):
            arity(2, 3)
            self.next_site += 1
            site = self.next_site
            if len(args) == 3:
                tag = args[2]
                if not isinstance(tag, Atom) or not re.fullmatch(r"@\d+", tag.text):
                    raise ParseError("expected @siteId", tag.line, tag.col)
                site = int(tag.text[1:])
            if site in self.sites:
                raise ParseError(f"duplicate site id @{site}", node.line, node.col)
            self.sites[site] = (node.line, node.col)
            t = S.LabelOp(sub(args[0]), sub(args[1]), site, head == "label")
        elif head == "unlabel":
            arity(1)
            t = S.Unlabel(sub(args[0]))
        elif head in ("tolabeled", "call"):
            if not args:
                raise ParseError(f"syntax error (arity) in {head}", node.line, node.col)
            fname = self.fname(args[0])
            cls = S.ToLabeled if head == "tolabeled" else S.Call
            t = cls(fname, tuple(sub(a) for a in args[1:]))
        elif head == "getcurrent":
            arity(0)
            t = S.GetCurrent()
        elif head == "nil":
            arity(0)
            t = S.Nil()
        elif head == "cons":
            arity(2)
            t = S.Cons(sub(args[0]), sub(args[1]))
        elif head == "match":
            t = self.match(node, args, scope)
        elif head == "pair":
            arity(2)
            t = S.Pair(sub(args[0]), sub(args[1]))
        elif head == "fst":
            arity(1)
            t = S.Fst(sub(args[0]))
        elif head == "snd":
            arity(1)
            t = S.Snd(sub(args[0]))
        elif head == "eraselabeled":
            arity(2)
            t = S.EraseLabeled(sub(args[0]), sub(args[1]))
        elif head == "setcurrent!":
            if not self.allow_tcb:
                raise ParseError("setcurrent! is not available to client programs", node.line, node.col)
            arity(1)
            t = S.SetCurrent(sub(args[0]))
        else:
            raise ParseError(f"unknown form {head!r}", node.line, node.col)
        return self.at(node, t)

    def match(self, node, args, scope) -> S.MatchList:
        if len(args) != 3:
            raise ParseError("syntax error (arity) in match", node.line, node.col)
        scrut = self.term(args[0], scope)
        nil_c, cons_c = args[1], args[2]
        if (
            not isinstance(nil_c, SList)
            or len(nil_c.items) != 2
            or not isinstance(nil_c.items[0], Atom)
            or nil_c.items[0].text != "nil"
        ):
            raise ParseError("expected (nil term) clause", nil_c.line, nil_c.col)
        if (
            not isinstance(cons_c, SList)
            or len(cons_c.items) != 4
            or not isinstance(cons_c.items[0], Atom)
            or cons_c.items[0].text != "cons"
        ):
            raise ParseError("expected (cons hd tl term) clause", cons_c.line, cons_c.col)
        hd = self.binder(cons_c.items[1])
        tl = self.binder(cons_c.items[2])
        if hd == tl:
            raise ParseError("match binders must differ", cons_c.line, cons_c.col)
        nil_b = self.term(nil_c.items[1], scope)
        cons_b = self.term(cons_c.items[3], scope | {hd, tl})
        return S.MatchList(scrut, nil_b, hd, tl, cons_b)

    def atom(self, node: Atom, scope: set[str]) -> S.Term:
        text = node.text
        if _INT.match(text):
            return S.IntLit(int(text))
        if text == "true":
            return S.BoolLit(True)
        if text == "false":
            return S.BoolLit(False)
        if text == "unit":
            return S.UnitLit()
        if text in scope:
            return S.Var(text)
        lab = self.label_atom(text)
        if lab is not None:
            return S.LabelLit(lab)
        raise ParseError(f"unbound variable {text!r}", node.line, node.col)
