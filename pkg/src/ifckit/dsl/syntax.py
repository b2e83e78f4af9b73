"""AST for the IFC client language.

Terms are immutable and compare structurally.  Every ``label`` node carries a
``site`` id that stays stable across printing and re-parsing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

from ..lattice import Label, LatticeSpec


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntT:
    def __str__(self):
        return "Int"


@dataclass(frozen=True)
class BoolT:
    def __str__(self):
        return "Bool"


@dataclass(frozen=True)
class UnitT:
    def __str__(self):
        return "Unit"


@dataclass(frozen=True)
class LabelT:
    def __str__(self):
        return "Label"


@dataclass(frozen=True)
class LabeledT:
    inner: "TypeExpr"

    def __str__(self):
        return f"(Labeled {self.inner})"


@dataclass(frozen=True)
class ListT:
    elem: "TypeExpr"

    def __str__(self):
        return f"(List {self.elem})"


@dataclass(frozen=True)
class PairT:
    fst: "TypeExpr"
    snd: "TypeExpr"

    def __str__(self):
        return f"(Pair {self.fst} {self.snd})"


TypeExpr = Union[IntT, BoolT, UnitT, LabelT, LabeledT, ListT, PairT]

INT, BOOL, UNIT, LABEL = IntT(), BoolT(), UnitT(), LabelT()


def contains_labeled(t: TypeExpr) -> bool:
    if isinstance(t, LabeledT):
        return True
    if isinstance(t, ListT):
        return contains_labeled(t.elem)
    if isinstance(t, PairT):
        return contains_labeled(t.fst) or contains_labeled(t.snd)
    return False


# --------------------------------------------------------------------------
# Terms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    n: int


@dataclass(frozen=True)
class BoolLit:
    b: bool


@dataclass(frozen=True)
class UnitLit:
    pass


@dataclass(frozen=True)
class LabelLit:
    label: Label


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Term"
    body: "Term"


@dataclass(frozen=True)
class If:
    cond: "Term"
    then: "Term"
    els: "Term"


PRIM_ARITY = {"+": 2, "-": 2, "*": 2, "=": 2, "<": 2, "and": 2, "or": 2, "not": 1}


@dataclass(frozen=True)
class Prim:
    op: str
    args: tuple["Term", ...]


@dataclass(frozen=True)
class CanFlow:
    lhs: "Term"
    rhs: "Term"


@dataclass(frozen=True)
class Join:
    lhs: "Term"
    rhs: "Term"


@dataclass(frozen=True)
class LabelOp:
    """``(label value lab @site)``; ``checked=False`` marks a residual site."""

    value: "Term"
    label: "Term"
    site: int
    checked: bool = True


@dataclass(frozen=True)
class Unlabel:
    arg: "Term"


@dataclass(frozen=True)
class ToLabeled:
    fname: str
    args: tuple["Term", ...]


@dataclass(frozen=True)
class GetCurrent:
    pass


@dataclass(frozen=True)
class Call:
    fname: str
    args: tuple["Term", ...]


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Cons:
    head: "Term"
    tail: "Term"


@dataclass(frozen=True)
class MatchList:
    scrut: "Term"
    nil_branch: "Term"
    hd: str
    tl: str
    cons_branch: "Term"


@dataclass(frozen=True)
class Pair:
    fst: "Term"
    snd: "Term"


@dataclass(frozen=True)
class Fst:
    arg: "Term"


@dataclass(frozen=True)
class Snd:
    arg: "Term"


@dataclass(frozen=True)
class EraseLabeled:
    """Trusted: erase a labeled value at the level given by ``level``."""

    level: "Term"
    arg: "Term"


@dataclass(frozen=True)
class SetCurrent:
    """Trusted: overwrite the current label.  Only parseable with ``tcb=True``."""

    arg: "Term"


Term = Union[
    IntLit, BoolLit, UnitLit, LabelLit, Var, Let, If, Prim, CanFlow, Join, LabelOp, Unlabel,
    ToLabeled, GetCurrent, Call, Nil, Cons, MatchList, Pair, Fst, Snd, EraseLabeled, SetCurrent,
]


def children(t: Term) -> tuple[Term, ...]:
    if isinstance(t, (IntLit, BoolLit, UnitLit, LabelLit, Var, GetCurrent, Nil)):
        return ()
    if isinstance(t, Let):
        return (t.bound, t.body)
    if isinstance(t, If):
        return (t.cond, t.then, t.els)
    if isinstance(t, (Prim, ToLabeled, Call)):
        return t.args
    if isinstance(t, (CanFlow, Join)):
        return (t.lhs, t.rhs)
    if isinstance(t, LabelOp):
        return (t.value, t.label)
    if isinstance(t, (Unlabel, Fst, Snd, SetCurrent)):
        return (t.arg,)
    if isinstance(t, Cons):
        return (t.head, t.tail)
    if isinstance(t, MatchList):
        return (t.scrut, t.nil_branch, t.cons_branch)
    if isinstance(t, Pair):
        return (t.fst, t.snd)
    if isinstance(t, EraseLabeled):
        return (t.level, t.arg)
    raise TypeError(f"not a term: {t!r}")


def walk(t: Term) -> Iterator[Term]:
    """Pre-order traversal."""
    stack = [t]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


# --------------------------------------------------------------------------
# Programs
# --------------------------------------------------------------------------

PreAtom = Union[Var, LabelLit]


@dataclass(frozen=True)
class FunDef:
    name: str
    params: tuple[tuple[str, TypeExpr], ...]
    pre: tuple[PreAtom, ...]
    body: Term

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.params)


@dataclass(frozen=True, eq=False)
class Program:
    functions: tuple[FunDef, ...]
    lattice: LatticeSpec
    # id(term) -> (line, col) for diagnostics; not part of equality
    positions: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        return self.lattice.name == other.lattice.name and self.functions == other.functions

    def __hash__(self):
        return hash((self.lattice.name, self.functions))

    def function(self, name: str) -> FunDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(f"unknown function {name!r}")

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def label_sites(self) -> list[LabelOp]:
        return [n for f in self.functions for n in walk(f.body) if isinstance(n, LabelOp)]

    def site_ids(self) -> list[int]:
        return [n.site for n in self.label_sites()]

    def callees(self, name: str) -> list[str]:
        seen: list[str] = []
        for n in walk(self.function(name).body):
            if isinstance(n, (Call, ToLabeled)) and n.fname not in seen:
                seen.append(n.fname)
        return seen

    def reachable(self, entry: str) -> list[str]:
        order, todo = [], [entry]
        while todo:
            name = todo.pop(0)
            if name in order:
                continue
            order.append(name)
            todo.extend(self.callees(name))
        return order
