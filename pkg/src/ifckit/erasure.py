"""Low-view projection: value erasers, contamination, and function erasure.

Erasing at level ``l`` replaces every payload whose tag does not flow to ``l``
by ``HOLE`` and keeps all tags, which are public.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import lattice as lat
from .dsl import syntax as S
from .dsl.typecheck import TypedProgram, typecheck
from .lattice import Label, LatticeSpec
from .ifc_runtime import IfcContext, IfcOutcome, LabeledValue, payload_tcb
from .values import HOLE, NIL, ConsV, PairV


def _spec_for(l: Label, spec: LatticeSpec | None) -> LatticeSpec:
    return spec if spec is not None else lat.resolve(l.lattice)


def erase_labeled(l: Label, lv: LabeledValue, spec: LatticeSpec | None = None) -> LabeledValue:
    spec = _spec_for(l, spec)
    if spec.can_flow(lv.tag, l):
        return LabeledValue(erase_value(l, payload_tcb(lv), spec), lv.tag)
    return LabeledValue(HOLE, lv.tag)


def erase_value(l: Label, v: Any, spec: LatticeSpec | None = None) -> Any:
    if isinstance(v, LabeledValue):
        return erase_labeled(l, v, _spec_for(l, spec))
    if isinstance(v, ConsV):
        spec = _spec_for(l, spec)
        items = [erase_value(l, x, spec) for x in v]
        out = NIL
        for x in reversed(items):
            out = ConsV(x, out)
        return out
    if isinstance(v, PairV):
        spec = _spec_for(l, spec)
        return PairV(erase_value(l, v.fst, spec), erase_value(l, v.snd, spec))
    return v


def erase_ctx(l: Label, outcome, spec: LatticeSpec | None = None) -> Any:
    """``erase(l, value)`` if the final current label flows to ``l``, else ``HOLE``.

    ``outcome`` is a normal :class:`IfcOutcome` or a ``(value, ctx)`` pair.
    """
    if isinstance(outcome, IfcOutcome):
        if not outcome.ok:
            raise ValueError("erase_ctx needs a normal outcome; compare errors directly")
        value, ctx = outcome.value, outcome.final
    else:
        value, ctx = outcome
    spec = _spec_for(l, spec)
    cur = ctx.cur if isinstance(ctx, IfcContext) else ctx
    return erase_value(l, value, spec) if spec.can_flow(cur, l) else HOLE


def get_result_view(l: Label, value: Any, ctx: IfcContext, spec: LatticeSpec | None = None) -> Any:
    """The alternative projection: package the result under the final current
    label, erase that, and read back the payload."""
    return payload_tcb(erase_labeled(l, LabeledValue(value, ctx.cur), spec))


# --------------------------------------------------------------------------
# Contamination
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContaminationRegistry:
    """Which argument positions of each strict operation absorb a hole."""

    positions: Mapping[str, frozenset[int]]

    def contaminant(self, op: str, i: int) -> bool:
        return i in self.positions.get(op, frozenset())

    def ops(self) -> list[str]:
        return sorted(self.positions)


DEFAULT_CONTAMINATION = ContaminationRegistry(
    {
        **{op: frozenset(range(n)) for op, n in S.PRIM_ARITY.items()},
        # strict destructors and label operations
        "if": frozenset({0}),
        "match": frozenset({0}),
        "fst": frozenset({0}),
        "snd": frozenset({0}),
        "canflow": frozenset({0, 1}),
        "join": frozenset({0, 1}),
        # constructors are not contaminant
        "cons": frozenset(),
        "pair": frozenset(),
    }
)

_PRIM_IMPL: dict[str, Callable] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "=": lambda a, b: a == b,
    "<": lambda a, b: a < b,
    "and": lambda a, b: a and b,
    "or": lambda a, b: a or b,
    "not": lambda a: not a,
}


def eval_hole_prim(op: str, args, registry: ContaminationRegistry = DEFAULT_CONTAMINATION):
    """Apply a primitive under hole semantics."""
    for i, a in enumerate(args):
        if a is HOLE and registry.contaminant(op, i):
            return HOLE
    return _PRIM_IMPL[op](*args)


# --------------------------------------------------------------------------
# Function erasure
# --------------------------------------------------------------------------

@dataclass
class ErasedProgram:
    """The original functions plus ``f_erased(lErase, ...)`` for every client
    function reachable from ``entry``."""

    program: S.Program
    entry: str
    erased_entry: str
    names: dict[str, str] = field(default_factory=dict)  # original -> erased

    @property
    def typed(self) -> TypedProgram:
        tp = self.__dict__.get("_typed")
        if tp is None:
            tp = typecheck(self.program)
            self.__dict__["_typed"] = tp
        return tp


def _fresh(base: str, taken: set[str]) -> str:
    name, k = base, 1
    while name in taken:
        k += 1
        name = f"{base}{k}"
    return name


def _binders(f: S.FunDef) -> set[str]:
    names = set(f.param_names)
    for n in S.walk(f.body):
        if isinstance(n, S.Let):
            names.add(n.name)
        elif isinstance(n, S.MatchList):
            names.update((n.hd, n.tl))
    return names


def erase_function(p, entry: str, *, wrap: bool = True) -> ErasedProgram:
    """Emit ``entry_erased`` and the erased versions of everything it calls.

    Every subterm whose inferred type is ``Labeled`` is wrapped in
    ``(eraselabeled lErase ...)``; calls to client functions go to their erased
    versions with ``lErase`` passed first.  ``wrap=False`` skips the wrapping
    (a deliberately broken transform for harness tests).
    """
    tp = typecheck(p)
    prog = tp.program
    if not prog.has_function(entry):
        raise KeyError(f"unknown function {entry!r}")
    reachable = prog.reachable(entry)
    taken = {f.name for f in prog.functions}
    names: dict[str, str] = {}
    for name in reachable:
        names[name] = _fresh(f"{name}_erased", taken)
        taken.add(names[name])
    next_site = max(prog.site_ids(), default=0)

    def transform(t: S.Term, lvar: S.Var) -> S.Term:
        nonlocal next_site
        if isinstance(t, S.Let):
            new = S.Let(t.name, transform(t.bound, lvar), transform(t.body, lvar))
        elif isinstance(t, S.If):
            new = S.If(transform(t.cond, lvar), transform(t.then, lvar), transform(t.els, lvar))
        elif isinstance(t, S.Prim):
            new = S.Prim(t.op, tuple(transform(a, lvar) for a in t.args))
        elif isinstance(t, S.CanFlow):
            new = S.CanFlow(transform(t.lhs, lvar), transform(t.rhs, lvar))
        elif isinstance(t, S.Join):
            new = S.Join(transform(t.lhs, lvar), transform(t.rhs, lvar))
        elif isinstance(t, S.LabelOp):
            next_site += 1
            new = S.LabelOp(transform(t.value, lvar), transform(t.label, lvar), next_site, t.checked)
        elif isinstance(t, S.Unlabel):
            new = S.Unlabel(transform(t.arg, lvar))
        elif isinstance(t, (S.Call, S.ToLabeled)):
            args = (lvar,) + tuple(transform(a, lvar) for a in t.args)
            new = type(t)(names[t.fname], args)
        elif isinstance(t, S.Cons):
            new = S.Cons(transform(t.head, lvar), transform(t.tail, lvar))
        elif isinstance(t, S.MatchList):
            new = S.MatchList(transform(t.scrut, lvar), transform(t.nil_branch, lvar), t.hd, t.tl,
                              transform(t.cons_branch, lvar))
        elif isinstance(t, S.Pair):
            new = S.Pair(transform(t.fst, lvar), transform(t.snd, lvar))
        elif isinstance(t, S.Fst):
            new = S.Fst(transform(t.arg, lvar))
        elif isinstance(t, S.Snd):
            new = S.Snd(transform(t.arg, lvar))
        elif isinstance(t, S.EraseLabeled):
            new = S.EraseLabeled(transform(t.level, lvar), transform(t.arg, lvar))
        elif isinstance(t, S.SetCurrent):
            new = S.SetCurrent(transform(t.arg, lvar))
        else:
            new = t
        if wrap and isinstance(tp.type_of(t), S.LabeledT):
            new = S.EraseLabeled(lvar, new)
        return new

    erased: list[S.FunDef] = []
    for name in reachable:
        f = prog.function(name)
        lname = _fresh("lErase", _binders(f))
        lvar = S.Var(lname)
        body = transform(f.body, lvar)
        erased.append(S.FunDef(names[name], ((lname, S.LABEL),) + f.params, f.pre, body))
    out = S.Program(prog.functions + tuple(erased), prog.lattice)
    return ErasedProgram(out, entry, names[entry], names)
