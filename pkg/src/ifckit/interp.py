"""Big-step evaluator with explicit context threading.

Programs are compiled once into Python functions (one per definition) and
cached per program and mode.  Each run owns a private :class:`_State` holding
the current label, the clearance and the remaining fuel, so evaluation is
reentrant.  The outcome is always an :class:`~ifckit.ifc_runtime.IfcOutcome`;
policy failures never escape as exceptions.
"""

from __future__ import annotations

import operator
import sys
from typing import Any, Sequence

from . import ifc_runtime as rt
from .dsl import syntax as S
from .dsl.typecheck import TypedProgram
from .lattice import Label, LatticeSpec
from .ifc_runtime import (
    DYNAMIC,
    Dynamic,
    ErrorKind,
    Ghost,
    IfcContext,
    IfcError,
    IfcOutcome,
    IfcViolation,
    LabeledValue,
    StaticResidual,
)
from .values import HOLE, NIL, ConsV, PairV, contains_hole, strip_tags

DEFAULT_FUEL = 10**6
RECURSION_LIMIT = 12_000


class UsageError(ValueError):
    """Bad request: unknown entry, ill-typed arguments, mode not applicable."""


class _State:
    __slots__ = ("cur", "clearance", "fuel", "trace", "scopes")

    def __init__(self, cur, clearance, fuel, trace=None):
        self.cur = cur
        self.clearance = clearance
        self.fuel = fuel
        self.trace = trace
        self.scopes = 0


class _Fn:
    __slots__ = ("run", "call", "name", "arity")


def _fuel_out():
    raise IfcViolation(IfcError(ErrorKind.FUEL_EXHAUSTED, "fuel exhausted"))


def _clearance(lab, clr, site=None):
    raise IfcViolation(IfcError(ErrorKind.CLEARANCE_VIOLATION, f"label {lab!r} exceeds clearance {clr!r}", site))


class CompileError(UsageError):
    """The program is too deeply nested for the host compiler."""


def _helpers(spec: LatticeSpec, *, ghost, holes, trace, tolabeled_check, eraser) -> dict:
    """Run-time support functions referenced by generated code."""
    check_label, raised = rt.check_label, rt.raised
    can_flow = spec.can_flow
    if spec.finite:
        rows, jtab = spec._rows, spec._join_tab

        def flows(a, b):
            return rows[a.index] >> b.index & 1 == 1

        def join(a, b):
            return jtab[a.index][b.index]
    else:
        flows, join = can_flow, spec.join

    def lbl(st, v, lab, site):
        check_label(spec, st.cur, st.clearance, lab, site)
        return LabeledValue(v, lab)

    def lbl_residual(st, v, lab, site):
        # a proved site: only the clearance, which the analysis does not model
        clr = st.clearance
        if clr is not None and not can_flow(lab, clr):
            _clearance(lab, clr, site)
        return LabeledValue(v, lab)

    def lbl_slow(st, v, lab, site, checked):
        if lab is HOLE:
            return HOLE
        if trace:
            st.trace.append(("label", site, st.cur, lab, checked, st.scopes))
        if checked:
            check_label(spec, st.cur, st.clearance, lab, site)
        elif st.clearance is not None and not can_flow(lab, st.clearance):
            _clearance(lab, st.clearance, site)
        return LabeledValue(v, lab)

    def unl(st, lv):
        st.cur = raised(spec, st.cur, st.clearance, lv.tag)
        return lv._data

    def unl_slow(st, lv):
        if lv is HOLE:
            return HOLE
        before = st.cur
        st.cur = raised(spec, before, st.clearance, lv.tag)
        if trace:
            st.trace.append(("unlabel", lv.tag, before, st.cur, st.scopes))
        return lv._data

    def tol(st, f, *args):
        saved = st.cur
        if trace:
            st.trace.append(("enter", saved, st.scopes))
            st.scopes += 1
        v = f(st, *args)
        after = st.cur
        if tolabeled_check:
            # the dynamic monitor labels the result through its checked label
            check_label(spec, after, st.clearance, after)
        st.cur = saved
        if trace:
            st.scopes -= 1
            st.trace.append(("exit", after, saved, st.scopes))
        return LabeledValue(v, after)

    def erase(lab, lv):
        if lv is HOLE or lab is HOLE or not isinstance(lv, LabeledValue):
            return lv
        return do_erase(lab, lv, spec)

    if eraser is None:
        from .erasure import erase_labeled as do_erase
    else:
        do_erase = eraser

    def setcur(st, lab):
        if lab is HOLE:
            return None
        if st.clearance is not None and not can_flow(lab, st.clearance):
            _clearance(lab, st.clearance)
        if trace:
            st.trace.append(("setcurrent", st.cur, lab, st.scopes))
        st.cur = lab
        return None

    def hole_strict(fn):
        def op(*xs):
            for x in xs:
                if x is HOLE:
                    return HOLE
            return fn(*xs)
        return op

    ns = {
        "NIL": NIL, "ConsV": ConsV, "PairV": PairV, "HOLE": HOLE, "LabeledValue": LabeledValue,
        "_fuel_out": _fuel_out, "_flows": flows, "_join": join,
        "_lbl": lbl, "_lbl_residual": lbl_residual, "_lbl_slow": lbl_slow,
        "_unl": unl_slow if (holes or trace) else unl, "_tol": tol,
        "_erase": erase, "_setcur": setcur,
    }
    if holes:
        for name, fn in _HOLE_OPS.items():
            ns[name] = hole_strict(fn)
        ns["_flows"] = hole_strict(flows)
        ns["_join"] = hole_strict(join)
        ns["_fst"] = hole_strict(lambda p: p.fst)
        ns["_snd"] = hole_strict(lambda p: p.snd)
    return ns


_PY_BINOP = {"+": "+", "-": "-", "*": "*", "=": "==", "<": "<", "and": "&", "or": "|"}

_HOLE_OPS = {
    "_h_add": operator.add,
    "_h_sub": operator.sub,
    "_h_mul": operator.mul,
    "_h_eq": operator.eq,
    "_h_lt": operator.lt,
    # both operands are always evaluated, so these are the strict connectives
    "_h_and": operator.and_,
    "_h_or": operator.or_,
    "_h_not": operator.not_,
}
_HOLE_NAME = {"+": "_h_add", "-": "_h_sub", "*": "_h_mul", "=": "_h_eq", "<": "_h_lt",
              "and": "_h_and", "or": "_h_or", "not": "_h_not"}


class _Compiler:
    """Translate a program into Python source, one function per definition.

    ``ghost``: no tags, no current label.  ``honor_flags``: skip checks at
    ``label-unchecked`` sites (static-residual runs).  ``tolabeled_check``:
    the dynamic monitor's own check when ``tolabeled`` labels its result.
    ``hole_aware``: strict operations absorb holes.  ``trace``: record
    label events in ``st.trace``.  ``no_clearance``: the run has no
    clearance, so proved sites compile to a bare constructor.

    Tail positions become statements (``if``/``return``); nested bindings use
    assignment expressions.  Every run of a function is one Python call.
    """

    def __init__(self, program: S.Program, *, ghost=False, honor_flags=False, tolabeled_check=True,
                 hole_aware=False, trace=False, eraser=None, no_clearance=False):
        self.p = program
        self.ghost = ghost
        self.no_clearance = no_clearance
        self.honor_flags = honor_flags
        self.holes = hole_aware
        self.trace = trace
        self.ns = _helpers(program.lattice, ghost=ghost, holes=hole_aware, trace=trace,
                           tolabeled_check=tolabeled_check, eraser=eraser)
        self.consts: dict[Any, str] = {}
        self.fname = {f.name: f"f{i}" for i, f in enumerate(program.functions)}
        self.counter = 0
        src = "\n".join(self.function(f) for f in program.functions)
        self.source = src
        try:
            code = compile(src, f"<ifckit:{program.lattice.name}>", "exec")
        except (SyntaxError, RecursionError, MemoryError) as exc:
            raise CompileError(f"program too deeply nested to compile: {exc}") from None
        exec(code, self.ns)
        self.fns: dict[str, _Fn] = {}
        for f in program.functions:
            box = _Fn()
            box.name, box.arity = f.name, len(f.params)
            call = self.ns[self.fname[f.name]]
            box.call = call
            box.run = (lambda c: lambda st, args: c(st, *args))(call)
            self.fns[f.name] = box

    def fresh(self, base="v") -> str:
        self.counter += 1
        return f"{base}{self.counter}"

    def const(self, value) -> str:
        key = (type(value), value)
        name = self.consts.get(key)
        if name is None:
            name = f"_k{len(self.consts)}"
            self.consts[key] = name
            self.ns[name] = value
        return name

    # -- functions -------------------------------------------------------

    def function(self, f: S.FunDef) -> str:
        scope = {}
        params = []
        for n in f.param_names:
            scope[n] = self.fresh("a")
            params.append(scope[n])
        lines = [f"def {self.fname[f.name]}(st{''.join(', ' + p for p in params)}):",
                 "    if st.fuel <= 0:", "        _fuel_out()", "    st.fuel -= 1"]
        self.stmt(f.body, scope, 1, lines)
        return "\n".join(lines) + "\n"

    def stmt(self, t: S.Term, scope: dict, depth: int, out: list):
        pad = "    " * depth
        if isinstance(t, S.Let):
            v = self.fresh()
            out.append(f"{pad}{v} = {self.expr(t.bound, scope)}")
            self.stmt(t.body, {**scope, t.name: v}, depth, out)
        elif isinstance(t, S.If):
            c = self.expr(t.cond, scope)
            if self.holes:
                v = self.fresh("c")
                out.append(f"{pad}{v} = {c}")
                out.append(f"{pad}if {v} is HOLE:")
                out.append(f"{pad}    return HOLE")
                c = v
            out.append(f"{pad}if {c}:")
            self.stmt(t.then, scope, depth + 1, out)
            out.append(f"{pad}else:")
            self.stmt(t.els, scope, depth + 1, out)
        elif isinstance(t, S.MatchList):
            m = self.fresh("m")
            out.append(f"{pad}{m} = {self.expr(t.scrut, scope)}")
            out.append(f"{pad}if {m} is NIL:")
            self.stmt(t.nil_branch, scope, depth + 1, out)
            if self.holes:
                out.append(f"{pad}if {m} is HOLE:")
                out.append(f"{pad}    return HOLE")
            hd, tl = self.fresh(), self.fresh()
            out.append(f"{pad}{hd} = {m}.head")
            out.append(f"{pad}{tl} = {m}.tail")
            self.stmt(t.cons_branch, {**scope, t.hd: hd, t.tl: tl}, depth, out)
        else:
            out.append(f"{pad}return {self.expr(t, scope)}")

    # -- expressions -----------------------------------------------------

    def expr(self, t: S.Term, scope: dict) -> str:
        return getattr(self, "e_" + type(t).__name__)(t, scope)

    def e_IntLit(self, t, scope):
        return f"({t.n})"

    def e_BoolLit(self, t, scope):
        return "True" if t.b else "False"

    def e_UnitLit(self, t, scope):
        return "None"

    def e_LabelLit(self, t, scope):
        return self.const(t.label)

    def e_Var(self, t, scope):
        return scope[t.name]

    def e_Let(self, t, scope):
        v = self.fresh()
        body = self.expr(t.body, {**scope, t.name: v})
        return f"(({v} := {self.expr(t.bound, scope)}), {body})[1]"

    def e_If(self, t, scope):
        c, a, b = self.expr(t.cond, scope), self.expr(t.then, scope), self.expr(t.els, scope)
        if self.holes:
            v = self.fresh("c")
            return f"(HOLE if ({v} := {c}) is HOLE else ({a} if {v} else {b}))"
        return f"({a} if {c} else {b})"

    def e_Prim(self, t, scope):
        args = [self.expr(a, scope) for a in t.args]
        if self.holes:
            return f"{_HOLE_NAME[t.op]}({', '.join(args)})"
        if t.op == "not":
            return f"(not {args[0]})"
        return f"({args[0]} {_PY_BINOP[t.op]} {args[1]})"

    def e_CanFlow(self, t, scope):
        return f"_flows({self.expr(t.lhs, scope)}, {self.expr(t.rhs, scope)})"

    def e_Join(self, t, scope):
        return f"_join({self.expr(t.lhs, scope)}, {self.expr(t.rhs, scope)})"

    def e_GetCurrent(self, t, scope):
        if self.ghost:
            raise UsageError("ghost mode cannot answer getcurrent: the current label is not tracked")
        return "st.cur"

    def e_LabelOp(self, t, scope):
        v, lab = self.expr(t.value, scope), self.expr(t.label, scope)
        if self.ghost:
            if isinstance(t.label, (S.LabelLit, S.Var)):
                return v
            return f"({v}, {lab})[0]"
        checked = t.checked or not self.honor_flags
        if self.holes or self.trace:
            return f"_lbl_slow(st, {v}, {lab}, {t.site}, {checked})"
        if checked:
            return f"_lbl(st, {v}, {lab}, {t.site})"
        if self.no_clearance:
            return f"LabeledValue({v}, {lab})"
        return f"_lbl_residual(st, {v}, {lab}, {t.site})"

    def e_Unlabel(self, t, scope):
        arg = self.expr(t.arg, scope)
        return arg if self.ghost else f"_unl(st, {arg})"

    def e_ToLabeled(self, t, scope):
        args = "".join(", " + self.expr(a, scope) for a in t.args)
        if self.ghost:
            return f"{self.fname[t.fname]}(st{args})"
        return f"_tol(st, {self.fname[t.fname]}{args})"

    def e_Call(self, t, scope):
        args = "".join(", " + self.expr(a, scope) for a in t.args)
        return f"{self.fname[t.fname]}(st{args})"

    def e_Nil(self, t, scope):
        return "NIL"

    def e_Cons(self, t, scope):
        return f"ConsV({self.expr(t.head, scope)}, {self.expr(t.tail, scope)})"

    def e_MatchList(self, t, scope):
        m, hd, tl = self.fresh("m"), self.fresh(), self.fresh()
        nil_b = self.expr(t.nil_branch, scope)
        cons_b = self.expr(t.cons_branch, {**scope, t.hd: hd, t.tl: tl})
        bind = f"(({hd} := {m}.head), ({tl} := {m}.tail), {cons_b})[2]"
        if self.holes:
            bind = f"(HOLE if {m} is HOLE else {bind})"
        return f"({nil_b} if ({m} := {self.expr(t.scrut, scope)}) is NIL else {bind})"

    def e_Pair(self, t, scope):
        return f"PairV({self.expr(t.fst, scope)}, {self.expr(t.snd, scope)})"

    def e_Fst(self, t, scope):
        a = self.expr(t.arg, scope)
        return f"_fst({a})" if self.holes else f"{a}.fst"

    def e_Snd(self, t, scope):
        a = self.expr(t.arg, scope)
        return f"_snd({a})" if self.holes else f"{a}.snd"

    def e_EraseLabeled(self, t, scope):
        # argument order follows the source: level first
        lev, arg = self.expr(t.level, scope), self.expr(t.arg, scope)
        return f"_erase({lev}, {arg})"

    def e_SetCurrent(self, t, scope):
        arg = self.expr(t.arg, scope)
        if self.ghost:
            return f"({arg}, None)[1]"
        return f"_setcur(st, {arg})"



# --------------------------------------------------------------------------
# Compilation cache
# --------------------------------------------------------------------------

def compiled(program: S.Program, *, ghost=False, honor_flags=False, tolabeled_check=True,
             hole_aware=False, trace=False, eraser=None, no_clearance=False) -> dict[str, _Fn]:
    # cached on the program object itself: structural hashing of a whole AST
    # per run would cost more than the run
    per = program.__dict__.get("_compiled")
    if per is None:
        per = {}
        object.__setattr__(program, "_compiled", per)
    key = (ghost, honor_flags, tolabeled_check, hole_aware, trace, eraser, no_clearance)
    fns = per.get(key)
    if fns is None:
        fns = _Compiler(program, ghost=ghost, honor_flags=honor_flags, tolabeled_check=tolabeled_check,
                        hole_aware=hole_aware, trace=trace, eraser=eraser, no_clearance=no_clearance).fns
        per[key] = fns
    return fns


# --------------------------------------------------------------------------
# Argument validation
# --------------------------------------------------------------------------

def conforms(v: Any, ty: S.TypeExpr, spec: LatticeSpec) -> bool:
    """Does ``v`` inhabit ``ty``?  Holes inhabit every type."""
    if v is HOLE:
        return True
    if isinstance(ty, S.IntT):
        return isinstance(v, int) and not isinstance(v, bool)
    if isinstance(ty, S.BoolT):
        return isinstance(v, bool)
    if isinstance(ty, S.UnitT):
        return v is None
    if isinstance(ty, S.LabelT):
        return spec.owns(v)
    if isinstance(ty, S.LabeledT):
        return isinstance(v, LabeledValue) and spec.owns(v.tag) and conforms(rt.payload_tcb(v), ty.inner, spec)
    if isinstance(ty, S.ListT):
        node = v
        while isinstance(node, ConsV):
            if not conforms(node.head, ty.elem, spec):
                return False
            node = node.tail
        return node is NIL
    if isinstance(ty, S.PairT):
        return isinstance(v, PairV) and conforms(v.fst, ty.fst, spec) and conforms(v.snd, ty.snd, spec)
    return False


def _pre_labels(f: S.FunDef, args: Sequence[Any]) -> list:
    out = []
    names = f.param_names
    for atom in f.pre:
        out.append(atom.label if isinstance(atom, S.LabelLit) else args[names.index(atom.name)])
    return out


def pre_holds(spec: LatticeSpec, f: S.FunDef, args: Sequence[Any], cur: Label) -> bool:
    return all(lab is not HOLE and spec.can_flow(cur, lab) for lab in _pre_labels(f, args))


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _program_of(p) -> S.Program:
    return p.program if isinstance(p, TypedProgram) else p


def program_for_mode(p, mode) -> S.Program:
    """The program actually executed under ``mode`` (residual for static runs)."""
    prog = _program_of(p)
    if isinstance(mode, StaticResidual):
        from .analyzer import residualize

        return _program_of(residualize(prog, mode.certificate))
    if isinstance(mode, Ghost):
        from .analyzer import program_hash

        if mode.certificate.program_hash != program_hash(prog):
            raise UsageError("certificate does not match the program")
    return prog


def _check_entry(prog: S.Program, entry: str, args, ctx: IfcContext) -> S.FunDef:
    if not prog.has_function(entry):
        raise UsageError(f"unknown entry function {entry!r}")
    f = prog.function(entry)
    if len(args) != len(f.params):
        raise UsageError(f"{entry} expects {len(f.params)} arguments, got {len(args)}")
    spec = prog.lattice
    for (name, ty), v in zip(f.params, args):
        if not conforms(v, ty, spec):
            raise UsageError(f"argument {name} = {v!r} does not have type {ty}")
    if not spec.owns(ctx.cur) or (ctx.clearance is not None and not spec.owns(ctx.clearance)):
        raise UsageError("context labels do not belong to the program's lattice")
    if ctx.clearance is not None and not spec.can_flow(ctx.cur, ctx.clearance):
        raise UsageError("initial current label exceeds the clearance")
    return f


def eval_program(
    p,
    entry: str,
    args: Sequence[Any],
    ctx: IfcContext,
    mode=DYNAMIC,
    fuel: int = DEFAULT_FUEL,
    *,
    trace: list | None = None,
    ghost_context: bool = False,
    eraser=None,
) -> IfcOutcome:
    """Run ``entry(args)`` from ``ctx``.

    ``trace`` (a list) collects label/unlabel/tolabeled events.  In ghost
    mode the final context is ``None`` unless ``ghost_context`` asks for it to
    be rebuilt by a parallel dynamic run.  ``eraser`` replaces the
    implementation of ``eraselabeled`` (harness mutation tests only).
    """
    prog = program_for_mode(p, mode)
    f = _check_entry(prog, entry, args, ctx)
    if fuel < 0:
        raise UsageError("fuel must be non-negative")
    ghost = isinstance(mode, Ghost)
    if ghost and ctx.clearance is not None:
        raise UsageError("ghost mode does not track a clearance")
    if not pre_holds(prog.lattice, f, args, ctx.cur):
        return IfcOutcome(error=IfcError(ErrorKind.PRECONDITION_UNSATISFIED, f"precondition of {entry} does not hold"))
    holes = any(contains_hole(a) for a in args) or _uses_erasure(prog)
    fns = compiled(
        prog,
        ghost=ghost,
        honor_flags=isinstance(mode, StaticResidual),
        tolabeled_check=isinstance(mode, Dynamic),
        hole_aware=holes,
        trace=trace is not None,
        eraser=eraser,
        no_clearance=ctx.clearance is None,
    )
    run_args = [strip_tags(a) for a in args] if ghost else list(args)
    st = _State(ctx.cur, ctx.clearance, fuel, trace)
    old = sys.getrecursionlimit()
    if old < RECURSION_LIMIT:
        sys.setrecursionlimit(RECURSION_LIMIT)
    try:
        value = fns[entry].run(st, run_args)
    except IfcViolation as exc:
        return IfcOutcome(error=exc.error)
    except RecursionError:
        return IfcOutcome(error=IfcError(ErrorKind.FUEL_EXHAUSTED, "host recursion depth exhausted"))
    finally:
        if old < RECURSION_LIMIT:
            sys.setrecursionlimit(old)
    if ghost:
        final = None
        if ghost_context:
            shadow = eval_program(p, entry, args, ctx, DYNAMIC, fuel)
            final = shadow.final
        return IfcOutcome(value=value, final=final)
    return IfcOutcome(value=value, final=IfcContext(st.cur, st.clearance))


def _uses_erasure(prog: S.Program) -> bool:
    hit = prog.__dict__.get("_uses_erasure")
    if hit is None:
        hit = any(isinstance(n, S.EraseLabeled) for f in prog.functions for n in S.walk(f.body))
        object.__setattr__(prog, "_uses_erasure", hit)
    return hit


class Runner:
    """Pre-compiled fast path for repeated runs of one entry (benchmarks).

    Skips argument validation; the caller guarantees well-typed inputs that
    satisfy the entry precondition.  Ghost runners expect arguments already
    stripped of tags (see :func:`~ifckit.values.strip_tags`).
    """

    def __init__(self, p, entry: str, mode=DYNAMIC, fuel: int = DEFAULT_FUEL):
        self.program = program_for_mode(p, mode)
        if not self.program.has_function(entry):
            raise UsageError(f"unknown entry function {entry!r}")
        self.entry = entry
        self.mode = mode
        self.fuel = fuel
        self.ghost = isinstance(mode, Ghost)
        self._calls = [
            compiled(
                self.program,
                ghost=self.ghost,
                honor_flags=isinstance(mode, StaticResidual),
                tolabeled_check=isinstance(mode, Dynamic),
                no_clearance=no_clr,
            )[entry].call
            for no_clr in (False, True)
        ]

    def __call__(self, args: list, ctx: IfcContext):
        """Return ``(value, final_cur)``; raises IfcViolation on policy errors."""
        st = _State(ctx.cur, ctx.clearance, self.fuel)
        value = self._calls[ctx.clearance is None](st, *args)
        return value, (None if self.ghost else st.cur)


# the spec-facing name
eval = eval_program  # noqa: A001
