"""Noninterference checking by simulation.

For a client function ``f`` the checked equation is, for every observation
level ``l``, argument tuple ``xs`` and starting context ``c`` satisfying the
precondition of ``f``::

    erase_ctx(l, run(f, xs, c)) == erase_ctx(l, run(f_erased, [l] + xs, c))

Error outcomes must agree on their error kind.  Runs that exhaust fuel on
either side are inconclusive and, unless explicitly allowed, fail the check.
"""

from __future__ import annotations

import itertools
import json
import random
import time
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

from . import interp
from .dsl import syntax as S
from .dsl.typecheck import TypedProgram, typecheck
from .erasure import ErasedProgram, erase_ctx, erase_function, get_result_view
from .lattice import Label, LatticeSpec
from .ifc_runtime import DYNAMIC, ErrorKind, IfcContext, IfcOutcome, LabeledValue, payload_tcb
from .values import NIL, ConsV, PairV, format_value, to_json

DEFAULT_INTS = (0, 1, 2)
DEFAULT_MAX_LIST = 2
MAX_EXHAUSTIVE = 2_000_000


# --------------------------------------------------------------------------
# Domains
# --------------------------------------------------------------------------

def value_domain(ty: S.TypeExpr, spec: LatticeSpec, ints: Sequence[int] = DEFAULT_INTS,
                 max_list: int = DEFAULT_MAX_LIST) -> list:
    """Every value of ``ty`` built from the given ints, all labels and lists up
    to ``max_list`` long."""
    if isinstance(ty, S.IntT):
        return list(ints)
    if isinstance(ty, S.BoolT):
        return [False, True]
    if isinstance(ty, S.UnitT):
        return [None]
    if isinstance(ty, S.LabelT):
        return list(spec.elements)
    if isinstance(ty, S.LabeledT):
        inner = value_domain(ty.inner, spec, ints, max_list)
        return [LabeledValue(v, t) for t in spec.elements for v in inner]
    if isinstance(ty, S.PairT):
        a = value_domain(ty.fst, spec, ints, max_list)
        b = value_domain(ty.snd, spec, ints, max_list)
        return [PairV(x, y) for x in a for y in b]
    if isinstance(ty, S.ListT):
        elems = value_domain(ty.elem, spec, ints, max_list)
        out = []
        for n in range(max_list + 1):
            for combo in itertools.product(elems, repeat=n):
                lst = NIL
                for x in reversed(combo):
                    lst = ConsV(x, lst)
                out.append(lst)
        return out
    raise TypeError(f"no value domain for {ty}")


def context_domain(spec: LatticeSpec, clearances: bool = True) -> list[IfcContext]:
    """All well-formed starting contexts: every current label, with no
    clearance or with any clearance above it."""
    out = [IfcContext(c) for c in spec.elements]
    if clearances:
        out += [IfcContext(c, k) for c in spec.elements for k in spec.elements if spec.can_flow(c, k)]
    return out


# --------------------------------------------------------------------------
# Theorem
# --------------------------------------------------------------------------

@dataclass
class NITheorem:
    """One instance of the noninterference equation for a client entry point."""

    program: TypedProgram
    erased: ErasedProgram
    entry: str
    program_hash: str
    labels: list[Label]
    params: tuple[tuple[str, S.TypeExpr], ...]
    domains: dict[str, list]
    contexts: list[IfcContext]
    pre: tuple

    @property
    def spec(self) -> LatticeSpec:
        return self.program.lattice

    @property
    def fundef(self) -> S.FunDef:
        return self.program.function(self.entry)

    def pre_holds(self, args: Sequence[Any], ctx: IfcContext) -> bool:
        return interp.pre_holds(self.spec, self.fundef, args, ctx.cur)

    def size(self) -> int:
        n = len(self.labels) * len(self.contexts)
        for name, _ in self.params:
            n *= len(self.domains[name])
        return n

    def cases(self) -> Iterator[tuple[Label, tuple, IfcContext]]:
        pools = [self.domains[name] for name, _ in self.params]
        for args in itertools.product(*pools):
            for ctx in self.contexts:
                if not self.pre_holds(args, ctx):
                    continue
                for l in self.labels:
                    yield l, args, ctx

    def statement(self) -> str:
        names = {n for n, _ in self.params}
        obs = "l"
        while obs in names:  # keep the observer distinct from parameter names
            obs += "'"
        xs = ", ".join(n for n, _ in self.params)
        lead = ", ".join([obs, *[f"{n}: {t}" for n, t in self.params], "c"])
        pre = ""
        if self.pre:
            conds = [f"c.cur <= {a.name if isinstance(a, S.Var) else a.label.name}" for a in self.pre]
            pre = " with " + " and ".join(conds)
        rhs_args = ", ".join([obs, *(n for n, _ in self.params)])
        return (
            f"forall {lead}{pre}. erase_ctx({obs}, {self.entry}({xs}) @ c)"
            f" == erase_ctx({obs}, {self.erased.erased_entry}({rhs_args}) @ c)"
        )


def gen_ni_theorem(p, entry: str, domains: dict[str, list] | None = None, *,
                   ints: Sequence[int] = DEFAULT_INTS, max_list: int = DEFAULT_MAX_LIST,
                   clearances: bool = True, labels: Sequence[Label] | None = None,
                   contexts: Sequence[IfcContext] | None = None) -> NITheorem:
    """Build the theorem for ``entry``, erasing it on the way.

    ``domains`` overrides the grid of individual parameters by name.
    """
    from .analyzer import program_hash

    tp = typecheck(p)
    if not tp.has_function(entry):
        raise KeyError(f"unknown function {entry!r}")
    spec = tp.lattice
    f = tp.function(entry)
    erased = erase_function(tp, entry)
    doms = {}
    for name, ty in f.params:
        if domains and name in domains:
            doms[name] = list(domains[name])
        else:
            doms[name] = value_domain(ty, spec, ints, max_list)
    return NITheorem(
        program=tp,
        erased=erased,
        entry=entry,
        program_hash=program_hash(tp.program),
        labels=list(labels) if labels is not None else list(spec.elements),
        params=f.params,
        domains=doms,
        contexts=list(contexts) if contexts is not None else context_domain(spec, clearances),
        pre=f.pre,
    )


# --------------------------------------------------------------------------
# Checking
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Exhaustive:
    def __str__(self):
        return "exhaustive"


@dataclass(frozen=True)
class Random:
    seed: int = 0
    n: int = 1000

    def __str__(self):
        return f"random(seed={self.seed}, n={self.n})"


@dataclass
class Counterexample:
    l: Label
    args: tuple
    ctx: IfcContext
    lhs: IfcOutcome | None = None
    rhs: IfcOutcome | None = None
    lhs_view: Any = None
    rhs_view: Any = None

    def to_dict(self) -> dict:
        def side(o, view):
            if o is None:
                return None
            if not o.ok:
                return {"error": o.error.kind.value, "message": o.error.message}
            return {"value": format_value(o.value), "cur": o.final.cur.name, "view": format_value(view)}

        return {
            "l": self.l.name,
            "args": [format_value(a) for a in self.args],
            "ctx": {"cur": self.ctx.cur.name,
                    "clearance": None if self.ctx.clearance is None else self.ctx.clearance.name},
            "lhs": side(self.lhs, self.lhs_view),
            "rhs": side(self.rhs, self.rhs_view),
        }


@dataclass
class NIReport:
    entry: str
    strategy: str
    verdict: str  # "pass" or "fail"
    cases: int
    inconclusive: int = 0
    counterexample: Counterexample | None = None
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        doc = {
            "entry": self.entry,
            "strategy": self.strategy,
            "cases": self.cases,
            "inconclusive": self.inconclusive,
            "verdict": self.verdict,
        }
        if self.counterexample is not None:
            doc["counterexample"] = self.counterexample.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=to_json)


_AGREE, _DIFFER, _INCONCLUSIVE = "agree", "differ", "inconclusive"


@dataclass
class _Options:
    fuel: int = interp.DEFAULT_FUEL
    rhs_mode: Any = DYNAMIC
    eraser: Any = None
    cross_check: bool = True


def _run_case(t: NITheorem, l: Label, args: tuple, ctx: IfcContext, opt: _Options) -> tuple[str, Counterexample]:
    spec = t.spec
    lhs = interp.eval_program(t.program, t.entry, args, ctx, DYNAMIC, opt.fuel)
    rhs = interp.eval_program(t.erased.typed, t.erased.erased_entry, (l, *args), ctx, opt.rhs_mode, opt.fuel,
                              eraser=opt.eraser)
    cex = Counterexample(l, tuple(args), ctx, lhs, rhs)
    fuel = ErrorKind.FUEL_EXHAUSTED
    if (not lhs.ok and lhs.error.kind is fuel) or (not rhs.ok and rhs.error.kind is fuel):
        return _INCONCLUSIVE, cex
    if lhs.ok:
        cex.lhs_view = erase_ctx(l, lhs, spec)
    if rhs.ok:
        cex.rhs_view = erase_ctx(l, rhs, spec)
    if not lhs.ok or not rhs.ok:
        same = (not lhs.ok and not rhs.ok) and lhs.error.kind is rhs.error.kind
        return (_AGREE if same else _DIFFER), cex
    if opt.cross_check:
        for o, v in ((lhs, cex.lhs_view), (rhs, cex.rhs_view)):
            alt = get_result_view(l, o.value, o.final, spec)
            if alt != v:
                raise AssertionError(f"erase_ctx and the packaged-result view disagree: {v!r} vs {alt!r}")
    return (_AGREE if cex.lhs_view == cex.rhs_view else _DIFFER), cex


def _random_cases(t: NITheorem, seed: int, n: int) -> Iterator[tuple[Label, tuple, IfcContext]]:
    rng = random.Random(seed)
    pools = [t.domains[name] for name, _ in t.params]
    produced = attempts = 0
    while produced < n and attempts < 50 * n:
        attempts += 1
        args = tuple(rng.choice(pool) for pool in pools)
        ctx = rng.choice(t.contexts)
        if not t.pre_holds(args, ctx):
            continue
        produced += 1
        yield rng.choice(t.labels), args, ctx


def check_ni(t: NITheorem, strategy=Exhaustive(), fuel: int = interp.DEFAULT_FUEL, *,
             rhs_mode=DYNAMIC, eraser=None, allow_inconclusive: bool = False,
             shrink_failures: bool = True, cross_check: bool = True) -> NIReport:
    """Check ``t`` on every case of the strategy; stop at the first violation.

    ``rhs_mode`` and ``eraser`` alter the erased side only; they exist so the
    harness can be tested against deliberately broken enforcement.
    """
    opt = _Options(fuel, rhs_mode, eraser, cross_check)
    if isinstance(strategy, Exhaustive):
        if t.size() > MAX_EXHAUSTIVE:
            raise ValueError(f"grid has {t.size()} points; use a random strategy")
        cases = t.cases()
    elif isinstance(strategy, Random):
        cases = _random_cases(t, strategy.seed, strategy.n)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    start = time.perf_counter()
    run = inconclusive = 0
    for l, args, ctx in cases:
        run += 1
        status, cex = _run_case(t, l, args, ctx, opt)
        if status == _INCONCLUSIVE:
            inconclusive += 1
        elif status == _DIFFER:
            if shrink_failures:
                cex = shrink(t, cex, fuel=fuel, rhs_mode=rhs_mode, eraser=eraser)
            return NIReport(t.entry, str(strategy), "fail", run, inconclusive, cex,
                            time.perf_counter() - start)
    verdict = "pass" if (inconclusive == 0 or allow_inconclusive) else "fail"
    return NIReport(t.entry, str(strategy), verdict, run, inconclusive, None, time.perf_counter() - start)


def replay(t: NITheorem, cex: Counterexample, fuel: int = interp.DEFAULT_FUEL, *,
           rhs_mode=DYNAMIC, eraser=None) -> bool:
    """Re-run a counterexample; True iff it still violates the equation."""
    status, _ = _run_case(t, cex.l, cex.args, cex.ctx, _Options(fuel, rhs_mode, eraser, False))
    return status == _DIFFER


# --------------------------------------------------------------------------
# Shrinking
# --------------------------------------------------------------------------

def _below(spec: LatticeSpec, lab: Label) -> list[Label]:
    return [x for x in spec.elements if x != lab and spec.can_flow(x, lab)]


def _smaller(v: Any, spec: LatticeSpec) -> list:
    """Candidates strictly simpler than ``v``, simplest first."""
    if isinstance(v, bool):
        return [False] if v else []
    if isinstance(v, int):
        if v == 0:
            return []
        out = [0]
        half = int(v / 2)
        if half not in out:
            out.append(half)
        step = v - 1 if v > 0 else v + 1
        if step not in out:
            out.append(step)
        return out
    if isinstance(v, Label):
        return _below(spec, v)
    if isinstance(v, LabeledValue):
        data = payload_tcb(v)
        out = [LabeledValue(data, t) for t in _below(spec, v.tag)]
        out += [LabeledValue(d, v.tag) for d in _smaller(data, spec)]
        return out
    if isinstance(v, PairV):
        return [PairV(a, v.snd) for a in _smaller(v.fst, spec)] + [PairV(v.fst, b) for b in _smaller(v.snd, spec)]
    if isinstance(v, ConsV):
        items = list(v)
        out = []
        for i in range(len(items)):
            out.append(items[:i] + items[i + 1:])
        for i, x in enumerate(items):
            out.extend(items[:i] + [y] + items[i + 1:] for y in _smaller(x, spec))
        res = []
        for xs in out:
            lst = NIL
            for x in reversed(xs):
                lst = ConsV(x, lst)
            res.append(lst)
        return res
    return []


def _smaller_ctx(ctx: IfcContext, spec: LatticeSpec) -> list[IfcContext]:
    out = []
    if ctx.clearance is not None:
        out.append(IfcContext(ctx.cur))
    out += [IfcContext(c, ctx.clearance) for c in _below(spec, ctx.cur)]
    if ctx.clearance is not None:
        out += [IfcContext(ctx.cur, k) for k in _below(spec, ctx.clearance) if spec.can_flow(ctx.cur, k)]
    return out


def shrink(t: NITheorem, cex: Counterexample, fuel: int = interp.DEFAULT_FUEL, *,
           rhs_mode=DYNAMIC, eraser=None) -> Counterexample:
    """Greedy, deterministic minimization that keeps the case failing."""
    spec = t.spec
    opt = _Options(fuel, rhs_mode, eraser, False)

    def attempt(l, args, ctx):
        if not t.pre_holds(args, ctx):
            return None
        status, found = _run_case(t, l, args, ctx, opt)
        return found if status == _DIFFER else None

    current = cex
    if attempt(current.l, current.args, current.ctx) is None:
        return cex
    progress = True
    while progress:
        progress = False
        for i in range(len(current.args)):
            for cand in _smaller(current.args[i], spec):
                args = current.args[:i] + (cand,) + current.args[i + 1:]
                found = attempt(current.l, args, current.ctx)
                if found is not None:
                    current, progress = found, True
                    break
            if progress:
                break
        if progress:
            continue
        for ctx in _smaller_ctx(current.ctx, spec):
            found = attempt(current.l, current.args, ctx)
            if found is not None:
                current, progress = found, True
                break
        if progress:
            continue
        for l in _below(spec, current.l):
            found = attempt(l, current.args, current.ctx)
            if found is not None:
                current, progress = found, True
                break
    # recompute the views for the final case
    _, final = _run_case(t, current.l, current.args, current.ctx, opt)
    return final
