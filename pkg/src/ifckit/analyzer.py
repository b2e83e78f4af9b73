"""Static label-flow analysis that discharges ``label`` checks.

The abstract state tracks an upper bound of the current label as a symbolic
join over the entry label (``CurIn``), label parameters, parameter tags and
constants, together with flow facts collected from preconditions and
``canflow`` guards.  A site is Proved when the facts entail ``cur ⊑ L`` for its
label operand ``L``.  Interprocedural summaries are computed to a fixpoint over
the call graph.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from .dsl import syntax as S
from .dsl.printer import pretty_print
from .dsl.typecheck import TypedProgram, typecheck
from .lattice import Label, LatticeSpec


class AnalyzerError(ValueError):
    """Usage error: hash mismatch, unknown function."""


# --------------------------------------------------------------------------
# Symbolic label expressions
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class _Atom:
    kind: str  # "cur" | "param" | "tag" | "unknown"
    name: str = ""

    def __str__(self):
        if self.kind == "cur":
            return "CurIn"
        if self.kind == "param":
            return f"ParamLabel({self.name})"
        if self.kind == "tag":
            return f"TagOf({self.name})"
        return "Unknown"


@dataclass(frozen=True)
class LabelExpr:
    """A join of symbolic atoms and one constant (normalized: ACI, constants
    merged, a top constant absorbs everything)."""

    atoms: frozenset
    const: Label
    const_is_bottom: bool = field(default=False, compare=False)

    def __str__(self):
        parts = [str(a) for a in sorted(self.atoms)]
        if not self.atoms or not self.const_is_bottom:
            parts.append(f"Const({self.const.name})")
        return parts[0] if len(parts) == 1 else "JoinE(" + ", ".join(parts) + ")"


_UNKNOWN = _Atom("unknown", "?")


class Exprs:
    """Constructors and normalization for one lattice."""

    def __init__(self, spec: LatticeSpec):
        self.spec = spec
        self.bottom = self.make((), spec.bottom)

    def make(self, atoms: Iterable, const: Label) -> LabelExpr:
        spec = self.spec
        if spec.top is not None and const == spec.top:
            return LabelExpr(frozenset(), const, const == spec.bottom)
        atoms = frozenset(atoms)
        if _UNKNOWN in atoms:
            # an unknown label absorbs everything, like top, but entails nothing
            return LabelExpr(frozenset((_UNKNOWN,)), spec.bottom, True)
        return LabelExpr(atoms, const, const == spec.bottom)

    def const(self, lab: Label) -> LabelExpr:
        return self.make((), lab)

    def cur_in(self) -> LabelExpr:
        return self.make((_Atom("cur"),), self.spec.bottom)

    def param(self, name: str) -> LabelExpr:
        return self.make((_Atom("param", name),), self.spec.bottom)

    def tag_of(self, name: str) -> LabelExpr:
        return self.make((_Atom("tag", name),), self.spec.bottom)

    def top(self) -> LabelExpr:
        if self.spec.top is not None:
            return self.const(self.spec.top)
        return self.make((_UNKNOWN,), self.spec.bottom)

    def join(self, *es: LabelExpr) -> LabelExpr:
        atoms: set = set()
        const = self.spec.bottom
        for e in es:
            atoms |= e.atoms
            const = self.spec.join(const, e.const)
        return self.make(atoms, const)

    def is_top(self, e: LabelExpr) -> bool:
        return self.spec.top is not None and not e.atoms and e.const == self.spec.top

    # -- entailment ------------------------------------------------------

    def entails(self, facts: Iterable[tuple[LabelExpr, LabelExpr]], a: LabelExpr, b: LabelExpr) -> bool:
        """Sound, incomplete derivation of ``a ⊑ b`` from ``facts``.

        Uses join decomposition on the left, membership and constant order on
        the right, bottom/top, and transitive chaining through facts.
        """
        facts = tuple(facts)
        if self.is_top(b):
            return True
        if not self._const_leq(a.const, b, facts, set()):
            return False
        return all(self._atom_leq(x, b, facts, set()) for x in a.atoms)

    def _const_leq(self, c: Label, b: LabelExpr, facts, seen) -> bool:
        spec = self.spec
        if c == spec.bottom or spec.can_flow(c, b.const):
            return True
        for lhs, rhs in facts:
            if spec.can_flow(c, lhs.const) and id(rhs) not in seen:
                seen.add(id(rhs))
                if self._expr_leq(rhs, b, facts, seen):
                    return True
        return False

    def _atom_leq(self, x: _Atom, b: LabelExpr, facts, seen) -> bool:
        if x.kind == "unknown":
            return self.is_top(b)
        if x in b.atoms or self.is_top(b):
            return True
        for lhs, rhs in facts:
            if x in lhs.atoms and id(rhs) not in seen:
                seen.add(id(rhs))
                if self._expr_leq(rhs, b, facts, seen):
                    return True
        return False

    def _expr_leq(self, a: LabelExpr, b: LabelExpr, facts, seen) -> bool:
        if self.is_top(b):
            return True
        if not self._const_leq(a.const, b, facts, seen):
            return False
        return all(self._atom_leq(x, b, facts, set(seen)) for x in a.atoms)

    def leq_syntactic(self, a: LabelExpr, b: LabelExpr) -> bool:
        return self.is_top(b) or (a.atoms <= b.atoms and self.spec.can_flow(a.const, b.const))

    # -- substitution ----------------------------------------------------

    def subst(self, e: LabelExpr, mapping: dict) -> tuple[LabelExpr, bool]:
        """Replace atoms by ``mapping[atom] = (expr, exact)``; unmapped atoms
        become top.  Returns the result and whether it is exact."""
        parts = [self.const(e.const)]
        exact = True
        for a in e.atoms:
            if a in mapping and mapping[a][0] is not None:
                expr, ex = mapping[a]
                parts.append(expr)
                exact = exact and ex
            else:
                parts.append(self.top())
                exact = False
        return self.join(*parts), exact


# --------------------------------------------------------------------------
# Rendering / reading label expressions
# --------------------------------------------------------------------------

_ATOM_RE = re.compile(r"(CurIn|ParamLabel|TagOf|Unknown|Const)(?:\(([^()]*)\))?")


def parse_label_expr(text: str, spec: LatticeSpec) -> LabelExpr:
    ex = Exprs(spec)
    text = text.strip()
    if text.startswith("JoinE(") and text.endswith(")"):
        inner = text[len("JoinE("):-1]
    else:
        inner = text
    parts = []
    for m in _ATOM_RE.finditer(inner):
        kind, arg = m.group(1), m.group(2) or ""
        if kind == "CurIn":
            parts.append(ex.cur_in())
        elif kind == "ParamLabel":
            parts.append(ex.param(arg))
        elif kind == "TagOf":
            parts.append(ex.tag_of(arg))
        elif kind == "Unknown":
            parts.append(ex.make((_UNKNOWN,), spec.bottom))
        else:
            parts.append(ex.const(spec.parse_label(arg)))
    if not parts:
        raise AnalyzerError(f"cannot read label expression {text!r}")
    return ex.join(*parts)


# --------------------------------------------------------------------------
# Abstract values and states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AVal:
    tags: LabelExpr  # upper bound of every tag reachable in the value
    tags_exact: bool = True
    lab: LabelExpr | None = None  # exact denotation, for Label values
    inner: "AVal | None" = None  # payload, for labeled values built locally
    parts: "tuple[AVal, AVal] | None" = None  # components, for pairs built locally
    guard: tuple = ()  # facts that hold when this boolean is true


@dataclass(frozen=True)
class AState:
    cur: LabelExpr
    facts: frozenset
    exact: bool = True


@dataclass(frozen=True)
class Summary:
    exit: LabelExpr
    exit_exact: bool
    result_tags: LabelExpr
    result_tags_exact: bool
    result_lab: LabelExpr | None


class SiteVerdict(enum.Enum):
    PROVED = "Proved"
    NEEDS_CHECK = "NeedsCheck"

    @property
    def needs_check(self) -> bool:
        return self is SiteVerdict.NEEDS_CHECK

    def __str__(self):
        return self.value


Proved, NeedsCheck = SiteVerdict.PROVED, SiteVerdict.NEEDS_CHECK


@dataclass(frozen=True)
class FunctionSummary:
    fname: str
    pre: tuple[tuple[LabelExpr, LabelExpr], ...]  # facts assumed at entry
    exit: LabelExpr


@dataclass
class Certificate:
    program_hash: str
    sites: dict[int, SiteVerdict]
    summaries: dict[str, FunctionSummary] = field(default_factory=dict)
    lattice: LatticeSpec | None = field(default=None, repr=False)

    def verdict(self, site: int) -> SiteVerdict:
        try:
            return self.sites[site]
        except KeyError:
            raise AnalyzerError(f"certificate has no verdict for site @{site}") from None

    def needs_check_sites(self) -> list[int]:
        return sorted(s for s, v in self.sites.items() if v.needs_check)

    def proved_sites(self) -> list[int]:
        return sorted(s for s, v in self.sites.items() if not v.needs_check)

    @property
    def fully_proved(self) -> bool:
        return not self.needs_check_sites()

    def to_dict(self) -> dict:
        return {
            "programHash": self.program_hash,
            "sites": [{"id": s, "verdict": str(self.sites[s])} for s in sorted(self.sites)],
            "summaries": [
                {"fname": s.fname, "pre": [f"{a} ⊑ {b}" for a, b in s.pre], "exit": str(s.exit)}
                for s in self.summaries.values()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: dict, spec: LatticeSpec) -> "Certificate":
        sites = {int(s["id"]): SiteVerdict(s["verdict"]) for s in doc["sites"]}
        sums = {}
        for s in doc.get("summaries", []):
            pre = []
            for fact in s.get("pre", []):
                a, b = fact.split("⊑")
                pre.append((parse_label_expr(a, spec), parse_label_expr(b, spec)))
            sums[s["fname"]] = FunctionSummary(s["fname"], tuple(pre), parse_label_expr(s["exit"], spec))
        return cls(doc["programHash"], sites, sums, spec)

    @classmethod
    def from_json(cls, text: str, spec: LatticeSpec) -> "Certificate":
        return cls.from_dict(json.loads(text), spec)


# --------------------------------------------------------------------------
# Program identity
# --------------------------------------------------------------------------

def _program(p) -> S.Program:
    return p.program if isinstance(p, TypedProgram) else p


def program_hash(p) -> str:
    """Digest of the canonical text, ignoring which sites are residual."""
    prog = _program(p)
    cached = prog.__dict__.get("_hash")
    if cached is None:
        text = pretty_print(prog).replace("(label-unchecked ", "(label ")
        cached = hashlib.sha256(text.encode("utf-8")).hexdigest()
        object.__setattr__(prog, "_hash", cached)
    return cached


# --------------------------------------------------------------------------
# The analysis
# --------------------------------------------------------------------------

WIDEN_AFTER = 3
MAX_ROUNDS = 100


class _Analysis:
    def __init__(self, tp: TypedProgram):
        self.tp = tp
        self.p = tp.program
        self.spec = self.p.lattice
        self.ex = Exprs(self.spec)
        ex = self.ex
        self.assumed = {f.name: True for f in self.p.functions}
        self.summaries = {
            f.name: Summary(ex.cur_in(), True, ex.bottom, True, None) for f in self.p.functions
        }
        self.changes = {f.name: 0 for f in self.p.functions}
        self.widened: dict[str, Summary] = {}
        self.verdicts: dict[int, SiteVerdict] = {}
        self.pre_failures: set[str] = set()
        self.literals = self.spec.join_all(
            n.label for f in self.p.functions for n in S.walk(f.body) if isinstance(n, S.LabelLit)
        )

    # -- driver ----------------------------------------------------------

    def run(self) -> Certificate:
        for _ in range(MAX_ROUNDS):
            self.verdicts = {}
            self.pre_failures = set()
            changed = False
            for f in self.p.functions:
                new = self.function(f)
                old = self.summaries[f.name]
                if f.name in self.widened:
                    w = self.widened[f.name]
                    new = w if self.summary_leq(new, w) else self.top_summary()
                    self.widened[f.name] = new
                if new != old:
                    self.changes[f.name] += 1
                    if self.changes[f.name] > WIDEN_AFTER and f.name not in self.widened:
                        new = self.widen(f)
                        self.widened[f.name] = new
                    self.summaries[f.name] = new
                    changed = True
            for name in self.pre_failures:
                if self.assumed[name]:
                    self.assumed[name] = False
                    changed = True
            if not changed:
                break
        else:  # pragma: no cover - widening guarantees convergence
            raise RuntimeError("label analysis did not converge")
        sums = {
            f.name: FunctionSummary(f.name, self.pre_facts(f) if self.assumed[f.name] else (),
                                    self.summaries[f.name].exit)
            for f in self.p.functions
        }
        return Certificate(program_hash(self.p), dict(sorted(self.verdicts.items())), sums, self.spec)

    def top_summary(self) -> Summary:
        t = self.ex.top()
        return Summary(t, False, t, False, None)

    def widen(self, f: S.FunDef) -> Summary:
        ex = self.ex
        parts = [ex.cur_in(), ex.const(self.literals)]
        for name, ty in f.params:
            if isinstance(ty, S.LabelT):
                parts.append(ex.param(name))
            if S.contains_labeled(ty):
                parts.append(ex.tag_of(name))
        u = ex.join(*parts)
        return Summary(u, False, u, False, None)

    def summary_leq(self, a: Summary, b: Summary) -> bool:
        ex = self.ex
        return ex.leq_syntactic(a.exit, b.exit) and ex.leq_syntactic(a.result_tags, b.result_tags)

    def pre_facts(self, f: S.FunDef) -> tuple:
        ex = self.ex
        out = []
        for atom in f.pre:
            rhs = ex.const(atom.label) if isinstance(atom, S.LabelLit) else ex.param(atom.name)
            out.append((ex.cur_in(), rhs))
        return tuple(out)

    def function(self, f: S.FunDef) -> Summary:
        ex = self.ex
        env = {}
        for name, ty in f.params:
            tags = ex.tag_of(name) if S.contains_labeled(ty) else ex.bottom
            lab = ex.param(name) if isinstance(ty, S.LabelT) else None
            env[name] = AVal(tags, True, lab)
        facts = frozenset(self.pre_facts(f)) if self.assumed[f.name] else frozenset()
        st = AState(ex.cur_in(), facts, True)
        val, st = self.term(f.body, env, st)
        return Summary(st.cur, st.exact, val.tags, val.tags_exact, val.lab)

    # -- helpers -----------------------------------------------------------

    def pure(self) -> AVal:
        return AVal(self.ex.bottom, True)

    def merge_vals(self, a: AVal, b: AVal) -> AVal:
        ex = self.ex
        same = a.tags == b.tags
        return AVal(
            ex.join(a.tags, b.tags),
            a.tags_exact and b.tags_exact and same,
            a.lab if a.lab is not None and a.lab == b.lab else None,
        )

    def merge_states(self, a: AState, b: AState) -> AState:
        return AState(self.ex.join(a.cur, b.cur), a.facts & b.facts, a.exact and b.exact and a.cur == b.cur)

    def add_facts(self, st: AState, facts) -> AState:
        return replace(st, facts=st.facts | frozenset(facts)) if facts else st

    def call_mapping(self, callee: S.FunDef, args: list[AVal], st: AState) -> dict:
        m = {_Atom("cur"): (st.cur, st.exact)}
        for (name, ty), av in zip(callee.params, args):
            if isinstance(ty, S.LabelT):
                m[_Atom("param", name)] = (av.lab, av.lab is not None)
            if S.contains_labeled(ty):
                m[_Atom("tag", name)] = (av.tags, av.tags_exact)
        return m

    def check_pre(self, callee: S.FunDef, args: list[AVal], st: AState) -> None:
        ex = self.ex
        names = callee.param_names
        for atom in callee.pre:
            if isinstance(atom, S.LabelLit):
                bound = ex.const(atom.label)
            else:
                bound = args[names.index(atom.name)].lab
            if bound is None or not ex.entails(st.facts, st.cur, bound):
                self.pre_failures.add(callee.name)

    def labeled_type(self, t: S.Term):
        ty = self.tp.type_of(t)
        return ty if isinstance(ty, S.LabeledT) else None

    # -- terms -------------------------------------------------------------

    def terms(self, ts, env, st):
        vals = []
        for t in ts:
            v, st = self.term(t, env, st)
            vals.append(v)
        return vals, st

    def term(self, t: S.Term, env: dict, st: AState) -> tuple[AVal, AState]:
        ex = self.ex
        if isinstance(t, (S.IntLit, S.BoolLit, S.UnitLit, S.Nil)):
            return self.pure(), st
        if isinstance(t, S.LabelLit):
            return AVal(ex.bottom, True, ex.const(t.label)), st
        if isinstance(t, S.Var):
            return env[t.name], st
        if isinstance(t, S.Let):
            v, st = self.term(t.bound, env, st)
            return self.term(t.body, {**env, t.name: v}, st)
        if isinstance(t, S.If):
            c, st = self.term(t.cond, env, st)
            va, sa = self.term(t.then, env, self.add_facts(st, c.guard))
            vb, sb = self.term(t.els, env, st)
            return self.merge_vals(va, vb), self.merge_states(sa, sb)
        if isinstance(t, S.Prim):
            vals, st = self.terms(t.args, env, st)
            guard = ()
            if t.op == "and":
                guard = vals[0].guard + vals[1].guard
            return AVal(ex.bottom, True, guard=guard), st
        if isinstance(t, S.CanFlow):
            (a, b), st = self.terms((t.lhs, t.rhs), env, st)
            guard = ((a.lab, b.lab),) if a.lab is not None and b.lab is not None else ()
            return AVal(ex.bottom, True, guard=guard), st
        if isinstance(t, S.Join):
            (a, b), st = self.terms((t.lhs, t.rhs), env, st)
            lab = ex.join(a.lab, b.lab) if a.lab is not None and b.lab is not None else None
            return AVal(ex.bottom, True, lab), st
        if isinstance(t, S.GetCurrent):
            return AVal(ex.bottom, True, st.cur if st.exact else None), st
        if isinstance(t, S.LabelOp):
            (v, lab), st = self.terms((t.value, t.label), env, st)
            proved = lab.lab is not None and ex.entails(st.facts, st.cur, lab.lab)
            prev = self.verdicts.get(t.site)
            verdict = Proved if proved and prev is not NeedsCheck else NeedsCheck
            self.verdicts[t.site] = verdict
            tag = lab.lab if lab.lab is not None else ex.top()
            return AVal(ex.join(tag, v.tags), lab.lab is not None and v.tags_exact, inner=v), st
        if isinstance(t, S.Unlabel):
            lv, st = self.term(t.arg, env, st)
            ty = self.labeled_type(t.arg)
            flat_payload = ty is not None and not S.contains_labeled(ty.inner)
            outer_exact = lv.tags_exact and flat_payload
            st = AState(ex.join(st.cur, lv.tags), st.facts, st.exact and outer_exact)
            if lv.inner is not None:
                return lv.inner, st
            if flat_payload:
                return self.pure(), st
            return AVal(lv.tags, False), st
        if isinstance(t, (S.Call, S.ToLabeled)):
            args, st = self.terms(t.args, env, st)
            callee = self.p.function(t.fname)
            self.check_pre(callee, args, st)
            summ = self.summaries[t.fname]
            m = self.call_mapping(callee, args, st)
            exit_, exit_ok = ex.subst(summ.exit, m)
            rtags, rtags_ok = ex.subst(summ.result_tags, m)
            rlab = None
            if summ.result_lab is not None:
                rlab, rlab_ok = ex.subst(summ.result_lab, m)
                if not rlab_ok:
                    rlab = None
            result = AVal(rtags, rtags_ok and summ.result_tags_exact, rlab)
            if isinstance(t, S.Call):
                return result, AState(exit_, st.facts, st.exact and exit_ok and summ.exit_exact)
            exact = exit_ok and summ.exit_exact and result.tags_exact
            return AVal(ex.join(exit_, rtags), exact, inner=result), st
        if isinstance(t, S.Cons):
            (h, tl), st = self.terms((t.head, t.tail), env, st)
            return AVal(ex.join(h.tags, tl.tags), h.tags_exact and tl.tags_exact), st
        if isinstance(t, S.MatchList):
            s, st = self.term(t.scrut, env, st)
            va, sa = self.term(t.nil_branch, env, st)
            elem = AVal(s.tags, False)
            vb, sb = self.term(t.cons_branch, {**env, t.hd: elem, t.tl: AVal(s.tags, False)}, st)
            return self.merge_vals(va, vb), self.merge_states(sa, sb)
        if isinstance(t, S.Pair):
            (a, b), st = self.terms((t.fst, t.snd), env, st)
            return AVal(ex.join(a.tags, b.tags), a.tags_exact and b.tags_exact, parts=(a, b)), st
        if isinstance(t, (S.Fst, S.Snd)):
            p, st = self.term(t.arg, env, st)
            if p.parts is not None:
                return p.parts[0 if isinstance(t, S.Fst) else 1], st
            return AVal(p.tags, False), st
        if isinstance(t, S.EraseLabeled):
            (_, v), st = self.terms((t.level, t.arg), env, st)
            return v, st
        if isinstance(t, S.SetCurrent):
            lab, st = self.term(t.arg, env, st)
            if lab.lab is not None:
                return self.pure(), AState(lab.lab, st.facts, True)
            return self.pure(), AState(ex.top(), st.facts, False)
        raise TypeError(f"not a term: {t!r}")


def analyze(p) -> Certificate:
    tp = typecheck(_program(p)) if not isinstance(p, TypedProgram) else p
    return _Analysis(tp).run()


def entails(spec: LatticeSpec, facts, goal: tuple[LabelExpr, LabelExpr]) -> bool:
    return Exprs(spec).entails(facts, goal[0], goal[1])


def residualize(p, cert: Certificate):
    """Drop the checks of Proved sites; NeedsCheck sites keep theirs."""
    prog = _program(p)
    if cert.program_hash != program_hash(prog):
        raise AnalyzerError("certificate does not match the program (hash mismatch)")
    cache = prog.__dict__.get("_residuals")
    if cache is None:
        cache = {}
        object.__setattr__(prog, "_residuals", cache)
    key = tuple(sorted((s, v.value) for s, v in cert.sites.items()))
    out = cache.get(key)
    if out is None:
        missing = set(prog.site_ids()) - set(cert.sites)
        if missing:
            raise AnalyzerError(f"certificate lacks verdicts for sites {sorted(missing)}")
        out = S.Program(
            tuple(replace(f, body=_strip(f.body, cert)) for f in prog.functions), prog.lattice, prog.positions
        )
        object.__setattr__(out, "_hash", program_hash(prog))
        cache[key] = out
    return typecheck(out) if isinstance(p, TypedProgram) else out


def _strip(t: S.Term, cert: Certificate) -> S.Term:
    if isinstance(t, S.LabelOp):
        return S.LabelOp(_strip(t.value, cert), _strip(t.label, cert), t.site, cert.verdict(t.site).needs_check)
    kids = S.children(t)
    if not kids:
        return t
    new = [_strip(k, cert) for k in kids]
    if isinstance(t, S.Let):
        return S.Let(t.name, *new)
    if isinstance(t, S.If):
        return S.If(*new)
    if isinstance(t, S.Prim):
        return S.Prim(t.op, tuple(new))
    if isinstance(t, (S.Call, S.ToLabeled)):
        return type(t)(t.fname, tuple(new))
    if isinstance(t, S.MatchList):
        return S.MatchList(new[0], new[1], t.hd, t.tl, new[2])
    return type(t)(*new)


def retained_checks(p) -> int:
    return sum(1 for n in _program(p).label_sites() if n.checked)


def summarize(p, fname: str, cert: Certificate | None = None) -> tuple[tuple, LabelExpr]:
    prog = _program(p)
    if not prog.has_function(fname):
        raise AnalyzerError(f"unknown function {fname!r}")
    cert = cert or analyze(prog)
    s = cert.summaries[fname]
    return s.pre, s.exit
