"""Monomorphic type inference with unification.

Function return types and the element type of ``(nil)`` are inferred; an
element type left unconstrained defaults to ``Unit``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import syntax as S
from .printer import flat


class TypeCheckError(TypeError):
    def __init__(self, message: str, fname: str | None = None, term: S.Term | None = None, pos=None):
        self.fname, self.term, self.pos = fname, term, pos
        where = []
        if pos is not None:
            where.append(f"{pos[0]}:{pos[1]}")
        if fname is not None:
            where.append(f"in {fname}")
        if term is not None:
            where.append(f"at {flat(term)}")
        super().__init__(message + (" (" + ", ".join(where) + ")" if where else ""))


@dataclass(frozen=True)
class TVar:
    n: int

    def __str__(self):
        return f"?{self.n}"


@dataclass
class TypedProgram:
    program: S.Program
    types: dict = field(repr=False)  # id(term) -> TypeExpr
    signatures: dict  # fname -> (param types, return type)

    def type_of(self, term: S.Term) -> S.TypeExpr:
        return self.types[id(term)]

    @property
    def lattice(self):
        return self.program.lattice

    def __getattr__(self, name):
        # TypedProgram stands in for its Program where convenient
        if name in ("functions", "function", "has_function", "label_sites", "site_ids", "reachable", "callees"):
            return getattr(self.program, name)
        raise AttributeError(name)


_EQ_TYPES = (S.IntT, S.BoolT, S.LabelT, S.UnitT)


class _Infer:
    def __init__(self, program: S.Program):
        self.p = program
        self.subst: dict[int, object] = {}
        self.count = 0
        self.raw: dict[int, object] = {}
        self.terms: dict[int, S.Term] = {}
        self.deferred: list[tuple[str, object, str, S.Term]] = []
        self.fname = None
        self.sigs = {f.name: (tuple(t for _, t in f.params), self.fresh()) for f in program.functions}

    def fresh(self) -> TVar:
        self.count += 1
        return TVar(self.count)

    def resolve(self, t):
        while isinstance(t, TVar) and t.n in self.subst:
            t = self.subst[t.n]
        return t

    def zonk(self, t, default=None):
        t = self.resolve(t)
        if isinstance(t, TVar):
            return default if default is not None else t
        if isinstance(t, S.LabeledT):
            return S.LabeledT(self.zonk(t.inner, default))
        if isinstance(t, S.ListT):
            return S.ListT(self.zonk(t.elem, default))
        if isinstance(t, S.PairT):
            return S.PairT(self.zonk(t.fst, default), self.zonk(t.snd, default))
        return t

    def occurs(self, v: TVar, t) -> bool:
        t = self.resolve(t)
        if t == v:
            return True
        if isinstance(t, S.LabeledT):
            return self.occurs(v, t.inner)
        if isinstance(t, S.ListT):
            return self.occurs(v, t.elem)
        if isinstance(t, S.PairT):
            return self.occurs(v, t.fst) or self.occurs(v, t.snd)
        return False

    def fail(self, msg, term):
        raise TypeCheckError(msg, self.fname, term, self.p.positions.get(id(term)))

    def unify(self, a, b, term, what="type mismatch"):
        a, b = self.resolve(a), self.resolve(b)
        if a == b:
            return
        if isinstance(a, TVar):
            if self.occurs(a, b):
                self.fail("infinite type", term)
            self.subst[a.n] = b
            return
        if isinstance(b, TVar):
            self.unify(b, a, term, what)
            return
        if type(a) is type(b):
            if isinstance(a, S.LabeledT):
                return self.unify(a.inner, b.inner, term, what)
            if isinstance(a, S.ListT):
                return self.unify(a.elem, b.elem, term, what)
            if isinstance(a, S.PairT):
                self.unify(a.fst, b.fst, term, what)
                return self.unify(a.snd, b.snd, term, what)
        self.fail(f"{what}: expected {self.zonk(b)}, found {self.zonk(a)}", term)

    def expect(self, term, env, want):
        self.unify(self.infer(term, env), want, term)

    def infer(self, t: S.Term, env: dict):
        ty = self._infer(t, env)
        self.raw[id(t)] = ty
        self.terms[id(t)] = t
        return ty

    def _infer(self, t, env):
        if isinstance(t, S.IntLit):
            return S.INT
        if isinstance(t, S.BoolLit):
            return S.BOOL
        if isinstance(t, S.UnitLit):
            return S.UNIT
        if isinstance(t, (S.LabelLit, S.GetCurrent)):
            return S.LABEL
        if isinstance(t, S.Var):
            if t.name not in env:
                self.fail(f"unbound variable {t.name!r}", t)
            return env[t.name]
        if isinstance(t, S.Let):
            bound = self.infer(t.bound, env)
            return self.infer(t.body, {**env, t.name: bound})
        if isinstance(t, S.If):
            self.expect(t.cond, env, S.BOOL)
            a = self.infer(t.then, env)
            b = self.infer(t.els, env)
            self.unify(b, a, t.els, "if branches differ")
            return a
        if isinstance(t, S.Prim):
            if t.op in ("+", "-", "*", "<"):
                for a in t.args:
                    self.expect(a, env, S.INT)
                return S.INT if t.op != "<" else S.BOOL
            if t.op in ("and", "or", "not"):
                for a in t.args:
                    self.expect(a, env, S.BOOL)
                return S.BOOL
            if t.op == "=":
                a = self.infer(t.args[0], env)
                b = self.infer(t.args[1], env)
                self.unify(b, a, t.args[1])
                self.deferred.append(("eq", a, self.fname, t))
                return S.BOOL
        if isinstance(t, S.CanFlow):
            self.expect(t.lhs, env, S.LABEL)
            self.expect(t.rhs, env, S.LABEL)
            return S.BOOL
        if isinstance(t, S.Join):
            self.expect(t.lhs, env, S.LABEL)
            self.expect(t.rhs, env, S.LABEL)
            return S.LABEL
        if isinstance(t, S.LabelOp):
            inner = self.infer(t.value, env)
            self.expect(t.label, env, S.LABEL)
            self.deferred.append(("unnested", inner, self.fname, t))
            return S.LabeledT(inner)
        if isinstance(t, S.Unlabel):
            inner = self.fresh()
            self.expect(t.arg, env, S.LabeledT(inner))
            return inner
        if isinstance(t, (S.Call, S.ToLabeled)):
            params, ret = self.sigs[t.fname]
            if len(params) != len(t.args):
                self.fail(f"{t.fname} expects {len(params)} arguments", t)
            for a, pt in zip(t.args, params):
                self.expect(a, env, pt)
            if isinstance(t, S.ToLabeled):
                self.deferred.append(("unnested", ret, self.fname, t))
                return S.LabeledT(ret)
            return ret
        if isinstance(t, S.Nil):
            return S.ListT(self.fresh())
        if isinstance(t, S.Cons):
            h = self.infer(t.head, env)
            self.expect(t.tail, env, S.ListT(h))
            return S.ListT(h)
        if isinstance(t, S.MatchList):
            elem = self.fresh()
            self.expect(t.scrut, env, S.ListT(elem))
            a = self.infer(t.nil_branch, env)
            b = self.infer(t.cons_branch, {**env, t.hd: elem, t.tl: S.ListT(elem)})
            self.unify(b, a, t.cons_branch, "match branches differ")
            return a
        if isinstance(t, S.Pair):
            return S.PairT(self.infer(t.fst, env), self.infer(t.snd, env))
        if isinstance(t, (S.Fst, S.Snd)):
            a, b = self.fresh(), self.fresh()
            self.expect(t.arg, env, S.PairT(a, b))
            return a if isinstance(t, S.Fst) else b
        if isinstance(t, S.EraseLabeled):
            self.expect(t.level, env, S.LABEL)
            inner = self.fresh()
            self.expect(t.arg, env, S.LabeledT(inner))
            return S.LabeledT(inner)
        if isinstance(t, S.SetCurrent):
            self.expect(t.arg, env, S.LABEL)
            return S.UNIT
        self.fail("unknown term", t)

    def run(self) -> TypedProgram:
        for f in self.p.functions:
            self.fname = f.name
            for _, pt in f.params:
                if _nested_labeled(pt):
                    raise TypeCheckError("Labeled may not directly wrap Labeled", f.name)
            env = dict(f.params)
            ret = self.infer(f.body, env)
            self.unify(ret, self.sigs[f.name][1], f.body)
        for kind, ty, fname, term in self.deferred:
            self.fname = fname
            z = self.zonk(ty, S.UNIT)
            if kind == "eq" and not isinstance(z, _EQ_TYPES):
                self.fail(f"= compares Int, Bool, Label or Unit, not {z}", term)
            if kind == "unnested" and isinstance(z, S.LabeledT):
                self.fail("Labeled may not directly wrap Labeled", term)
        types = {k: self.zonk(v, S.UNIT) for k, v in self.raw.items()}
        for ty in types.values():
            if _nested_labeled(ty):
                raise TypeCheckError("Labeled may not directly wrap Labeled")
        sigs = {n: (ps, self.zonk(r, S.UNIT)) for n, (ps, r) in self.sigs.items()}
        return TypedProgram(self.p, types, sigs)


def _nested_labeled(t) -> bool:
    if isinstance(t, S.LabeledT):
        return isinstance(t.inner, S.LabeledT) or _nested_labeled(t.inner)
    if isinstance(t, S.ListT):
        return _nested_labeled(t.elem)
    if isinstance(t, S.PairT):
        return _nested_labeled(t.fst) or _nested_labeled(t.snd)
    return False


def typecheck(p: S.Program) -> TypedProgram:
    if isinstance(p, TypedProgram):
        return p
    return _Infer(p).run()
