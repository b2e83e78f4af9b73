"""Shared test machinery: a random driver for the IFC core operations and
small program builders."""

import random

from ifckit import ifc_runtime as rt
from ifckit.ifc_runtime import IfcContext, IfcViolation, LabeledValue


def random_ops(rng: random.Random, spec, length: int, depth: int = 2) -> list:
    ops = []
    for _ in range(length):
        k = rng.random()
        if k < 0.3:
            ops.append(("label", rng.randrange(10), rng.choice(spec.elements)))
        elif k < 0.6:
            ops.append(("unlabel", LabeledValue(rng.randrange(10), rng.choice(spec.elements))))
        elif k < 0.8:
            ops.append(("raise", rng.choice(spec.elements)))
        elif k < 0.9:
            ops.append(("get",))
        elif depth > 0:
            ops.append(("tolabeled", random_ops(rng, spec, rng.randrange(4), depth - 1)))
    return ops


class Violation(AssertionError):
    pass


def run_checked(spec, ctx: IfcContext, ops: list, stats: dict | None = None) -> IfcContext:
    """Run ``ops`` from ``ctx``, asserting the core invariants after every
    step.  Policy errors stop the sequence (returning the context reached)."""

    def expect(cond, what):
        if not cond:
            raise Violation(what)

    for op in ops:
        before = ctx
        try:
            if op[0] == "label":
                lv, ctx = rt.label(spec, ctx, op[1], op[2])
                expect(ctx == before, "label changed cur")
                expect(lv.tag == op[2] and rt.payload_tcb(lv) == op[1], "label built the wrong value")
            elif op[0] == "unlabel":
                v, ctx = rt.unlabel(spec, ctx, op[1])
                expect(ctx.cur == spec.join(before.cur, op[1].tag), "unlabel is not join(cur, tag)")
                expect(v == rt.payload_tcb(op[1]), "unlabel returned the wrong payload")
            elif op[0] == "raise":
                ctx = rt.raise_label(spec, ctx, op[1])
                expect(ctx.cur == spec.join(before.cur, op[1]), "raise is not join")
            elif op[0] == "get":
                expect(rt.get_current(ctx) == ctx.cur, "get_current")
            else:
                inner = op[1]
                seen = {}

                def cmp(c, _inner=inner, _seen=seen):
                    end = run_checked(spec, c, _inner, stats)
                    _seen["end"] = end
                    return 0, end

                lv, ctx = rt.to_labeled(spec, ctx, cmp)
                expect(ctx == before, "to_labeled did not restore the entry context")
                expect(lv.tag == seen["end"].cur, "to_labeled tag is not the inner final label")
                if stats is not None:
                    stats["tolabeled"] = stats.get("tolabeled", 0) + 1
        except IfcViolation as exc:
            if stats is not None:
                stats[exc.error.kind.value] = stats.get(exc.error.kind.value, 0) + 1
            expect(ctx == before, "failed operation changed the context")
            raise
        if op[0] != "tolabeled":
            expect(spec.can_flow(before.cur, ctx.cur), "cur decreased")
        if ctx.clearance is not None:
            expect(spec.can_flow(ctx.cur, ctx.clearance), "cur above clearance")
    return ctx


def run_sequence(spec, ctx, ops, stats=None):
    try:
        return run_checked(spec, ctx, ops, stats)
    except IfcViolation:
        return None


def random_context(rng, spec):
    cur = rng.choice(spec.elements)
    if rng.random() < 0.5:
        return IfcContext(cur)
    return IfcContext(cur, rng.choice([c for c in spec.elements if spec.can_flow(cur, c)]))


# --------------------------------------------------------------------------
# Random well-typed programs
# --------------------------------------------------------------------------

from ifckit.dsl import syntax as S  # noqa: E402

LABELED_INT = S.LabeledT(S.INT)
LIST_INT = S.ListT(S.INT)
PAIR_IB = S.PairT(S.INT, S.BOOL)
PLAIN_TYPES = [S.INT, S.BOOL, LIST_INT, PAIR_IB]
LABEL_TYPES = [S.LABEL, LABELED_INT]


class ProgramGen:
    """Seeded generator of small first-order programs.

    With ``labels=False`` the programs never build or open a labeled value
    (they may still compute with labels and read the current label).  Every
    function only calls earlier ones, so runs always terminate.
    """

    def __init__(self, rng: random.Random, spec, *, labels: bool = True, max_depth: int = 3):
        self.rng = rng
        self.spec = spec
        self.labels = labels
        self.max_depth = max_depth
        self.site = 0
        self.names = 0
        self.funs: list[S.FunDef] = []
        self.results: dict[str, S.TypeExpr] = {}

    def fresh(self) -> str:
        self.names += 1
        return f"v{self.names}"

    def vars_of(self, env, ty):
        return [n for n, t in env.items() if t == ty]

    def callable_(self, ty):
        return [f for f in self.funs if self.results[f.name] == ty]

    def args_for(self, f, env, d):
        return tuple(self.term(t, env, d + 1) for _, t in f.params)

    def term(self, ty, env, d=0):
        rng = self.rng
        leaf = d >= self.max_depth
        vs = self.vars_of(env, ty)
        if vs and rng.random() < 0.35:
            return S.Var(rng.choice(vs))
        if not leaf and rng.random() < 0.12:
            bty = rng.choice(self.types())
            name = self.fresh()
            bound = self.term(bty, env, d + 1)
            return S.Let(name, bound, self.term(ty, {**env, name: bty}, d + 1))
        if not leaf and rng.random() < 0.1:
            return S.If(self.term(S.BOOL, env, d + 1), self.term(ty, env, d + 1), self.term(ty, env, d + 1))
        if not leaf and ty != LABELED_INT and rng.random() < 0.08:
            calls = self.callable_(ty)
            if calls:
                f = rng.choice(calls)
                return S.Call(f.name, self.args_for(f, env, d))
        if not leaf and rng.random() < 0.08:
            hd, tl = self.fresh(), self.fresh()
            return S.MatchList(self.term(LIST_INT, env, d + 1), self.term(ty, env, d + 1), hd, tl,
                               self.term(ty, {**env, hd: S.INT, tl: LIST_INT}, d + 1))
        return getattr(self, "t_" + type(ty).__name__)(ty, env, d, leaf)

    def types(self):
        return PLAIN_TYPES + (LABEL_TYPES if self.labels else [S.LABEL])

    def t_IntT(self, ty, env, d, leaf):
        rng = self.rng
        k = rng.random()
        if leaf or k < 0.3:
            return S.IntLit(rng.randrange(-3, 6))
        if k < 0.6:
            return S.Prim(rng.choice("+-*"), (self.term(S.INT, env, d + 1), self.term(S.INT, env, d + 1)))
        if k < 0.75:
            return S.Fst(self.term(PAIR_IB, env, d + 1))
        if self.labels and k < 0.95:
            return S.Unlabel(self.term(LABELED_INT, env, d + 1))
        return S.IntLit(rng.randrange(3))

    def t_BoolT(self, ty, env, d, leaf):
        rng = self.rng
        k = rng.random()
        if leaf or k < 0.25:
            return S.BoolLit(rng.random() < 0.5)
        if k < 0.45:
            return S.Prim(rng.choice(["=", "<"]), (self.term(S.INT, env, d + 1), self.term(S.INT, env, d + 1)))
        if k < 0.6:
            return S.Prim(rng.choice(["and", "or"]), (self.term(S.BOOL, env, d + 1), self.term(S.BOOL, env, d + 1)))
        if k < 0.7:
            return S.Prim("not", (self.term(S.BOOL, env, d + 1),))
        if k < 0.85:
            return S.CanFlow(self.term(S.LABEL, env, d + 1), self.term(S.LABEL, env, d + 1))
        return S.Snd(self.term(PAIR_IB, env, d + 1))

    def t_LabelT(self, ty, env, d, leaf):
        rng = self.rng
        k = rng.random()
        if leaf or k < 0.5:
            return S.LabelLit(rng.choice(self.spec.elements))
        if k < 0.75:
            return S.Join(self.term(S.LABEL, env, d + 1), self.term(S.LABEL, env, d + 1))
        return S.GetCurrent()

    def t_LabeledT(self, ty, env, d, leaf):
        rng = self.rng
        calls = self.callable_(S.INT)
        if not leaf and calls and rng.random() < 0.3:
            f = rng.choice(calls)
            return S.ToLabeled(f.name, self.args_for(f, env, d))
        self.site += 1
        site = self.site
        return S.LabelOp(self.term(S.INT, env, d + 1), self.term(S.LABEL, env, d + 1), site)

    def t_ListT(self, ty, env, d, leaf):
        if leaf or self.rng.random() < 0.4:
            return S.Nil()
        return S.Cons(self.term(S.INT, env, d + 1), self.term(LIST_INT, env, d + 1))

    def t_PairT(self, ty, env, d, leaf):
        return S.Pair(self.term(S.INT, env, d + 1), self.term(S.BOOL, env, d + 1))

    def function(self, name: str, result=None) -> S.FunDef:
        rng = self.rng
        params = tuple((f"p{i}", rng.choice(self.types())) for i in range(rng.randrange(4)))
        result = result or rng.choice([S.INT, S.BOOL] + ([LABELED_INT] if self.labels else []))
        pre = ()
        label_params = [n for n, t in params if t == S.LABEL]
        if label_params and rng.random() < 0.5:
            pre = (S.Var(rng.choice(label_params)),)
        body = self.term(result, dict(params))
        f = S.FunDef(name, params, pre, body)
        self.funs.append(f)
        self.results[name] = result
        return f

    def program(self, n_funs: int = 3) -> S.Program:
        for i in range(n_funs - 1):
            self.function(f"f{i}")
        self.function("main")
        return S.Program(tuple(self.funs), self.spec)


def random_program(seed: int, spec, *, labels: bool = True, n_funs: int = 3, max_depth: int = 3) -> S.Program:
    return ProgramGen(random.Random(seed), spec, labels=labels, max_depth=max_depth).program(n_funs)


def random_value(rng: random.Random, ty, spec):
    from ifckit.values import PairV, from_list
    if ty == S.INT:
        return rng.randrange(-2, 4)
    if ty == S.BOOL:
        return rng.random() < 0.5
    if ty == S.LABEL:
        return rng.choice(spec.elements)
    if ty == LABELED_INT:
        return LabeledValue(rng.randrange(4), rng.choice(spec.elements))
    if ty == LIST_INT:
        return from_list(rng.randrange(4) for _ in range(rng.randrange(3)))
    if ty == PAIR_IB:
        return PairV(rng.randrange(4), rng.random() < 0.5)
    raise TypeError(ty)


# --------------------------------------------------------------------------
# Analyzer soundness instrumentation
# --------------------------------------------------------------------------

def proved_site_violations(p, entry, cert, *, ints=(0, 1, 2), max_list=2, clearances=False, limit=None):
    """Run ``entry`` in Dynamic mode over the whole input grid with tracing
    and return every label event at a Proved site whose check would fail.
    Also returns the number of runs and Proved-site events inspected."""
    import itertools

    from ifckit import interp
    from ifckit.ni_checker import context_domain, value_domain

    spec = p.lattice
    f = p.function(entry)
    pools = [value_domain(t, spec, ints, max_list) for _, t in f.params]
    proved = set(cert.proved_sites())
    bad, runs, events = [], 0, 0
    for args in itertools.product(*pools):
        for ctx in context_domain(spec, clearances):
            if not interp.pre_holds(spec, f, args, ctx.cur):
                continue
            trace = []
            out = interp.eval_program(p, entry, list(args), ctx, trace=trace)
            runs += 1
            for ev in trace:
                if ev[0] == "label" and ev[1] in proved:
                    events += 1
                    if not spec.can_flow(ev[2], ev[3]):
                        bad.append((ev[1], ev[2], ev[3], args, ctx))
            if out.error is not None and out.error.kind.value == "InvalidLabel" and out.error.site in proved:
                bad.append((out.error.site, None, None, args, ctx))
            if limit is not None and runs >= limit:
                return bad, runs, events
    return bad, runs, events


def random_nested_value(rng: random.Random, spec, depth: int = 3):
    """Any runtime value, labeled values nested inside lists and pairs."""
    from ifckit.values import HOLE, PairV, from_list
    k = rng.random()
    if depth <= 0 or k < 0.3:
        return rng.choice([rng.randrange(-5, 50), True, False, None, rng.choice(spec.elements), HOLE])
    if k < 0.6:
        inner = random_nested_value(rng, spec, depth - 1)
        while isinstance(inner, LabeledValue):
            inner = random_nested_value(rng, spec, depth - 1)
        return LabeledValue(inner, rng.choice(spec.elements))
    if k < 0.8:
        return from_list(random_nested_value(rng, spec, depth - 1) for _ in range(rng.randrange(4)))
    return PairV(random_nested_value(rng, spec, depth - 1), random_nested_value(rng, spec, depth - 1))


# --------------------------------------------------------------------------
# Deliberately broken setups the noninterference checker must reject
# --------------------------------------------------------------------------

def mutation_fixtures(load) -> list[tuple[str, object, dict]]:
    """``(name, theorem, check_ni keyword arguments)`` triples.

    * setcurrent: trusted code lowers the current label after reading a secret;
    * check deletion: a forged certificate claims an unguarded site is proved,
      so the erased side runs with the check removed;
    * tag swap: an eraser that relabels every value at the observer's level.
    """
    from ifckit import analyzer as A, ni_checker as ni
    from ifckit.ifc_runtime import StaticResidual, payload_tcb

    leak = ni.gen_ni_theorem(load("leak_setcurrent", True), "leak", ints=(0, 1, 2, 57))

    t = ni.gen_ni_theorem(load("unguarded"), "publish")
    ep = t.erased.program
    forged = A.Certificate(A.program_hash(ep), {s: A.SiteVerdict.PROVED for s in ep.site_ids()}, {}, ep.lattice.name)
    deletion = (t, {"rhs_mode": StaticResidual(forged)})

    def swap(l, lv, spec):
        return LabeledValue(payload_tcb(lv), l)

    tag = ni.gen_ni_theorem(load("eqlabeled"), "eqLabeled")
    return [
        ("setcurrent", leak, {}),
        ("check-deletion", deletion[0], deletion[1]),
        ("tag-swap", tag, {"eraser": swap}),
    ]
