import random

import pytest
from hypothesis import given, settings, strategies as st

from ifckit import analyzer, interp, lattice as lat
from ifckit.dsl import parse
from ifckit.dsl import syntax as S
from ifckit.erasure import eval_hole_prim
from ifckit.ifc_runtime import (
    DYNAMIC, ErrorKind, Ghost, IfcContext, IfcViolation, LabeledValue, StaticResidual,
)
from ifckit.values import HOLE, NIL, PairV, from_list, strip_tags, to_list

from helpers import random_program, random_value

TRI = lat.resolve("trilevel")
LOW, MED, HIGH = TRI.elements


def run(src, entry="f", args=(), cur=LOW, clearance=None, mode=DYNAMIC, fuel=interp.DEFAULT_FUEL, **kw):
    p = parse(src, "trilevel") if isinstance(src, str) else src
    return interp.eval_program(p, entry, list(args), IfcContext(cur, clearance), mode, fuel, **kw)


def test_unlabel_of_fresh_label():
    out = run("(def f () (unlabel (label 5 High @1)))")
    assert out.ok and out.value == 5 and out.final == IfcContext(HIGH)


def test_invalid_label_carries_site():
    out = run("(def f () (label 1 Low @4))", cur=HIGH)
    assert out.error.kind is ErrorKind.INVALID_LABEL and out.error.site == 4
    assert out.error.message == "invalid label"


def test_tolabeled_restores():
    src = "(def g ((s (Labeled Int))) (unlabel s)) (def f ((s (Labeled Int))) (tolabeled g s))"
    out = run(src, args=[LabeledValue(3, HIGH)])
    assert out.value == LabeledValue(3, HIGH) and out.final.cur == LOW


def test_prims_and_structures():
    src = """
    (def len ((xs (List Int))) (match xs (nil 0) (cons h t (+ 1 (call len t)))))
    (def f ((xs (List Int)) (p (Pair Int Bool)))
      (pair (+ (* (fst p) 3) (- (call len xs) 1))
            (and (or (snd p) (< 2 1)) (not (= 1 2)))))
    """
    out = run(src, args=[from_list([4, 5, 6]), PairV(2, True)])
    assert out.value == PairV(8, True)


def test_join_canflow_getcurrent():
    src = "(def f ((l Label)) (pair (join l Medium) (canflow (getcurrent) l)))"
    assert run(src, args=[LOW], cur=MED).value == PairV(MED, False)
    assert run(src, args=[HIGH], cur=MED).value == PairV(HIGH, True)


def test_clearance():
    src = "(def f ((s (Labeled Int))) (unlabel s))"
    out = run(src, args=[LabeledValue(1, HIGH)], clearance=MED)
    assert out.error.kind is ErrorKind.CLEARANCE_VIOLATION
    out = run("(def f () (label 1 High @1))", clearance=MED)
    assert out.error.kind is ErrorKind.CLEARANCE_VIOLATION and out.error.site == 1
    assert run(src, args=[LabeledValue(1, MED)], clearance=MED).final == IfcContext(MED, MED)


def test_precondition():
    src = "(def f ((l Label)) :pre (canflow cur l) (label 1 l @1))"
    assert run(src, args=[LOW], cur=MED).error.kind is ErrorKind.PRECONDITION_UNSATISFIED
    assert run(src, args=[HIGH], cur=MED).ok


def test_usage_errors():
    with pytest.raises(interp.UsageError):
        run("(def f () 1)", entry="g")
    with pytest.raises(interp.UsageError):
        run("(def f ((x Int)) x)", args=[True])
    with pytest.raises(interp.UsageError):
        run("(def f ((x Int)) x)", args=[])
    with pytest.raises(interp.UsageError):
        run("(def f () 1)", fuel=-1)


def test_fuel():
    src = "(def loop ((n Int)) (call loop (+ n 1))) (def f () (call loop 0))"
    out = run(src, fuel=50)
    assert out.error.kind is ErrorKind.FUEL_EXHAUSTED
    count = "(def down ((n Int)) (if (< n 1) 0 (call down (- n 1)))) (def f ((n Int)) (call down n))"
    # f plus 11 calls of down
    assert not run(count, args=[10], fuel=11).ok
    assert run(count, args=[10], fuel=12).value == 0


def test_deep_recursion_does_not_crash_host():
    src = "(def len ((xs (List Int))) (match xs (nil 0) (cons h t (+ 1 (call len t)))))"
    out = run(src, entry="len", args=[from_list(range(3000))])
    assert out.ok and out.value == 3000


def test_hole_prims():
    assert eval_hole_prim("+", [HOLE, 3]) is HOLE
    assert eval_hole_prim("=", [HOLE, 42]) is HOLE
    assert eval_hole_prim("not", [HOLE]) is HOLE
    assert eval_hole_prim("*", [0, HOLE]) is HOLE
    assert eval_hole_prim("+", [1, 2]) == 3


def test_hole_semantics_in_interpreter():
    assert run("(def f ((b Bool)) (if b 1 2))", args=[HOLE]).value is HOLE
    assert run("(def f ((x Int)) (+ x 3))", args=[HOLE]).value is HOLE
    assert run("(def f ((xs (List Int))) (match xs (nil 0) (cons h t h)))", args=[HOLE]).value is HOLE
    # constructors keep holes inside
    assert run("(def f ((x Int)) (pair x 1))", args=[HOLE]).value == PairV(HOLE, 1)
    assert to_list(run("(def f ((x Int)) (cons x (nil)))", args=[HOLE]).value) == [HOLE]
    # unlabel of an erased payload still raises by the public tag
    out = run("(def f ((s (Labeled Int))) (unlabel s))", args=[LabeledValue(HOLE, HIGH)])
    assert out.value is HOLE and out.final.cur == HIGH


def test_ghost_mode(corpus):
    p = corpus("checklabeled")
    cert = analyzer.analyze(p)
    args = [MED, 3, LabeledValue(3, HIGH)]
    d = interp.eval_program(p, "checkLabeled", args, IfcContext(LOW))
    g = interp.eval_program(p, "checkLabeled", args, IfcContext(LOW), Ghost(cert))
    assert d.value is True and g.value is True and g.final is None
    g2 = interp.eval_program(p, "checkLabeled", args, IfcContext(LOW), Ghost(cert), ghost_context=True)
    assert g2.final == d.final == IfcContext(HIGH)
    with pytest.raises(interp.UsageError):
        interp.eval_program(p, "checkLabeled", args, IfcContext(LOW, HIGH), Ghost(cert))


def test_static_mode_keeps_needed_checks(corpus):
    p = corpus("unguarded")
    cert = analyzer.analyze(p)
    out = interp.eval_program(p, "publish", [1], IfcContext(HIGH), StaticResidual(cert))
    assert out.error.kind is ErrorKind.INVALID_LABEL and out.error.site == 1


def test_trace_records_events():
    src = "(def g ((s (Labeled Int))) (unlabel s)) (def f ((s (Labeled Int))) (let x (tolabeled g s) (label 1 Medium @1)))"
    trace = []
    out = run(src, args=[LabeledValue(2, HIGH)], trace=trace)
    assert out.ok
    kinds = [e[0] for e in trace]
    assert kinds == ["enter", "unlabel", "exit", "label"]
    assert trace[1][4] == 1 and trace[-1][5] == 0


def test_runner_matches_eval(corpus):
    p = corpus("checklabeled")
    r = interp.Runner(p, "checkLabeled")
    assert r([MED, 1, LabeledValue(1, LOW)], IfcContext(LOW)) == (True, MED)
    with pytest.raises(IfcViolation):
        interp.Runner(p, "eqLabeled")([LabeledValue(1, HIGH), LabeledValue(1, LOW)], IfcContext(LOW, MED))
    with pytest.raises(interp.UsageError):
        interp.Runner(p, "nope")


def test_nesting_limit():
    from ifckit.dsl import ParseError
    from ifckit.dsl.parser import MAX_NESTING
    deep = 3000
    with pytest.raises(ParseError):
        parse("(def f () " + "(+ 1 " * deep + "0" + ")" * deep + ")", "trilevel")
    ok = MAX_NESTING - 3
    assert run("(def f () " + "(+ 1 " * ok + "0" + ")" * ok + ")").value == ok


def _inputs(rng, f, spec, n=6):
    cases = []
    for _ in range(n):
        args = [random_value(rng, t, spec) for _, t in f.params]
        cur = rng.choice(spec.elements)
        cases.append((args, IfcContext(cur)))
    return cases


@settings(max_examples=150)
@given(st.integers(0, 10**7))
def test_determinism_and_fuel_monotonicity(seed):
    p = random_program(seed, TRI)
    rng = random.Random(seed)
    for args, ctx in _inputs(rng, p.function("main"), TRI, 3):
        a = interp.eval_program(p, "main", args, ctx)
        b = interp.eval_program(p, "main", args, ctx)
        assert a == b
        if a.ok:
            assert interp.eval_program(p, "main", args, ctx, fuel=10**7) == a


@settings(max_examples=200)
@given(st.integers(0, 10**7))
def test_dynamic_and_residual_agree(seed):
    p = random_program(seed, TRI)
    cert = analyzer.analyze(p)
    static = StaticResidual(cert)
    # ghost mode does not track the current label, so it cannot answer getcurrent
    reads_cur = any(isinstance(t, S.GetCurrent) for f in p.functions for t in S.walk(f.body))
    ghost = Ghost(cert) if cert.fully_proved and not reads_cur else None
    rng = random.Random(seed)
    for args, ctx in _inputs(rng, p.function("main"), TRI):
        d = interp.eval_program(p, "main", args, ctx)
        s = interp.eval_program(p, "main", args, ctx, static)
        assert d == s
        if ghost is not None and d.ok:
            g = interp.eval_program(p, "main", args, ctx, ghost)
            assert g.value == strip_tags(d.value)


@settings(max_examples=150)
@given(st.integers(0, 10**7))
def test_final_label_is_fold_of_unlabels(seed):
    p = random_program(seed, TRI)
    rng = random.Random(seed)
    for args, ctx in _inputs(rng, p.function("main"), TRI, 3):
        trace = []
        out = interp.eval_program(p, "main", args, ctx, trace=trace)
        if not out.ok:
            continue
        expect = ctx.cur
        for ev in trace:
            if ev[0] == "unlabel" and ev[-1] == 0:
                expect = TRI.join(expect, ev[1])
        assert out.final.cur == expect


def test_value_helpers():
    from ifckit.values import format_value, parse_value, to_json
    v = parse_value("(pair (list 1 (labeled 2 High)) (pair unit hole))", TRI)
    assert format_value(v) == "(pair (list 1 (labeled 2 High)) (pair unit hole))"
    assert to_json(LabeledValue(1, LOW)) == {"labeled": 1, "tag": "Low"}
    assert strip_tags(from_list([LabeledValue(1, HIGH)])) == from_list([1])
    assert NIL == from_list([])
