"""The nine acceptance criteria, each at its stated tolerance.  Every test
prints a single ``criterion N: PASS|FAIL`` line."""

import random
import time

import pytest

from ifckit import analyzer, interp, lattice as lat, ni_checker as ni
from ifckit.dsl import parse, pretty_print
from ifckit.erasure import erase_ctx, erase_labeled, erase_value, get_result_view
from ifckit.ifc_runtime import Ghost, IfcContext, LabeledValue, StaticResidual
from ifckit.values import strip_tags
from ifckit.workbench import run_bench
from ifckit.workbench.cases import corpus_names, corpus_text, mmu_page

from helpers import (
    mutation_fixtures, proved_site_violations, random_context, random_nested_value, random_ops, run_sequence,
)


def test_criterion_1_lattice_laws(verdict):
    t0 = time.perf_counter()
    results = {}
    for name in ("trilevel", "twopoint", "powerset:A,B,C"):
        report = lat.check_laws(lat.resolve(name), "exhaustive")
        results[name] = (report.ok, report.results[0].checked)
    broken = lat.check_laws(lat.mutate_join(lat.resolve("trilevel")), "exhaustive").get("lawJoin")
    elapsed = time.perf_counter() - t0
    ok = (all(r[0] for r in results.values())
          and results["trilevel"][1] == 27 and results["powerset:A,B,C"][1] == 512
          and not broken.passed and broken.witness is not None and elapsed < 1.0)
    detail = ", ".join(f"{k} {n} triples {'ok' if good else 'bad'}" for k, (good, n) in results.items())
    verdict(1, ok, f"{detail}; mutated join witness {broken.witness}; {elapsed:.3f}s")


def test_criterion_2_core_semantics(verdict):
    rng = random.Random(2024)
    stats = {}
    t0 = time.perf_counter()
    for _ in range(10_000):
        spec = lat.resolve(rng.choice(["trilevel", "powerset:A,B,C", "edr"]))
        run_sequence(spec, random_context(rng, spec), random_ops(rng, spec, rng.randrange(1, 12)), stats)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 10.0 and stats.get("tolabeled", 0) > 1000 and stats.get("InvalidLabel", 0) > 0
    verdict(2, ok, f"10000 sequences, {stats.get('tolabeled', 0)} tolabeled scopes, "
                   f"{stats.get('InvalidLabel', 0)} refused labels, {elapsed:.2f}s")


NI_TARGETS = [
    ("eqlabeled", "eqLabeled"),
    ("checklabeled", "checkLabeled"),
    ("dyncheck", "dynCheck"),
    ("bus", "edr_cycle"),
    ("bus", "edr_tick"),
    ("mmu", "mmu_scenario"),
]


def test_criterion_3_ni_passes(verdict, corpus):
    t0 = time.perf_counter()
    reports = {}
    for name, entry in NI_TARGETS:
        reports[entry] = ni.check_ni(ni.gen_ni_theorem(corpus(name), entry), ni.Exhaustive())
    elapsed = time.perf_counter() - t0
    ok = elapsed < 60 and all(r.passed and r.cases >= 1000 and r.inconclusive == 0 for r in reports.values())
    detail = ", ".join(f"{e} {r.verdict} ({r.cases} cases, {r.inconclusive} inconclusive)" for e, r in reports.items())
    verdict(3, ok, f"{detail}; {elapsed:.1f}s")


def test_criterion_4_ni_catches_leaks(verdict, corpus):
    parts, ok = [], True
    for name, theorem, kw in mutation_fixtures(corpus):
        r = ni.check_ni(theorem, ni.Exhaustive(), **kw)
        cex = r.counterexample
        good = (not r.passed and cex is not None and ni.replay(theorem, cex, **kw)
                and ni.shrink(theorem, cex, **kw) == cex)
        ok = ok and good
        parts.append(f"{name} {'FAIL+replay' if good else 'missed'} l={cex.l if cex else None}")
    verdict(4, ok and len(parts) >= 3, "; ".join(parts))


SOUNDNESS_TARGETS = [
    ("checklabeled", "checkLabeled", (0, 1, 2), 2),
    ("dyncheck", "dynCheck", (0, 1, 2), 2),
    ("mmu", "mmu_scenario", (0, 1, 2), 2),
    ("mmu", "init_cells", (0, 1, 2), 2),
    ("mmu", "mem_write", (0, 1), 2),
    ("bus", "edr_cycle", (0, 1, 2), 2),
    ("bus", "edr_tick", (0, 1, 2), 2),
    ("bus", "write_bus", (0, 1), 1),
]


def test_criterion_5_analyzer(verdict, corpus):
    certs = {n: analyzer.analyze(corpus(n)) for n in ("checklabeled", "dyncheck", "bus", "mmu", "datastar")}
    proofs = (certs["checklabeled"].verdict(1) is analyzer.Proved and certs["dyncheck"].verdict(1) is analyzer.Proved
              and certs["bus"].fully_proved and certs["mmu"].fully_proved)
    residual = len(certs["datastar"].needs_check_sites())
    runs = events = 0
    violations = []
    for name, entry, ints, max_list in SOUNDNESS_TARGETS:
        bad, n, e = proved_site_violations(corpus(name), entry, certs[name], ints=ints, max_list=max_list,
                                           clearances=True)
        violations += bad
        runs += n
        events += e
    ok = proofs and residual >= 1 and not violations and events > 0
    verdict(5, ok, f"checkLabeled/dynCheck/BUS/MMU proved={proofs}, datastar NeedsCheck={residual}, "
                   f"{runs} instrumented runs, {events} proved-site labels, {len(violations)} InvalidLabel")


def _coherence_inputs(name, p, rng):
    spec = p.lattice
    els = spec.elements
    if name == "bus":
        if rng.random() < 0.5:
            src = rng.choice(els)
            cur = rng.choice([c for c in els if spec.can_flow(c, src)])
            return "edr_tick", [src, rng.randrange(256), LabeledValue(rng.randrange(256), rng.choice(els))], cur
        return "edr_cycle", [LabeledValue(rng.randrange(256), rng.choice(els)), rng.randrange(256),
                             rng.randrange(256)], spec.bottom
    med = spec.parse_label("Medium")
    cur = rng.choice([c for c in els if spec.can_flow(c, med)])
    b1 = LabeledValue(rng.randrange(256), rng.choice(els))
    b2 = LabeledValue(rng.randrange(256), rng.choice(els))
    off = rng.randrange(3)
    if rng.random() < 0.5:
        return "mmu_tick", [b1, b2, off, mmu_page(p, spec.parse_label("High"))], cur
    return "mmu_scenario", [b1, b2, off], cur


def test_criterion_6_mode_coherence(verdict, corpus):
    parts, ok = [], True
    for name in ("bus", "mmu"):
        p = corpus(name)
        cert = analyzer.analyze(p)
        static, ghost = StaticResidual(cert), Ghost(cert)
        rng = random.Random(606)
        mismatches = ghost_mismatches = 0
        for _ in range(10_000):
            entry, args, cur = _coherence_inputs(name, p, rng)
            clr = rng.choice([None] + [k for k in p.lattice.elements if p.lattice.can_flow(cur, k)])
            ctx = IfcContext(cur, clr)
            d = interp.eval_program(p, entry, args, ctx)
            s = interp.eval_program(p, entry, args, ctx, static)
            mismatches += d != s
            if clr is None and d.ok:
                g = interp.eval_program(p, entry, args, ctx, ghost)
                ghost_mismatches += g.value != strip_tags(d.value)
        ok = ok and mismatches == 0 and ghost_mismatches == 0
        parts.append(f"{name} D/S mismatches {mismatches}, ghost payload mismatches {ghost_mismatches}")
    verdict(6, ok, "10000 workloads each; " + "; ".join(parts))


@pytest.mark.slow
def test_criterion_7_performance_direction(verdict):
    reports = {
        "bus": run_bench("bus", "d,s,g", 10**6, seed=7),
        "mmu": run_bench("mmu", "d,s,g", 10**6, seed=7),
        "datastar": run_bench("datastar", "d,s", 300, seed=7),
    }
    parts, ok = [], True
    for name in ("bus", "mmu"):
        r = reports[name]
        t = {m: r.timings[m].total_ns for m in r.timings}
        good = (t["ghost"] < t["static"] < t["dynamic"] and r.speedup("ghost") >= 0.20
                and r.speedup("static") >= 0.05)
        ok = ok and good
        parts.append(f"{name} D->S {r.speedup('static'):.1%} D->G {r.speedup('ghost'):.1%}")
    ds = reports["datastar"].speedup("static")
    ok = ok and ds < reports["bus"].speedup("static") and "ghost" not in reports["datastar"].timings
    parts.append(f"datastar D->S {ds:.1%} (< bus)")
    verdict(7, ok, "; ".join(parts))


def test_criterion_8_erasure_algebra(verdict):
    spec = lat.resolve("trilevel")
    rng = random.Random(8)
    failures = checks = 0
    t0 = time.perf_counter()
    for _ in range(10_000):
        v = random_nested_value(rng, spec)
        tag = rng.choice(spec.elements)
        cur = rng.choice(spec.elements)
        lv = LabeledValue(strip_tags(v), tag)
        for l in spec.elements:
            e = erase_value(l, v, spec)
            ok = erase_value(l, e, spec) == e
            for l2 in spec.elements:
                if spec.can_flow(l, l2):
                    ok = ok and erase_value(l, erase_value(l2, v, spec), spec) == e
            ok = ok and erase_labeled(l, lv, spec).tag == tag
            ok = ok and get_result_view(l, v, IfcContext(cur), spec) == erase_ctx(l, (v, IfcContext(cur)), spec)
            failures += not ok
            checks += 1
    elapsed = time.perf_counter() - t0
    verdict(8, failures == 0 and elapsed < 10,
            f"10000 values x 3 labels ({checks} checks), {failures} failures, {elapsed:.2f}s")


def test_criterion_9_round_trip(verdict):
    names = corpus_names()
    bad = []
    sites = 0
    for name in names:
        p = parse(corpus_text(name), allow_tcb=True)
        q = parse(pretty_print(p), allow_tcb=True)
        sites += len(p.site_ids())
        if q != p or q.site_ids() != p.site_ids():
            bad.append(name)
    verdict(9, not bad and len(names) >= 9, f"{len(names)} corpus files, {sites} sites, mismatches: {bad or 'none'}")
