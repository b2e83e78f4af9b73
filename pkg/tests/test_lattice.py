import itertools
import random

import pytest
from hypothesis import given, strategies as st

from ifckit import lattice as lat
from ifckit.lattice import Label, LatticeError, LatticeSpec

RANK = {"Low": 0, "Medium": 1, "High": 2}
BUILTINS = ["trilevel", "twopoint", "powerset:A,B,C", "edr"]


def test_trilevel_examples(tri):
    low, med, high = (tri.parse_label(n) for n in ("Low", "Medium", "High"))
    assert lat.join(tri, low, med) == med
    assert lat.meet(tri, med, high) == med
    assert lat.bottom(tri) == low
    assert tri.top == high


def test_trilevel_matches_rank_oracle(tri):
    for a, b in itertools.product(tri.elements, repeat=2):
        ra, rb = RANK[a.name], RANK[b.name]
        assert tri.can_flow(a, b) == (ra <= rb)
        assert tri.join(a, b).name == max(a.name, b.name, key=RANK.get)
        assert tri.meet(a, b).name == min(a.name, b.name, key=RANK.get)


def test_powerset_matches_set_oracle():
    spec = lat.resolve("powerset:A,B,C")
    assert len(spec.elements) == 8
    for a, b in itertools.product(spec.elements, repeat=2):
        assert spec.can_flow(a, b) == (a.value <= b.value)
        assert spec.join(a, b).value == a.value | b.value
        assert spec.meet(a, b).value == a.value & b.value
    assert spec.bottom.value == frozenset()
    assert spec.parse_label("{A,C}").value == frozenset("AC")


def test_twopoint():
    spec = lat.resolve("twopoint")
    pub, sec = spec.elements
    assert spec.bottom == pub
    assert spec.can_flow(pub, sec) and not spec.can_flow(sec, pub)


def test_edr_diamond(edr):
    bot, comp, eng, top = (edr.parse_label(n) for n in ("Bot", "Computer", "Engine", "Edr"))
    assert not edr.can_flow(comp, eng) and not edr.can_flow(eng, comp)
    assert edr.join(comp, eng) == top
    assert edr.meet(comp, eng) == bot


@pytest.mark.parametrize("name", BUILTINS)
def test_laws_exhaustive_pass(name):
    report = lat.check_laws(lat.resolve(name))
    assert report.ok
    n = len(lat.resolve(name).elements)
    assert all(r.checked == n ** 3 for r in report.results)
    assert [r.law for r in report.results] == list(lat.LAWS)


def test_laws_powerset_two_principals():
    assert lat.check_laws(lat.resolve("powerset:A,B")).ok


@pytest.mark.parametrize("name", BUILTINS)
def test_order_join_meet_agree(name):
    spec = lat.resolve(name)
    for a, b in itertools.product(spec.elements, repeat=2):
        assert spec.can_flow(a, b) == (spec.join(a, b) == b) == (spec.meet(a, b) == a)


def _broken_trilevel():
    """Trilevel except that join(Low, High) = Low in both orders."""
    tri = lat.trilevel()

    def join(a, b):
        if {a.name, b.name} == {"Low", "High"}:
            return tri.parse_label("Low")
        return tri.join(a, b)

    els = [Label(l.lattice, l.value, l.name, l.index) for l in tri.elements]
    return LatticeSpec(tri.name, bottom=tri.bottom, can_flow=tri.can_flow, join=join, meet=tri.meet, elements=els)


def test_broken_join_witness_matches_brute_force():
    spec = _broken_trilevel()
    report = lat.check_laws(spec)
    assert not report.get("lawJoin").passed
    # brute force: first pair whose join is not an upper bound
    bad = [(x, y) for x, y in itertools.product(spec.elements, repeat=2)
           if not (spec.can_flow(x, spec.join(x, y)) and spec.can_flow(y, spec.join(x, y)))]
    assert bad[0] == (spec.parse_label("Low"), spec.parse_label("High"))
    assert report.get("lawJoin").witness == bad[0]
    for law in lat.LAWS:
        if law != "lawJoin":
            assert report.get(law).passed


def test_mutate_join_is_caught(tri):
    report = lat.check_laws(lat.mutate_join(tri))
    r = report.get("lawJoin")
    assert not r.passed and r.witness is not None
    x, y = r.witness[:2]
    assert not tri.can_flow(y, x)


def test_sampled_budget(tri):
    report = lat.check_laws(tri, 500, seed=3)
    assert report.ok and report.mode == "sampled:500"
    assert report.get("lawBot").checked == 500


def test_sampled_mutation_is_caught(tri):
    assert not lat.check_laws(lat.mutate_join(tri), 2000, seed=1).ok


def test_budget_errors(tri):
    with pytest.raises(LatticeError):
        lat.check_laws(tri, 0)
    with pytest.raises(LatticeError):
        lat.check_laws(tri, "lots")
    infinite = LatticeSpec("nat", bottom=Label("nat", 0), can_flow=lambda a, b: a.value <= b.value,
                           join=lambda a, b: max(a, b, key=lambda x: x.value),
                           meet=lambda a, b: min(a, b, key=lambda x: x.value),
                           sampler=lambda rng: Label("nat", rng.randrange(50)))
    with pytest.raises(LatticeError):
        lat.check_laws(infinite)
    assert lat.check_laws(infinite, 300).ok


def test_foreign_labels_rejected(tri):
    two = lat.resolve("twopoint")
    with pytest.raises(LatticeError):
        lat.join(tri, tri.bottom, two.bottom)
    with pytest.raises(LatticeError):
        tri.parse_label("Secret")
    with pytest.raises(LatticeError):
        lat.resolve("nope")


def test_from_order_and_register():
    spec = lat.from_order("chain4", ["a", "b", "c", "d"], [("a", "b"), ("b", "c"), ("c", "d")])
    assert lat.check_laws(spec).ok
    lat.register("chain4", lambda: spec)
    assert lat.resolve("chain4") is spec


def test_report_rendering(tri):
    doc = lat.check_laws(lat.mutate_join(tri)).to_dict()
    assert doc["ok"] is False
    assert {"law": "lawJoin", "passed": False, "checked": 27, "witness": ["Low", "Medium"]} in doc["laws"]
    assert "FAIL" in lat.check_laws(lat.mutate_join(tri)).table()


def test_labels_pickle_and_compare(tri):
    import pickle
    high = tri.parse_label("High")
    assert pickle.loads(pickle.dumps(high)) == high
    assert Label("trilevel", "High") == high
    assert Label("other", "High") != high


labels = st.sampled_from(lat.resolve("powerset:A,B,C").elements)


@given(labels, labels, labels)
def test_join_meet_algebra(a, b, c):
    spec = lat.resolve("powerset:A,B,C")
    j, m = spec.join, spec.meet
    assert j(a, b) == j(b, a) and m(a, b) == m(b, a)
    assert j(a, j(b, c)) == j(j(a, b), c) and m(a, m(b, c)) == m(m(a, b), c)
    assert j(a, a) == a and m(a, a) == a
    assert j(a, m(a, b)) == a and m(a, j(a, b)) == a


def test_sample_uses_rng(tri):
    rng = random.Random(0)
    seen = {tri.sample(rng) for _ in range(100)}
    assert seen == set(tri.elements)
