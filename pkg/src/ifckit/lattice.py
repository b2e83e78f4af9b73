"""Security-label lattices.

A :class:`LatticeSpec` bundles the order (``can_flow``), ``join``, ``meet``
and ``bottom`` of a label lattice, plus an optional finite enumeration of its
elements.  Labels are small immutable objects that remember which lattice they
belong to, so mixing labels from two lattices is caught early.

Built-in instances: ``trilevel`` (Low/Medium/High), ``twopoint``
(Public/Secret) and ``powerset:<P1,P2,...>`` (subsets of a principal set).
Other finite lattices can be built from a covering relation with
:func:`from_order` and made addressable by name with :func:`register`.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence


class LatticeError(ValueError):
    """Usage error: unknown lattice, foreign label, bad budget..."""


class Label:
    """An element of exactly one lattice.

    Equality is structural over ``(lattice, value)``.  ``index`` is the position
    in the owning lattice's enumeration, or -1 when the lattice is not
    enumerated.
    """

    __slots__ = ("lattice", "value", "name", "index", "_hash")

    def __init__(self, lattice: str, value: Hashable, name: str | None = None, index: int = -1):
        self.lattice = lattice
        self.value = value
        self.name = str(value) if name is None else name
        self.index = index
        self._hash = hash((lattice, value))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Label):
            return NotImplemented
        return self.value == other.value and self.lattice == other.lattice

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return (Label, (self.lattice, self.value, self.name, self.index))


class LatticeSpec:
    """Operation bundle for one security lattice.

    The four operations take and return :class:`Label` objects of this lattice.
    When ``elements`` is given, order and join/meet tables are precomputed from
    the supplied functions, so lookups are cheap and a broken definition is
    still faithfully reproduced (law checking needs that).
    """

    def __init__(
        self,
        name: str,
        *,
        bottom: Label,
        can_flow: Callable[[Label, Label], bool],
        join: Callable[[Label, Label], Label],
        meet: Callable[[Label, Label], Label],
        elements: Sequence[Label] | None = None,
        sampler: Callable[[random.Random], Label] | None = None,
    ):
        self.name = name
        self.bottom = bottom
        self.elements: tuple[Label, ...] | None = tuple(elements) if elements is not None else None
        self._sampler = sampler
        self._by_name: dict[str, Label] = {}
        if self.elements is None:
            self.can_flow = can_flow
            self.join = join
            self.meet = meet
            self.top = None
            return
        for i, lab in enumerate(self.elements):
            if lab.index != i or lab.lattice != name:
                raise LatticeError(f"element {lab!r} is not indexed for lattice {name}")
            self._by_name[lab.name] = lab
        els = self.elements
        # bitmask rows: bit j of row i set iff els[i] can flow to els[j]
        rows = []
        for a in els:
            mask = 0
            for b in els:
                if can_flow(a, b):
                    mask |= 1 << b.index
            rows.append(mask)
        self._rows = tuple(rows)
        self._join_tab = tuple(tuple(join(a, b) for b in els) for a in els)
        self._meet_tab = tuple(tuple(meet(a, b) for b in els) for a in els)
        tops = [a for a in els if all(rows[b.index] >> a.index & 1 for b in els)]
        self.top = tops[0] if len(tops) == 1 else None

    # The enumerated fast paths.  Bound at class level; instances without
    # elements shadow them with the user functions in __init__.
    def can_flow(self, a: Label, b: Label) -> bool:
        return bool(self._rows[a.index] >> b.index & 1)

    def join(self, a: Label, b: Label) -> Label:
        return self._join_tab[a.index][b.index]

    def meet(self, a: Label, b: Label) -> Label:
        return self._meet_tab[a.index][b.index]

    @property
    def finite(self) -> bool:
        return self.elements is not None

    def owns(self, lab: object) -> bool:
        if not isinstance(lab, Label) or lab.lattice != self.name:
            return False
        if self.elements is None:
            return True
        return 0 <= lab.index < len(self.elements) and self.elements[lab.index] == lab

    def check_member(self, *labels: object) -> None:
        for lab in labels:
            if not self.owns(lab):
                raise LatticeError(f"{lab!r} is not a label of lattice {self.name!r}")

    def parse_label(self, text: str) -> Label:
        try:
            return self._by_name[text]
        except KeyError:
            raise LatticeError(f"unknown label {text!r} in lattice {self.name!r}") from None

    def is_label_name(self, text: str) -> bool:
        return text in self._by_name

    def sample(self, rng: random.Random) -> Label:
        if self._sampler is not None:
            return self._sampler(rng)
        if self.elements:
            return rng.choice(self.elements)
        raise LatticeError(f"lattice {self.name!r} has neither elements nor a sampler")

    def join_all(self, labels: Iterable[Label]) -> Label:
        acc = self.bottom
        for lab in labels:
            acc = self.join(acc, lab)
        return acc

    def __repr__(self):
        return f"LatticeSpec({self.name!r})"


# --------------------------------------------------------------------------
# Public operations (validate membership, then delegate)
# --------------------------------------------------------------------------

def can_flow(spec: LatticeSpec, a: Label, b: Label) -> bool:
    spec.check_member(a, b)
    return spec.can_flow(a, b)


def join(spec: LatticeSpec, a: Label, b: Label) -> Label:
    spec.check_member(a, b)
    return spec.join(a, b)


def meet(spec: LatticeSpec, a: Label, b: Label) -> Label:
    spec.check_member(a, b)
    return spec.meet(a, b)


def bottom(spec: LatticeSpec) -> Label:
    return spec.bottom


# --------------------------------------------------------------------------
# Law checking
# --------------------------------------------------------------------------

LAWS = ("lawBot", "lawReflexivity", "lawAntisymmetry", "lawTransitivity", "lawMeet", "lawJoin")


@dataclass
class LawResult:
    law: str
    passed: bool
    checked: int
    witness: tuple[Label, ...] | None = None


@dataclass
class LawReport:
    lattice: str
    mode: str
    results: list[LawResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def get(self, law: str) -> LawResult:
        for r in self.results:
            if r.law == law:
                return r
        raise KeyError(law)

    def table(self) -> str:
        lines = [f"lattice {self.lattice} ({self.mode})"]
        for r in self.results:
            status = "pass" if r.passed else "FAIL"
            extra = "" if r.witness is None else "  witness=(" + ", ".join(map(repr, r.witness)) + ")"
            lines.append(f"  {r.law:<16} {status}  checked={r.checked}{extra}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "lattice": self.lattice,
            "mode": self.mode,
            "ok": self.ok,
            "laws": [
                {
                    "law": r.law,
                    "passed": r.passed,
                    "checked": r.checked,
                    "witness": None if r.witness is None else [x.name for x in r.witness],
                }
                for r in self.results
            ],
        }


def _law_violations(spec: LatticeSpec, x: Label, y: Label, z: Label) -> dict[str, tuple[Label, ...]]:
    """Evaluate every law instance for one triple; return the failing ones."""
    leq, jn, mt = spec.can_flow, spec.join, spec.meet
    bad: dict[str, tuple[Label, ...]] = {}
    if not leq(spec.bottom, x):
        bad["lawBot"] = (x,)
    if not leq(x, x):
        bad["lawReflexivity"] = (x,)
    if leq(x, y) and leq(y, x) and x != y:
        bad["lawAntisymmetry"] = (x, y)
    if leq(x, y) and leq(y, z) and not leq(x, z):
        bad["lawTransitivity"] = (x, y, z)
    m = mt(x, y)
    if not (leq(m, x) and leq(m, y)):
        bad["lawMeet"] = (x, y)
    elif leq(z, x) and leq(z, y) and not leq(z, m):
        bad["lawMeet"] = (x, y, z)
    j = jn(x, y)
    if not (leq(x, j) and leq(y, j)):
        bad["lawJoin"] = (x, y)
    elif leq(x, z) and leq(y, z) and not leq(j, z):
        bad["lawJoin"] = (x, y, z)
    return bad


def check_laws(spec: LatticeSpec, budget: int | str = "exhaustive", *, seed: int = 0) -> LawReport:
    """Check the six lattice laws by enumeration or seeded sampling.

    ``budget`` is either ``"exhaustive"`` (all triples, needs ``elements``) or
    a positive number of random triples.  Failures are report entries carrying
    the first witness found.
    """
    if budget == "exhaustive":
        if spec.elements is None:
            raise LatticeError(f"exhaustive law check needs a finite lattice; {spec.name!r} is not enumerated")
        triples: Iterable[tuple[Label, Label, Label]] = itertools.product(spec.elements, repeat=3)
        mode = "exhaustive"
    else:
        if not isinstance(budget, int) or isinstance(budget, bool) or budget < 1:
            raise LatticeError(f"budget must be 'exhaustive' or a positive int, got {budget!r}")
        rng = random.Random(seed)
        triples = ((spec.sample(rng), spec.sample(rng), spec.sample(rng)) for _ in range(budget))
        mode = f"sampled:{budget}"
    witnesses: dict[str, tuple[Label, ...]] = {}
    count = 0
    for x, y, z in triples:
        count += 1
        for law, w in _law_violations(spec, x, y, z).items():
            witnesses.setdefault(law, w)
    report = LawReport(spec.name, mode)
    for law in LAWS:
        report.results.append(LawResult(law, law not in witnesses, count, witnesses.get(law)))
    return report


# --------------------------------------------------------------------------
# Built-in instances
# --------------------------------------------------------------------------

def trilevel() -> LatticeSpec:
    """Low ⊑ Medium ⊑ High, with join/meet defined from the strict order."""
    low, medium, high = (Label("trilevel", n, index=i) for i, n in enumerate(("Low", "Medium", "High")))

    def lt(a: Label, b: Label) -> bool:
        return (a, b) in ((low, medium), (medium, high), (low, high))

    return LatticeSpec(
        "trilevel",
        bottom=low,
        can_flow=lambda a, b: lt(a, b) or a == b,
        join=lambda a, b: b if lt(a, b) else a,
        meet=lambda a, b: a if lt(a, b) else b,
        elements=(low, medium, high),
    )


def twopoint() -> LatticeSpec:
    public, secret = Label("twopoint", "Public", index=0), Label("twopoint", "Secret", index=1)
    return LatticeSpec(
        "twopoint",
        bottom=public,
        can_flow=lambda a, b: a == public or b == secret,
        join=lambda a, b: secret if secret in (a, b) else public,
        meet=lambda a, b: public if public in (a, b) else secret,
        elements=(public, secret),
    )


def _set_name(members: Iterable[str], order: Sequence[str]) -> str:
    return "{" + ",".join(p for p in order if p in members) + "}"


def powerset(principals: Sequence[str]) -> LatticeSpec:
    """Subsets of ``principals`` ordered by inclusion."""
    order = list(dict.fromkeys(principals))
    if not order:
        raise LatticeError("powerset lattice needs at least one principal")
    name = "powerset:" + ",".join(order)
    subsets = []
    for r in range(len(order) + 1):
        subsets.extend(itertools.combinations(order, r))
    elements = [Label(name, frozenset(s), _set_name(s, order), i) for i, s in enumerate(subsets)]
    by_value = {lab.value: lab for lab in elements}
    spec = LatticeSpec(
        name,
        bottom=by_value[frozenset()],
        can_flow=lambda a, b: a.value <= b.value,
        join=lambda a, b: by_value[a.value | b.value],
        meet=lambda a, b: by_value[a.value & b.value],
        elements=elements,
    )
    inner = spec.parse_label

    def parse(text: str) -> Label:
        t = text.strip()
        if t.startswith("{") and t.endswith("}"):
            members = frozenset(p.strip() for p in t[1:-1].split(",") if p.strip())
            if members in by_value:
                return by_value[members]
        return inner(text)

    spec.parse_label = parse  # type: ignore[method-assign]
    return spec


def from_order(name: str, names: Sequence[str], covers: Iterable[tuple[str, str]]) -> LatticeSpec:
    """Finite lattice from element names and a covering relation ``(lo, hi)``.

    The order is the reflexive-transitive closure of ``covers``; join and meet
    are computed as least upper / greatest lower bounds and must exist.
    """
    labels = [Label(name, n, index=i) for i, n in enumerate(names)]
    idx = {n: i for i, n in enumerate(names)}
    n = len(names)
    leq = [[i == j for j in range(n)] for i in range(n)]
    for lo, hi in covers:
        leq[idx[lo]][idx[hi]] = True
    for k in range(n):
        for i in range(n):
            if leq[i][k]:
                for j in range(n):
                    if leq[k][j]:
                        leq[i][j] = True

    def bound(i: int, j: int, upper: bool) -> Label:
        if upper:
            cands = [k for k in range(n) if leq[i][k] and leq[j][k]]
            best = [k for k in cands if all(leq[k][c] for c in cands)]
        else:
            cands = [k for k in range(n) if leq[k][i] and leq[k][j]]
            best = [k for k in cands if all(leq[c][k] for c in cands)]
        if len(best) != 1:
            raise LatticeError(f"{names[i]} and {names[j]} have no unique {'join' if upper else 'meet'} in {name}")
        return labels[best[0]]

    bottoms = [i for i in range(n) if all(leq[i][j] for j in range(n))]
    if len(bottoms) != 1:
        raise LatticeError(f"lattice {name!r} has no unique bottom")
    join_tab = [[bound(i, j, True) for j in range(n)] for i in range(n)]
    meet_tab = [[bound(i, j, False) for j in range(n)] for i in range(n)]
    return LatticeSpec(
        name,
        bottom=labels[bottoms[0]],
        can_flow=lambda a, b: leq[a.index][b.index],
        join=lambda a, b: join_tab[a.index][b.index],
        meet=lambda a, b: meet_tab[a.index][b.index],
        elements=labels,
    )


_REGISTRY: dict[str, Callable[[], LatticeSpec]] = {
    "trilevel": trilevel,
    "twopoint": twopoint,
}
_CACHE: dict[str, LatticeSpec] = {}


def register(name: str, factory: Callable[[], LatticeSpec]) -> None:
    """Make a lattice addressable by ``name`` in the DSL and the CLI."""
    _REGISTRY[name] = factory
    _CACHE.pop(name, None)


def resolve(name: str) -> LatticeSpec:
    """Look up a lattice by name; ``powerset:A,B,C`` builds a powerset."""
    key = name.strip()
    if key in _CACHE:
        return _CACHE[key]
    if key.startswith("powerset:"):
        principals = [p.strip() for p in key[len("powerset:"):].split(",") if p.strip()]
        spec = powerset(principals)
    elif key in _REGISTRY:
        spec = _REGISTRY[key]()
    else:
        raise LatticeError(f"unknown lattice {name!r}; known: {', '.join(sorted(_REGISTRY))}, powerset:<P1,...>")
    _CACHE[spec.name] = spec
    _CACHE[key] = spec
    return spec


def edr() -> LatticeSpec:
    """Four-point diamond for the event-data-recorder bus: the computer and the
    engine are incomparable and both flow to the recorder."""
    return from_order(
        "edr",
        ["Bot", "Computer", "Engine", "Edr"],
        [("Bot", "Computer"), ("Bot", "Engine"), ("Computer", "Edr"), ("Engine", "Edr")],
    )


_REGISTRY["edr"] = edr


def mutate_join(spec: LatticeSpec) -> LatticeSpec:
    """A deliberately broken copy of a finite lattice whose join returns its
    left argument.  Used to show that the law checker catches bad instances."""
    if spec.elements is None:
        raise LatticeError("mutate_join needs a finite lattice")
    return LatticeSpec(
        spec.name,
        bottom=spec.bottom,
        can_flow=spec.can_flow,
        join=lambda a, b: a,
        meet=spec.meet,
        elements=[Label(lab.lattice, lab.value, lab.name, lab.index) for lab in spec.elements],
    )
