"""The three case studies: corpus loading, host drivers and seeded workloads."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from .. import interp
from ..analyzer import Certificate, analyze
from ..dsl import parse
from ..dsl.syntax import Program
from ..lattice import Label, LatticeSpec
from ..ifc_runtime import IfcContext, IfcOutcome, LabeledValue
from ..values import NIL, PairV, from_list
from .box import Box

CORPUS = "ifckit.corpus"


def corpus_names() -> list[str]:
    return sorted(p.name for p in resources.files(CORPUS).iterdir() if p.name.endswith(".ifc"))


def corpus_text(name: str) -> str:
    if not name.endswith(".ifc"):
        name += ".ifc"
    return resources.files(CORPUS).joinpath(name).read_text()


def resolve_source(path: str) -> str:
    """Read ``path``; fall back to the bundled corpus file of the same name."""
    p = Path(path)
    if p.is_file():
        return p.read_text()
    try:
        return corpus_text(p.name)
    except FileNotFoundError:
        raise FileNotFoundError(f"no such program: {path}") from None


def load(name: str, *, allow_tcb: bool = False) -> Program:
    return parse(corpus_text(name), allow_tcb=allow_tcb)


# --------------------------------------------------------------------------
# BUS: the event-data recorder
# --------------------------------------------------------------------------

def bus_write(p: Program, ctx: IfcContext, actor: Label, data: int, bus=NIL) -> IfcOutcome:
    return interp.eval_program(p, "write_bus", [actor, data, bus], ctx)


def bus_read(p: Program, ctx: IfcContext, actor: Label, bus) -> IfcOutcome:
    return interp.eval_program(p, "read_bus", [actor, bus], ctx)


def edr_policy_allows(spec: LatticeSpec, reader: Label, writer: Label, bus) -> bool:
    """Hand-written separation policy for one read-then-write step.

    The reader opens the first packet addressed to it, which taints it with
    that packet's tag; it may then write on behalf of ``writer`` only if the
    tag flows to ``writer``.  Reading nothing taints nothing.
    """
    for entry in bus:
        if entry.fst == reader:
            return spec.can_flow(entry.snd.tag, writer)
    return True


def bus_packets(spec: LatticeSpec, data=(0, 1)) -> list[PairV]:
    """One packet for every destination and payload tag combination."""
    return [PairV(dest, LabeledValue(d, tag)) for dest in spec.elements for tag in spec.elements
            if spec.can_flow(tag, dest) for d in data]


# --------------------------------------------------------------------------
# MMU
# --------------------------------------------------------------------------

class MMUFault(Exception):
    """Out-of-bounds virtual address or forbidden write."""


def mmu_translate(p: Program, task: Label, page: int, off: int, is_write: bool,
                  writer: Label | None = None) -> int:
    """Physical index of ``(task, page, off)``; ``writer`` defaults to ``task``."""
    out = interp.eval_program(p, "translate", [writer or task, task, page, off, is_write],
                              IfcContext(p.lattice.bottom))
    if not out.ok:
        raise MMUFault(out.error.message)
    if out.value < 0:
        raise MMUFault(f"no mapping for ({task.name}, page {page}, offset {off}, write={is_write})")
    return out.value


def mmu_page(p: Program, task: Label, cells: int = 4):
    """A fresh page of ``cells`` zero bytes owned by ``task``."""
    out = interp.eval_program(p, "init_cells", [task, cells, NIL], IfcContext(p.lattice.bottom))
    if not out.ok:
        raise MMUFault(out.error.message)
    return out.value


# --------------------------------------------------------------------------
# DataStar
# --------------------------------------------------------------------------

def make_database(spec: LatticeSpec, seed: int, papers: int = 2000, by_mary: int = 1992) -> list[Box]:
    """Boxed papers: ``by_mary`` list Mary among the authors, the rest do
    not.  Co-authors and box labels are drawn from ``seed``; every box label
    bounds the paper's tag, some strictly."""
    if not 0 <= by_mary <= papers:
        raise ValueError("by_mary must be between 0 and papers")
    rng = random.Random(seed)
    mary = spec.parse_label("{Mary}")
    others = [lab for lab in spec.elements if lab.value and "Mary" not in lab.value]
    with_mary = [lab for lab in spec.elements if "Mary" in lab.value]
    db = []
    for i in range(papers):
        tag = (rng.choice(with_mary) if rng.random() < 0.3 else mary) if i < by_mary else rng.choice(others)
        above = [lab for lab in spec.elements if spec.can_flow(tag, lab)]
        box_tag = tag if rng.random() < 0.8 else rng.choice(above)
        db.append(Box(LabeledValue(rng.randrange(100), tag), box_tag, spec))
    rng.shuffle(db)
    return db


def database_value(db: list[Box]):
    return from_list(b.to_entry() for b in db)


def fetch_papers_for(p: Program, ctx: IfcContext, user: Label, db) -> IfcOutcome:
    return interp.eval_program(p, "fetch_papers_for", [user, db], ctx)


def add_review_from(p: Program, ctx: IfcContext, reviewer: Label, paper: LabeledValue) -> IfcOutcome:
    return interp.eval_program(p, "add_review_from", [reviewer, paper], ctx)


def reviewer_label(spec: LatticeSpec, rng: random.Random, db: list[Box], user: Label) -> Label:
    """The dynamic label a reviewer works under: drawn at random among the
    labels that dominate every fetched box label (so the run succeeds)."""
    need = spec.bottom
    for b in db:
        if spec.can_flow(user, b.runtime_tag):
            need = spec.join(need, b.inner.tag)
    return rng.choice([lab for lab in spec.elements if spec.can_flow(need, lab)])


# --------------------------------------------------------------------------
# Benchmark cases
# --------------------------------------------------------------------------

@dataclass
class Case:
    """A benchmark case: a program, the entry timed per iteration and a
    generator of distinct ``(args, ctx)`` items cycled through."""

    name: str
    source: str
    entry: str
    workload: Callable[[Program, int], list[tuple[list, IfcContext]]]
    default_iterations: int
    program: Program = field(init=False)

    def __post_init__(self):
        self.program = load(self.source)

    def certificate(self) -> Certificate:
        cert = self.program.__dict__.get("_certificate")
        if cert is None:
            cert = analyze(self.program)
            object.__setattr__(self.program, "_certificate", cert)
        return cert


def _bus_workload(p: Program, seed: int):
    spec = p.lattice
    rng = random.Random(seed)
    items = []
    for src in spec.elements:
        for tag in spec.elements:
            for _ in range(2):
                pkt = LabeledValue(rng.randrange(256), tag)
                items.append(([src, rng.randrange(256), pkt], IfcContext(spec.bottom)))
    rng.shuffle(items)
    return items


def _mmu_workload(p: Program, seed: int):
    spec = p.lattice
    rng = random.Random(seed)
    page = mmu_page(p, spec.parse_label("High"))
    medium = spec.parse_label("Medium")
    starts = [c for c in spec.elements if spec.can_flow(c, medium)]
    items = []
    for t1 in spec.elements:
        for t2 in spec.elements:
            for off in (0, 1, 2):
                b1 = LabeledValue(rng.randrange(256), t1)
                b2 = LabeledValue(rng.randrange(256), t2)
                items.append(([b1, b2, off, page], IfcContext(rng.choice(starts))))
    rng.shuffle(items)
    return items


def _datastar_workload(p: Program, seed: int, papers: int = 2000, by_mary: int = 1992, variants: int = 4):
    spec = p.lattice
    rng = random.Random(seed)
    mary = spec.parse_label("{Mary}")
    items = []
    for k in range(variants):
        db = make_database(spec, rng.randrange(2**31), papers, by_mary)
        reviewer = reviewer_label(spec, rng, db, mary)
        items.append(([mary, reviewer, database_value(db)], IfcContext(spec.bottom)))
    return items


CASES: dict[str, Case] = {}


def get_case(name: str) -> Case:
    if name not in CASES:
        factories = {
            "bus": lambda: Case("bus", "bus", "edr_tick", _bus_workload, 10**6),
            "mmu": lambda: Case("mmu", "mmu", "mmu_tick", _mmu_workload, 10**6),
            "datastar": lambda: Case("datastar", "datastar", "example", _datastar_workload, 200),
        }
        if name not in factories:
            raise KeyError(f"unknown case {name!r}; choose from bus, mmu, datastar")
        CASES[name] = factories[name]()
    return CASES[name]
