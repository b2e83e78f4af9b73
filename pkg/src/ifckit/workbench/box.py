"""Boxed labeled values: a labeled value with a label kept at run time that
bounds its tag from above.  Ghost-mode code cannot read tags, so it unboxes
with the box label instead and over-approximates the flow."""

from __future__ import annotations

from ..lattice import Label, LatticeSpec
from ..ifc_runtime import IfcContext, LabeledValue, payload_tcb, raised
from ..values import PairV


class BoxError(ValueError):
    pass


class Box:
    __slots__ = ("_inner", "_tag")

    def __init__(self, inner: LabeledValue, runtime_tag: Label, spec: LatticeSpec):
        if not spec.can_flow(inner.tag, runtime_tag):
            raise BoxError(f"box label {runtime_tag!r} does not bound the value's tag {inner.tag!r}")
        self._inner = inner
        self._tag = runtime_tag

    @property
    def inner(self) -> LabeledValue:
        return self._inner

    @property
    def runtime_tag(self) -> Label:
        return self._tag

    def to_entry(self) -> PairV:
        """The DSL encoding: ``(pair runtime_tag inner)``."""
        return PairV(self._tag, self._inner)

    @classmethod
    def from_entry(cls, entry: PairV, spec: LatticeSpec) -> "Box":
        return cls(entry.snd, entry.fst, spec)

    def __eq__(self, other):
        return isinstance(other, Box) and self._inner == other._inner and self._tag == other._tag

    def __hash__(self):
        return hash((self._inner, self._tag))

    def __repr__(self):
        return f"Box({self._inner!r}, {self._tag!r})"


def unbox(spec: LatticeSpec, ctx: IfcContext, b: Box) -> tuple[object, IfcContext]:
    """Read the payload, raising the current label by the box label."""
    cur = raised(spec, ctx.cur, ctx.clearance, b.runtime_tag)
    return payload_tcb(b.inner), IfcContext(cur, ctx.clearance)
