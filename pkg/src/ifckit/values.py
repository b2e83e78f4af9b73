"""Runtime values of the client language.

Ints, bools, unit (``None``) and labels are plain Python objects.  Lists are
cons cells so that matching is O(1); pairs are :class:`PairV`.  ``HOLE`` stands
for erased data.
"""

from __future__ import annotations

from typing import Any, Iterable

from .lattice import Label, LatticeSpec
from .ifc_runtime import LabeledValue, payload_tcb


class _Hole:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "•"

    def __reduce__(self):
        return (_Hole, ())


HOLE = _Hole()


class _Nil:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "[]"

    def __iter__(self):
        return iter(())

    def __len__(self):
        return 0

    def __reduce__(self):
        return (_Nil, ())


NIL = _Nil()


class ConsV:
    __slots__ = ("head", "tail")

    def __init__(self, head, tail):
        self.head = head
        self.tail = tail

    def __iter__(self):
        node = self
        while isinstance(node, ConsV):
            yield node.head
            node = node.tail

    def __len__(self):
        return sum(1 for _ in self)

    def __eq__(self, other):
        a, b = self, other
        while isinstance(a, ConsV):
            if not isinstance(b, ConsV) or a.head != b.head:
                return False
            a, b = a.tail, b.tail
        return a is b if a is NIL or b is NIL else a == b

    def __hash__(self):
        return hash(("list",) + tuple(self))

    def __repr__(self):
        return "[" + ", ".join(repr(x) for x in self) + "]"

    def __reduce__(self):
        return (from_list, (list(self),))


class PairV:
    __slots__ = ("fst", "snd")

    def __init__(self, fst, snd):
        self.fst = fst
        self.snd = snd

    def __eq__(self, other):
        if not isinstance(other, PairV):
            return NotImplemented
        return self.fst == other.fst and self.snd == other.snd

    def __hash__(self):
        return hash(("pair", self.fst, self.snd))

    def __repr__(self):
        return f"({self.fst!r}, {self.snd!r})"

    def __reduce__(self):
        return (PairV, (self.fst, self.snd))


def from_list(items: Iterable[Any]):
    out = NIL
    for x in reversed(list(items)):
        out = ConsV(x, out)
    return out


def to_list(v) -> list:
    if v is NIL:
        return []
    if isinstance(v, ConsV):
        return list(v)
    raise TypeError(f"not a list value: {v!r}")


def contains_hole(v) -> bool:
    if v is HOLE:
        return True
    if isinstance(v, LabeledValue):
        return contains_hole(payload_tcb(v))
    if isinstance(v, ConsV):
        return any(contains_hole(x) for x in v)
    if isinstance(v, PairV):
        return contains_hole(v.fst) or contains_hole(v.snd)
    return False


def strip_tags(v):
    """Replace every labeled value by its payload (the ghost-mode view)."""
    if isinstance(v, LabeledValue):
        return strip_tags(payload_tcb(v))
    if isinstance(v, ConsV):
        return from_list(strip_tags(x) for x in v)
    if isinstance(v, PairV):
        return PairV(strip_tags(v.fst), strip_tags(v.snd))
    return v


def format_value(v) -> str:
    """Render a value in the same s-expression syntax :func:`parse_value` reads."""
    if v is HOLE:
        return "hole"
    if v is None:
        return "unit"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, Label):
        return v.name
    if isinstance(v, LabeledValue):
        return f"(labeled {format_value(payload_tcb(v))} {v.tag.name})"
    if v is NIL or isinstance(v, ConsV):
        return "(list" + "".join(" " + format_value(x) for x in to_list(v)) + ")"
    if isinstance(v, PairV):
        return f"(pair {format_value(v.fst)} {format_value(v.snd)})"
    raise TypeError(f"not a value: {v!r}")


def to_json(v):
    """JSON-friendly rendering for reports."""
    if v is HOLE:
        return {"hole": True}
    if v is None or isinstance(v, (bool, int)):
        return v
    if isinstance(v, Label):
        return {"label": v.name}
    if isinstance(v, LabeledValue):
        return {"labeled": to_json(payload_tcb(v)), "tag": v.tag.name}
    if v is NIL or isinstance(v, ConsV):
        return [to_json(x) for x in to_list(v)]
    if isinstance(v, PairV):
        return {"pair": [to_json(v.fst), to_json(v.snd)]}
    raise TypeError(f"not a value: {v!r}")


class ValueSyntaxError(ValueError):
    pass


def parse_value(text: str, spec: LatticeSpec):
    """Parse a value literal: ``3``, ``true``, ``unit``, ``High``, ``hole``,
    ``(list 1 2)``, ``(pair a b)``, ``(labeled 5 High)``."""
    from .dsl.parser import Atom, ParseError, read_sexprs

    try:
        data = read_sexprs(text)
    except ParseError as exc:
        raise ValueSyntaxError(str(exc)) from None
    if len(data) != 1:
        raise ValueSyntaxError(f"expected one value, got {len(data)}")

    def conv(d):
        if isinstance(d, Atom):
            s = d.text
            if s == "true":
                return True
            if s == "false":
                return False
            if s == "unit":
                return None
            if s == "hole":
                return HOLE
            try:
                return int(s)
            except ValueError:
                pass
            try:
                return spec.parse_label(s)
            except ValueError:
                raise ValueSyntaxError(f"unknown value atom {s!r}") from None
        items = d.items
        if not items or not isinstance(items[0], Atom):
            raise ValueSyntaxError("malformed value")
        head, rest = items[0].text, items[1:]
        if head == "list":
            return from_list(conv(x) for x in rest)
        if head == "pair" and len(rest) == 2:
            return PairV(conv(rest[0]), conv(rest[1]))
        if head == "labeled" and len(rest) == 2:
            tag = conv(rest[1])
            if not isinstance(tag, Label):
                raise ValueSyntaxError("labeled value needs a label tag")
            return LabeledValue(conv(rest[0]), tag)
        raise ValueSyntaxError(f"malformed value form {head!r}")

    return conv(data[0])
