"""Floating-label IFC core: labeled values, the context, and its operations.

The operations here follow explicit context passing: each takes an
:class:`IfcContext` and returns the new one alongside its result.  Policy
violations raise :class:`IfcViolation`, which the evaluator turns into an
:class:`IfcError` value inside an :class:`IfcOutcome`.

Three enforcement modes are supported:

* ``DYNAMIC`` checks every ``label`` at runtime and tracks ``cur``.
* ``StaticResidual(cert)`` tracks ``cur`` but only checks sites the analyzer
  could not prove.
* ``Ghost(cert)`` tracks nothing at runtime; labeled values are their bare
  payloads.  Only programs whose every site is proved may run this way.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable

from .lattice import Label, LatticeSpec


class LabeledValue:
    """A payload protected by a tag.

    ``tag`` is public.  The payload lives in ``_data`` and is read only by
    :func:`unlabel` and by the erasure machinery (both trusted).
    """

    __slots__ = ("_data", "tag")

    def __init__(self, data: Any, tag: Label):
        # never reassigned after construction; kept as plain slots for speed
        self._data = data
        self.tag = tag

    def __eq__(self, other):
        if not isinstance(other, LabeledValue):
            return NotImplemented
        return self.tag == other.tag and self._data == other._data

    def __hash__(self):
        return hash((self.tag, _hashable(self._data)))

    def __repr__(self):
        return f"Labeled({self._data!r}, {self.tag!r})"

    def __reduce__(self):
        return (LabeledValue, (self._data, self.tag))


def _hashable(v):
    try:
        hash(v)
        return v
    except TypeError:
        return repr(v)


def label_of(lv: LabeledValue) -> Label:
    return lv.tag


def payload_tcb(lv: LabeledValue) -> Any:
    """Trusted payload access for erasure and test harnesses."""
    return lv._data


@dataclass(frozen=True)
class IfcContext:
    cur: Label
    clearance: Label | None = None


class ErrorKind(enum.Enum):
    INVALID_LABEL = "InvalidLabel"
    CLEARANCE_VIOLATION = "ClearanceViolation"
    FUEL_EXHAUSTED = "FuelExhausted"
    PRECONDITION_UNSATISFIED = "PreconditionUnsatisfied"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class IfcError:
    kind: ErrorKind
    message: str
    site: int | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "message": self.message, "site": self.site}


class IfcViolation(Exception):
    """Raised by the core operations; carries the :class:`IfcError`."""

    def __init__(self, error: IfcError):
        super().__init__(f"{error.kind}: {error.message}" + (f" @{error.site}" if error.site is not None else ""))
        self.error = error


@dataclass(frozen=True)
class IfcOutcome:
    """Either a result with its final context, or an error."""

    value: Any = None
    final: IfcContext | None = None
    error: IfcError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


# --------------------------------------------------------------------------
# Enforcement modes
# --------------------------------------------------------------------------

class Dynamic:
    name = "dynamic"

    def __repr__(self):
        return "Dynamic()"

    def __eq__(self, other):
        return isinstance(other, Dynamic)

    def __hash__(self):
        return hash("dynamic")


DYNAMIC = Dynamic()


class StaticResidual:
    name = "static"

    def __init__(self, certificate):
        self.certificate = certificate

    def __repr__(self):
        return f"StaticResidual({self.certificate.program_hash[:12]})"


class GhostRefused(ValueError):
    """Ghost execution was requested for a program with unproved sites."""

    def __init__(self, sites):
        self.sites = sorted(sites)
        super().__init__("ghost mode needs every label site proved; unproved sites: " + ", ".join(f"@{s}" for s in self.sites))


class Ghost:
    name = "ghost"

    def __init__(self, certificate):
        pending = certificate.needs_check_sites()
        if pending:
            raise GhostRefused(pending)
        self.certificate = certificate

    def __repr__(self):
        return f"Ghost({self.certificate.program_hash[:12]})"


EnforcementMode = Dynamic | StaticResidual | Ghost


# --------------------------------------------------------------------------
# Shared checks (the evaluator calls these too)
# --------------------------------------------------------------------------

def raised(spec: LatticeSpec, cur: Label, clearance: Label | None, lab: Label) -> Label:
    """``join(cur, lab)``, refusing to climb above the clearance."""
    new = spec.join(cur, lab)
    if clearance is not None and not spec.can_flow(new, clearance):
        raise IfcViolation(IfcError(ErrorKind.CLEARANCE_VIOLATION, f"current label {new!r} exceeds clearance {clearance!r}"))
    return new


def check_label(spec: LatticeSpec, cur: Label, clearance: Label | None, lab: Label, site: int | None = None) -> None:
    if not spec.can_flow(cur, lab):
        raise IfcViolation(IfcError(ErrorKind.INVALID_LABEL, "invalid label", site))
    if clearance is not None and not spec.can_flow(lab, clearance):
        raise IfcViolation(IfcError(ErrorKind.CLEARANCE_VIOLATION, f"label {lab!r} exceeds clearance {clearance!r}", site))


# --------------------------------------------------------------------------
# Context operations
# --------------------------------------------------------------------------

def get_current(ctx: IfcContext) -> Label:
    return ctx.cur


def set_current_tcb(spec: LatticeSpec, ctx: IfcContext, lab: Label) -> IfcContext:
    """Overwrite the current label.  Trusted code only: clients never get this."""
    if ctx.clearance is not None and not spec.can_flow(lab, ctx.clearance):
        raise IfcViolation(IfcError(ErrorKind.CLEARANCE_VIOLATION, f"label {lab!r} exceeds clearance {ctx.clearance!r}"))
    if lab == ctx.cur:
        return ctx
    return IfcContext(lab, ctx.clearance)


def raise_label(spec: LatticeSpec, ctx: IfcContext, lab: Label) -> IfcContext:
    new = raised(spec, ctx.cur, ctx.clearance, lab)
    return ctx if new == ctx.cur else IfcContext(new, ctx.clearance)


def unlabel(spec: LatticeSpec, ctx: IfcContext, lv, mode=DYNAMIC) -> tuple[Any, IfcContext]:
    if isinstance(mode, Ghost):
        return lv, ctx
    return lv._data, raise_label(spec, ctx, lv.tag)


def label(spec: LatticeSpec, ctx: IfcContext, value: Any, lab: Label, mode=DYNAMIC, site: int | None = None) -> tuple[Any, IfcContext]:
    """Protect ``value`` with ``lab``; ``cur`` is unchanged.

    Dynamic mode always checks ``cur ⊑ lab``.  Static mode checks only sites the
    certificate leaves as NeedsCheck.  Ghost mode returns the bare payload.
    """
    if isinstance(mode, Ghost):
        return value, ctx
    if isinstance(mode, StaticResidual):
        if site is None or mode.certificate.verdict(site).needs_check:
            check_label(spec, ctx.cur, ctx.clearance, lab, site)
    else:
        check_label(spec, ctx.cur, ctx.clearance, lab, site)
    return LabeledValue(value, lab), ctx


def to_labeled(
    spec: LatticeSpec,
    ctx: IfcContext,
    cmp: Callable[..., tuple[Any, IfcContext]],
    *args: Any,
    mode=DYNAMIC,
) -> tuple[Any, IfcContext]:
    """Run ``cmp(ctx, *args)``, label its result with the label it ended at,
    and restore the entry current label."""
    if isinstance(mode, Ghost):
        value, _ = cmp(ctx, *args)
        return value, ctx
    value, after = cmp(ctx, *args)
    if isinstance(mode, Dynamic):
        check_label(spec, after.cur, after.clearance, after.cur)
    lv = LabeledValue(value, after.cur)
    return lv, IfcContext(ctx.cur, ctx.clearance)
