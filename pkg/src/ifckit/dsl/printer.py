"""Pretty printer.  ``parse(pretty_print(p)) == p``, site ids included."""

from __future__ import annotations

from . import syntax as S

WIDTH = 78


def type_str(t: S.TypeExpr) -> str:
    return str(t)


def flat(t: S.Term) -> str:
    if isinstance(t, S.IntLit):
        return str(t.n)
    if isinstance(t, S.BoolLit):
        return "true" if t.b else "false"
    if isinstance(t, S.UnitLit):
        return "unit"
    if isinstance(t, S.LabelLit):
        return t.label.name
    if isinstance(t, S.Var):
        return t.name
    if isinstance(t, S.Let):
        return f"(let {t.name} {flat(t.bound)} {flat(t.body)})"
    if isinstance(t, S.If):
        return f"(if {flat(t.cond)} {flat(t.then)} {flat(t.els)})"
    if isinstance(t, S.Prim):
        return "(" + " ".join([t.op, *map(flat, t.args)]) + ")"
    if isinstance(t, S.CanFlow):
        return f"(canflow {flat(t.lhs)} {flat(t.rhs)})"
    if isinstance(t, S.Join):
        return f"(join {flat(t.lhs)} {flat(t.rhs)})"
    if isinstance(t, S.LabelOp):
        kw = "label" if t.checked else "label-unchecked"
        return f"({kw} {flat(t.value)} {flat(t.label)} @{t.site})"
    if isinstance(t, S.Unlabel):
        return f"(unlabel {flat(t.arg)})"
    if isinstance(t, (S.ToLabeled, S.Call)):
        kw = "tolabeled" if isinstance(t, S.ToLabeled) else "call"
        return "(" + " ".join([kw, t.fname, *map(flat, t.args)]) + ")"
    if isinstance(t, S.GetCurrent):
        return "(getcurrent)"
    if isinstance(t, S.Nil):
        return "(nil)"
    if isinstance(t, S.Cons):
        return f"(cons {flat(t.head)} {flat(t.tail)})"
    if isinstance(t, S.MatchList):
        return f"(match {flat(t.scrut)} (nil {flat(t.nil_branch)}) (cons {t.hd} {t.tl} {flat(t.cons_branch)}))"
    if isinstance(t, S.Pair):
        return f"(pair {flat(t.fst)} {flat(t.snd)})"
    if isinstance(t, S.Fst):
        return f"(fst {flat(t.arg)})"
    if isinstance(t, S.Snd):
        return f"(snd {flat(t.arg)})"
    if isinstance(t, S.EraseLabeled):
        return f"(eraselabeled {flat(t.level)} {flat(t.arg)})"
    if isinstance(t, S.SetCurrent):
        return f"(setcurrent! {flat(t.arg)})"
    raise TypeError(f"not a term: {t!r}")


def _block(t: S.Term, indent: int) -> str:
    """Multi-line layout for binding and branching forms that do not fit."""
    one = flat(t)
    if indent + len(one) <= WIDTH:
        return one
    pad = " " * (indent + 2)
    if isinstance(t, S.Let):
        return f"(let {t.name} {_block(t.bound, indent + 6 + len(t.name))}\n{pad}{_block(t.body, indent + 2)})"
    if isinstance(t, S.If):
        return (
            f"(if {_block(t.cond, indent + 4)}\n{pad}{_block(t.then, indent + 2)}\n"
            f"{pad}{_block(t.els, indent + 2)})"
        )
    if isinstance(t, S.MatchList):
        inner = " " * (indent + 4)
        return (
            f"(match {_block(t.scrut, indent + 7)}\n{pad}(nil {_block(t.nil_branch, indent + 7)})\n"
            f"{pad}(cons {t.hd} {t.tl}\n{inner}{_block(t.cons_branch, indent + 4)}))"
        )
    return one


def pre_str(pre) -> str:
    atoms = [f"(canflow cur {a.name if isinstance(a, S.Var) else a.label.name})" for a in pre]
    return atoms[0] if len(atoms) == 1 else "(and " + " ".join(atoms) + ")"


def print_fundef(f: S.FunDef) -> str:
    params = " ".join(f"({n} {type_str(t)})" for n, t in f.params)
    head = f"(def {f.name} ({params})"
    if f.pre:
        head += f" :pre {pre_str(f.pre)}"
    return f"{head}\n  {_block(f.body, 2)})"


def pretty_print(p: S.Program) -> str:
    parts = [f"; lattice: {p.lattice.name}"]
    parts.extend(print_fundef(f) for f in p.functions)
    return "\n\n".join(parts) + "\n"
