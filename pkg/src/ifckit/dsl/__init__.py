"""The client language: syntax, parser, printer and type inference."""

from .parser import ParseError, parse, read_sexprs
from .printer import pretty_print
from .syntax import Program, FunDef
from .typecheck import TypeCheckError, TypedProgram, typecheck

__all__ = [
    "ParseError",
    "parse",
    "read_sexprs",
    "pretty_print",
    "Program",
    "FunDef",
    "TypeCheckError",
    "TypedProgram",
    "typecheck",
]
