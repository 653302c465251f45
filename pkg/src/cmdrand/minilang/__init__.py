"""The small imperative language programs are written in before analysis."""
from .ast import (
    Assign, CallExpr, CallStmt, Compare, Concat, Format, FunctionDef, If,
    IndirectCallExpr, Program, Return, SourceLocation, StrLit, Var, While,
    walk_expr, walk_program, walk_stmts,
)
from .parser import ParseError, parse, parse_file
from .unparse import unparse, unparse_expr

__all__ = [
    "Assign", "CallExpr", "CallStmt", "Compare", "Concat", "Format",
    "FunctionDef", "If", "IndirectCallExpr", "Program", "Return",
    "SourceLocation", "StrLit", "Var", "While", "ParseError", "parse",
    "parse_file", "unparse", "unparse_expr", "walk_expr", "walk_program",
    "walk_stmts",
]
