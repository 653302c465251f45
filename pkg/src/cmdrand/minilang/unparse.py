from __future__ import annotations

from .ast import (
    Assign, CallExpr, CallStmt, Compare, Concat, Format, FunctionDef, If,
    IndirectCallExpr, Program, Return, StrLit, Var, While,
)

_INDENT = "  "


def quote(text: str) -> str:
    out = text.replace("\\", "\\\\").replace('"', '\\"')
    return '"' + out.replace("\n", "\\n").replace("\t", "\\t") + '"'


def unparse_expr(e) -> str:
    if isinstance(e, StrLit):
        return quote(e.text)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Concat):
        right = unparse_expr(e.right)
        # concat is left-associative; a nested right operand needs parentheses
        if isinstance(e.right, (Concat, Compare)):
            right = f"({right})"
        left = unparse_expr(e.left)
        if isinstance(e.left, Compare):
            left = f"({left})"
        return f"{left} + {right}"
    if isinstance(e, Format):
        parts = [quote(e.template.text)] + [unparse_expr(a) for a in e.args]
        return f"format({', '.join(parts)})"
    if isinstance(e, CallExpr):
        return f"{e.callee}({', '.join(unparse_expr(a) for a in e.args)})"
    if isinstance(e, IndirectCallExpr):
        return f"{e.var}({', '.join(unparse_expr(a) for a in e.args)})"
    if isinstance(e, Compare):
        left, right = unparse_expr(e.left), unparse_expr(e.right)
        if isinstance(e.left, Compare):
            left = f"({left})"
        if isinstance(e.right, Compare):
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def _block(body, depth) -> list[str]:
    lines = []
    for s in body:
        lines.extend(_stmt(s, depth))
    return lines


def _stmt(s, depth) -> list[str]:
    pad = _INDENT * depth
    if isinstance(s, Assign):
        return [f"{pad}{s.target} = {unparse_expr(s.value)};"]
    if isinstance(s, CallStmt):
        return [f"{pad}{unparse_expr(s.call)};"]
    if isinstance(s, Return):
        return [f"{pad}return;"] if s.value is None else [f"{pad}return {unparse_expr(s.value)};"]
    if isinstance(s, If):
        lines = [f"{pad}if ({unparse_expr(s.cond)}) {{"]
        lines += _block(s.then, depth + 1)
        if s.orelse:
            lines.append(f"{pad}}} else {{")
            lines += _block(s.orelse, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, While):
        return ([f"{pad}while ({unparse_expr(s.cond)}) {{"]
                + _block(s.body, depth + 1) + [f"{pad}}}"])
    raise TypeError(f"not a statement: {s!r}")


def unparse_function(f: FunctionDef) -> str:
    head = f"fn {f.name}({', '.join(f.params)}){{"
    if not f.body:
        return head + "}"
    return "\n".join([head] + _block(f.body, 1) + ["}"])


def unparse(program: Program) -> str:
    chunks = [f"global {g};" for g in program.globals]
    if chunks:
        chunks.append("")
    chunks.append("\n\n".join(unparse_function(f) for f in program.functions))
    return "\n".join(chunks) + "\n"
