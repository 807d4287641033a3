"""Syntax tree for the Cypher subset and its canonical text rendering.

Parsing normalizes label order and property-map key order, so
parse(render(statement)) is structurally equal to the statement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

CREATE = "CREATE"
MERGE = "MERGE"
MATCH_RETURN = "MATCH_RETURN"
MATCH_SET = "MATCH_SET"


@dataclass
class NodePattern:
    var: str | None
    labels: list[str]
    properties: dict


@dataclass
class RelPattern:
    var: str | None
    type: str | None  # None matches any type (MATCH patterns only)
    properties: dict
    reversed: bool = False  # True for <-[...]-


@dataclass
class Pattern:
    nodes: list[NodePattern]
    rels: list[RelPattern]

    def hops(self) -> int:
        return len(self.rels)


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class PropRef:
    var: str
    key: str


@dataclass(frozen=True)
class VarRef:
    var: str


@dataclass
class Cmp:
    op: str  # = <> < >
    left: object
    right: object


@dataclass
class BoolOp:
    op: str  # AND | OR
    items: list


@dataclass(frozen=True)
class Agg:
    func: str  # count | sum | avg
    arg: object  # VarRef | PropRef


@dataclass
class ReturnItem:
    expr: object  # VarRef | PropRef | Agg
    alias: str | None = None


@dataclass
class OrderItem:
    ref: str  # alias or rendered return expression
    desc: bool = False


@dataclass
class SetItem:
    target: PropRef
    value: Lit


@dataclass
class Statement:
    kind: str
    pattern: Pattern
    where: object = None
    return_items: list[ReturnItem] | None = None
    order_by: list[OrderItem] | None = None
    limit: int | None = None
    set_items: list[SetItem] | None = None
    line: int = field(default=1, compare=False)
    column: int = field(default=1, compare=False)

    @property
    def is_write(self) -> bool:
        return self.kind in (CREATE, MERGE, MATCH_SET)


# -- canonical rendering ---------------------------------------------------


def render_value(v) -> str:
    """Canonical literal text: sorted-key maps elsewhere, ints without .0."""
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        return "[" + ", ".join(render_value(x) for x in v) + "]"
    return str(v)


def _render_props(props: dict) -> str:
    inner = ", ".join(f"{k}:{render_value(v)}" for k, v in sorted(props.items()))
    return "{" + inner + "}"


def _render_node(n: NodePattern) -> str:
    parts = n.var or ""
    parts += "".join(f":{label}" for label in n.labels)
    if n.properties:
        parts += (" " if parts else "") + _render_props(n.properties)
    return f"({parts})"


def _render_rel(r: RelPattern) -> str:
    body = r.var or ""
    if r.type is not None:
        body += f":{r.type}"
    if r.properties:
        body += " " + _render_props(r.properties)
    return f"<-[{body}]-" if r.reversed else f"-[{body}]->"


def _render_pattern(p: Pattern) -> str:
    out = _render_node(p.nodes[0])
    for rel, node in zip(p.rels, p.nodes[1:]):
        out += _render_rel(rel) + _render_node(node)
    return out


def render_operand(op) -> str:
    if isinstance(op, Lit):
        return render_value(op.value)
    if isinstance(op, PropRef):
        return f"{op.var}.{op.key}"
    if isinstance(op, VarRef):
        return op.var
    if isinstance(op, Agg):
        return f"{op.func}({render_operand(op.arg)})"
    raise TypeError(f"cannot render operand {op!r}")


def _render_expr(e, parent: str | None = None) -> str:
    if isinstance(e, Cmp):
        return f"{render_operand(e.left)} {e.op} {render_operand(e.right)}"
    if isinstance(e, BoolOp):
        sep = f" {e.op} "
        text = sep.join(_render_expr(item, e.op) for item in e.items)
        if parent == "AND" and e.op == "OR":
            return f"({text})"
        return text
    raise TypeError(f"cannot render expression {e!r}")


def render(statement: Statement) -> str:
    """Canonical one-line text form; parse(render(s)) == s."""
    if statement.kind == CREATE:
        return f"CREATE {_render_pattern(statement.pattern)}"
    if statement.kind == MERGE:
        return f"MERGE {_render_pattern(statement.pattern)}"

    out = f"MATCH {_render_pattern(statement.pattern)}"
    if statement.where is not None:
        out += f" WHERE {_render_expr(statement.where)}"
    if statement.kind == MATCH_SET:
        sets = ", ".join(f"{item.target.var}.{item.target.key} = {render_value(item.value.value)}"
                         for item in statement.set_items)
        return f"{out} SET {sets}"
    items = ", ".join(render_operand(item.expr) + (f" AS {item.alias}" if item.alias else "")
                      for item in statement.return_items)
    out += f" RETURN {items}"
    if statement.order_by:
        refs = ", ".join(item.ref + (" DESC" if item.desc else "")
                         for item in statement.order_by)
        out += f" ORDER BY {refs}"
    if statement.limit is not None:
        out += f" LIMIT {statement.limit}"
    return out
