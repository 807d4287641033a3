"""Executor for the Cypher subset.

Pattern matching enumerates bindings deterministically (candidates in id
order, one relationship may appear once per match). Read statements return a
ResultTable plus the provenance of every bound element; mutations return a
MutationSummary. Default row order is lexicographic over the rendered value
tuple; ORDER BY, then LIMIT, are applied last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..graph import PropertyGraph, properties_match, values_equal
from .ast import (
    CREATE,
    MATCH_RETURN,
    MATCH_SET,
    MERGE,
    Agg,
    BoolOp,
    Cmp,
    Lit,
    NodePattern,
    Pattern,
    PropRef,
    Statement,
    VarRef,
    render_operand,
    render_value,
)


class ValidationError(Exception):
    """Statement is syntactically fine but semantically unusable."""


class ExecutionError(Exception):
    """Statement failed while running (type mismatch, bad reference)."""


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple]

    def as_dict(self) -> dict:
        return {"columns": self.columns, "rows": [list(r) for r in self.rows]}


@dataclass
class ExecutionResult:
    table: ResultTable
    node_ids: set[int] = field(default_factory=set)
    edge_ids: set[int] = field(default_factory=set)


@dataclass
class MutationSummary:
    nodes_created: int = 0
    edges_created: int = 0
    properties_set: int = 0

    @property
    def changed(self) -> bool:
        return bool(self.nodes_created or self.edges_created or self.properties_set)


@dataclass
class _Binding:
    """One pattern match: element per slot, plus the variable table."""

    nodes: list[int]
    edges: list[int]
    vars: dict[str, tuple[str, int]]  # var -> ("n"|"e", id)


# -- validation ----------------------------------------------------------------


def _pattern_vars(pattern: Pattern) -> set[str]:
    bound = {n.var for n in pattern.nodes if n.var}
    bound |= {r.var for r in pattern.rels if r.var}
    return bound


def _expr_vars(expr) -> set[str]:
    if expr is None:
        return set()
    if isinstance(expr, Cmp):
        return _operand_vars(expr.left) | _operand_vars(expr.right)
    if isinstance(expr, BoolOp):
        out = set()
        for item in expr.items:
            out |= _expr_vars(item)
        return out
    return set()


def _operand_vars(op) -> set[str]:
    if isinstance(op, PropRef):
        return {op.var}
    if isinstance(op, VarRef):
        return {op.var}
    if isinstance(op, Agg):
        return _operand_vars(op.arg)
    return set()


def validate(statement: Statement) -> None:
    """Reject statements referencing variables their pattern does not bind."""
    bound = _pattern_vars(statement.pattern)
    used = _expr_vars(statement.where)
    for item in statement.return_items or ():
        used |= _operand_vars(item.expr)
    for item in statement.set_items or ():
        used |= {item.target.var}
    loose = sorted(used - bound)
    if loose:
        raise ValidationError(f"unbound variable(s): {', '.join(loose)}")
    node_vars = {n.var for n in statement.pattern.nodes if n.var}
    rel_vars = []
    for rel in statement.pattern.rels:
        if rel.var:
            if rel.var in rel_vars or rel.var in node_vars:
                raise ValidationError(f"variable {rel.var} declared twice")
            rel_vars.append(rel.var)
    if statement.kind in (CREATE, MERGE):
        for rel in statement.pattern.rels:
            if rel.type is None:
                raise ValidationError(f"{statement.kind} relationships need a :TYPE")
        seen: dict[str, NodePattern] = {}
        for node in statement.pattern.nodes:
            if node.var and node.var in seen:
                if node.labels or node.properties:
                    raise ValidationError(
                        f"variable {node.var} reused with labels or properties")
            elif node.var:
                seen[node.var] = node


# -- pattern matching ------------------------------------------------------


def _node_matches(graph: PropertyGraph, nid: int, np: NodePattern) -> bool:
    node = graph.nodes[nid]
    return (all(label in node.labels for label in np.labels)
            and properties_match(node.properties, np.properties))


def _match_pattern(graph: PropertyGraph, pattern: Pattern):
    """Yield bindings in deterministic (id-sorted) order."""
    first = pattern.nodes[0]
    starts = [nid for nid in sorted(graph.nodes) if _node_matches(graph, nid, first)]

    def extend(binding: _Binding, hop: int):
        if hop == len(pattern.rels):
            yield binding
            return
        rel = pattern.rels[hop]
        node_pat = pattern.nodes[hop + 1]
        current = binding.nodes[-1]
        edges = graph.in_edges(current) if rel.reversed else graph.out_edges(current)
        for edge in sorted(edges, key=lambda e: e.id):
            if edge.id in binding.edges:
                continue
            if rel.type is not None and edge.type != rel.type:
                continue
            if not properties_match(edge.properties, rel.properties):
                continue
            nxt = edge.source if rel.reversed else edge.target
            if not _node_matches(graph, nxt, node_pat):
                continue
            if rel.var and rel.var in binding.vars:
                continue  # rel var reuse never matches a second edge
            if node_pat.var:
                prior = binding.vars.get(node_pat.var)
                if prior is not None and prior != ("n", nxt):
                    continue
            new_vars = dict(binding.vars)
            if rel.var:
                new_vars[rel.var] = ("e", edge.id)
            if node_pat.var:
                new_vars[node_pat.var] = ("n", nxt)
            yield from extend(_Binding(binding.nodes + [nxt],
                                       binding.edges + [edge.id], new_vars), hop + 1)

    for start in starts:
        vars_ = {first.var: ("n", start)} if first.var else {}
        yield from extend(_Binding([start], [], vars_), 0)


# -- expressions -------------------------------------------------------------


def _resolve_operand(graph: PropertyGraph, binding: _Binding, op):
    if isinstance(op, Lit):
        return op.value
    if isinstance(op, PropRef):
        kind, eid = binding.vars[op.var]
        element = graph.nodes[eid] if kind == "n" else graph.edges[eid]
        return element.properties.get(op.key)
    raise ExecutionError(f"cannot evaluate operand {op!r}")


_ORDERABLE = {"number", "text"}


def _value_kind(v) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "text"
    if isinstance(v, list):
        return "list"
    return "null"


def _eval_cmp(op: str, left, right) -> bool:
    if left is None or right is None:
        return False
    if op == "=":
        return values_equal(left, right)
    if op == "<>":
        return not values_equal(left, right)
    if _value_kind(left) != _value_kind(right) or _value_kind(left) not in _ORDERABLE:
        return False
    return left < right if op == "<" else left > right


def _eval_expr(graph, binding, expr) -> bool:
    if expr is None:
        return True
    if isinstance(expr, Cmp):
        return _eval_cmp(expr.op, _resolve_operand(graph, binding, expr.left),
                         _resolve_operand(graph, binding, expr.right))
    if isinstance(expr, BoolOp):
        results = (_eval_expr(graph, binding, item) for item in expr.items)
        return all(results) if expr.op == "AND" else any(results)
    raise ExecutionError(f"cannot evaluate expression {expr!r}")


# -- projection ----------------------------------------------------------------


def _cell_value(graph, binding: _Binding, expr):
    """Non-aggregate cell: property value, or the element id for a bare var."""
    if isinstance(expr, PropRef):
        return _resolve_operand(graph, binding, expr)
    if isinstance(expr, VarRef):
        kind, eid = binding.vars[expr.var]
        return float(eid)
    raise ExecutionError(f"cannot project {expr!r}")


def _sort_key(v):
    rank = {"null": 0, "bool": 1, "number": 2, "text": 3, "list": 4}[_value_kind(v)]
    if isinstance(v, list):
        return (rank, tuple(_sort_key(x) for x in v))
    if v is None:
        return (rank, 0)
    return (rank, v)


def _aggregate(func: str, column: str, values: list):
    present = [v for v in values if v is not None]
    if func == "count":
        return float(len(present))
    bad = next((v for v in present if _value_kind(v) != "number"), None)
    if bad is not None:
        raise ExecutionError(f"{func}() over non-number value in column {column!r}")
    if func == "sum":
        return float(sum(present))
    return (float(sum(present)) / len(present)) if present else None


def _project(graph, statement: Statement, bindings: list[_Binding]) -> tuple[ResultTable, list[list[_Binding]]]:
    items = statement.return_items
    columns = [item.alias or render_operand(item.expr) for item in items]
    has_agg = any(isinstance(item.expr, Agg) for item in items)

    if not has_agg:
        rows = []
        for binding in bindings:
            rows.append((tuple(_cell_value(graph, binding, item.expr) for item in items),
                         [binding]))
    else:
        groups: dict[tuple, list[_Binding]] = {}
        order: list[tuple] = []
        for binding in bindings:
            key = tuple(_sort_key(_cell_value(graph, binding, item.expr))
                        for item in items if not isinstance(item.expr, Agg))
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(binding)
        if not groups and all(isinstance(item.expr, Agg) for item in items):
            groups[()] = []
            order.append(())
        rows = []
        for key in order:
            members = groups[key]
            cells = []
            for col, item in zip(columns, items):
                if isinstance(item.expr, Agg):
                    values = [_cell_value(graph, b, item.expr.arg) for b in members]
                    cells.append(_aggregate(item.expr.func, col, values))
                else:
                    cells.append(_cell_value(graph, members[0], item.expr))
            rows.append((tuple(cells), members))

    # deterministic base order: lexicographic over rendered cells
    rows.sort(key=lambda r: tuple(render_value(c) for c in r[0]))

    if statement.order_by:
        rendered = {item.alias or render_operand(item.expr): i
                    for i, item in enumerate(items)}
        for order_item in reversed(statement.order_by):
            if order_item.ref not in rendered:
                raise ExecutionError(f"ORDER BY references unknown column {order_item.ref!r}")
            idx = rendered[order_item.ref]
            rows.sort(key=lambda r: _sort_key(r[0][idx]), reverse=order_item.desc)

    if statement.limit is not None:
        rows = rows[: statement.limit]

    table = ResultTable(columns, [r[0] for r in rows])
    return table, [r[1] for r in rows]


# -- mutations ---------------------------------------------------------------


def _run_create(graph: PropertyGraph, statement: Statement) -> MutationSummary:
    summary = MutationSummary()
    pattern = statement.pattern
    bound: dict[str, int] = {}
    node_ids = []
    for np in pattern.nodes:
        if np.var and np.var in bound:
            node_ids.append(bound[np.var])
            continue
        nid = graph.add_node(set(np.labels), np.properties)
        summary.nodes_created += 1
        if np.var:
            bound[np.var] = nid
        node_ids.append(nid)
    for i, rel in enumerate(pattern.rels):
        src, dst = node_ids[i], node_ids[i + 1]
        if rel.reversed:
            src, dst = dst, src
        graph.add_edge(rel.type, src, dst, rel.properties)
        summary.edges_created += 1
    return summary


def _merge_node(graph: PropertyGraph, np: NodePattern, summary: MutationSummary) -> int:
    for nid in sorted(graph.nodes):
        if _node_matches(graph, nid, np):
            return nid
    summary.nodes_created += 1
    return graph.add_node(set(np.labels), np.properties)


def _run_merge(graph: PropertyGraph, statement: Statement) -> MutationSummary:
    """Match-or-create each endpoint by label+properties, then the edge."""
    summary = MutationSummary()
    pattern = statement.pattern
    bound: dict[str, int] = {}
    node_ids = []
    for np in pattern.nodes:
        if np.var and np.var in bound:
            node_ids.append(bound[np.var])
            continue
        nid = _merge_node(graph, np, summary)
        if np.var:
            bound[np.var] = nid
        node_ids.append(nid)
    for i, rel in enumerate(pattern.rels):
        src, dst = node_ids[i], node_ids[i + 1]
        if rel.reversed:
            src, dst = dst, src
        existing = [e for e in graph.out_edges(src)
                    if e.target == dst and e.type == rel.type
                    and properties_match(e.properties, rel.properties)]
        if not existing:
            graph.add_edge(rel.type, src, dst, rel.properties)
            summary.edges_created += 1
    return summary


def _run_set(graph: PropertyGraph, statement: Statement,
             bindings: list[_Binding]) -> MutationSummary:
    summary = MutationSummary()
    for binding in bindings:
        for item in statement.set_items:
            kind, eid = binding.vars[item.target.var]
            if kind == "n":
                changed = graph.set_node_property(eid, item.target.key, item.value.value)
            else:
                changed = graph.set_edge_property(eid, item.target.key, item.value.value)
            if changed:
                summary.properties_set += 1
    return summary


# -- entry point -------------------------------------------------------------


def execute(statement: Statement, graph: PropertyGraph):
    """Run one statement. Returns ExecutionResult for reads, MutationSummary
    for writes. Read statements never change the graph revision."""
    validate(statement)
    if statement.kind == CREATE:
        return _run_create(graph, statement)
    if statement.kind == MERGE:
        return _run_merge(graph, statement)

    bindings = [b for b in _match_pattern(graph, statement.pattern)
                if _eval_expr(graph, b, statement.where)]
    if statement.kind == MATCH_SET:
        return _run_set(graph, statement, bindings)

    revision_before = graph.revision
    table, contributors = _project(graph, statement, bindings)
    assert graph.revision == revision_before, "read statement mutated the graph"
    result = ExecutionResult(table)
    for group in contributors:
        for binding in group:
            result.node_ids.update(binding.nodes)
            result.edge_ids.update(binding.edges)
    return result
