"""Question answering over the knowledge graph, with provenance.

Three patterns: graph-only (every sub-query is a generated read statement),
hybrid (graph sub-queries plus vector search), and vector-in-graph (vector
search pre-filtered by a MATCH pattern). The planner provider returns
newline-delimited JSON sub-queries; invalid ones are dropped and recorded.
Every answer carries the ids of all graph elements and chunks that grounded
it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cypher import (
    ExecutionError,
    ParseError,
    ValidationError,
    execute,
    parse_one,
    render,
    validate,
)
from .cypher.ast import MATCH_RETURN, render_value
from .graph import PropertyGraph
from .ingestion import token_cost
from .llm import ProviderSet
from .vectors import VectorIndex, validate_chunk_filter

PATTERN_GRAPH = "graph"
PATTERN_HYBRID = "hybrid"
PATTERN_VIG = "vig"

GRAPH = "GRAPH"
TEXT = "TEXT"


class PlanError(Exception):
    """Planner produced nothing usable; carries the raw provider output."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class RetrievalError(Exception):
    """No sub-query produced evidence."""


@dataclass
class SubQuery:
    kind: str  # GRAPH | TEXT
    cypher: str | None = None  # canonical text, GRAPH only
    query: str | None = None  # TEXT only

    def label(self) -> str:
        return self.cypher if self.kind == GRAPH else self.query


@dataclass
class QueryPlan:
    sub_queries: list[SubQuery]
    errors: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"sub_queries": [
            {"kind": s.kind, "cypher": s.cypher, "query": s.query}
            for s in self.sub_queries], "errors": list(self.errors)}


@dataclass
class EvidenceItem:
    sub_query: SubQuery
    columns: list[str] | None = None
    rows: list[tuple] | None = None
    hits: list[tuple[int, float, str]] | None = None  # (chunk id, score, text)
    error: str | None = None


@dataclass
class Evidence:
    items: list[EvidenceItem] = field(default_factory=list)
    node_ids: set[int] = field(default_factory=set)
    edge_ids: set[int] = field(default_factory=set)
    chunk_ids: set[int] = field(default_factory=set)

    @property
    def nonempty(self) -> bool:
        return any((item.rows or item.hits) for item in self.items)

    def provenance(self) -> dict:
        return {"node_ids": sorted(self.node_ids), "edge_ids": sorted(self.edge_ids),
                "chunk_ids": sorted(self.chunk_ids)}


@dataclass
class Answer:
    text: str
    evidence: Evidence
    pattern: str
    plan: QueryPlan
    factuality: object = None


# -- planning --------------------------------------------------------------------


def _plan_prompt(question: str, kinds: tuple) -> str:
    shapes = []
    if GRAPH in kinds:
        shapes.append('{"kind":"GRAPH","cypher":"MATCH ... RETURN ..."}')
    if TEXT in kinds:
        shapes.append('{"kind":"TEXT","query":"..."}')
    return ("PLAN the retrieval for this question by splitting it into sub-queries.\n\n"
            f"QUESTION:\n{question}\n\n"
            "OUTPUT_FORMAT:\nOne JSON object per line: " + " or ".join(shapes))


def plan_question(question: str, providers: ProviderSet,
                  kinds: tuple = (GRAPH, TEXT)) -> QueryPlan:
    raw = providers.complete("planner", _plan_prompt(question, kinds))
    plan = QueryPlan([])
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            plan.errors.append(f"unparseable plan line: {line!r}")
            continue
        kind = rec.get("kind")
        if kind == GRAPH:
            if GRAPH not in kinds:
                plan.errors.append("GRAPH sub-query not allowed for this pattern")
                continue
            try:
                stmt = parse_one(rec.get("cypher", ""))
                if stmt.kind != MATCH_RETURN:
                    raise ValidationError("plan statements must be read-only MATCH ... RETURN")
                validate(stmt)
            except (ParseError, ValidationError) as exc:
                plan.errors.append(f"dropped sub-query: {exc}")
                continue
            plan.sub_queries.append(SubQuery(GRAPH, cypher=render(stmt)))
        elif kind == TEXT:
            if TEXT not in kinds:
                plan.errors.append("TEXT sub-query not allowed for this pattern")
                continue
            query = rec.get("query") or ""
            if not query:
                plan.errors.append("dropped TEXT sub-query with empty query")
                continue
            plan.sub_queries.append(SubQuery(TEXT, query=query))
        else:
            plan.errors.append(f"dropped sub-query with unknown kind {kind!r}")
    if not plan.sub_queries:
        raise PlanError("plan contains no valid sub-queries", raw)
    return plan


# -- evidence gathering ------------------------------------------------------------


def _run_graph_subquery(graph: PropertyGraph, sub: SubQuery, evidence: Evidence) -> None:
    item = EvidenceItem(sub)
    try:
        result = execute(parse_one(sub.cypher), graph)
        item.columns = result.table.columns
        item.rows = result.table.rows
        evidence.node_ids |= result.node_ids
        evidence.edge_ids |= result.edge_ids
    except (ParseError, ValidationError, ExecutionError) as exc:
        item.error = str(exc)
    evidence.items.append(item)


def _run_text_subquery(index: VectorIndex, providers: ProviderSet, sub: SubQuery,
                       evidence: Evidence, k: int, filter_pattern=None) -> None:
    item = EvidenceItem(sub)
    try:
        query_emb = providers.embed(sub.query)
        if filter_pattern is not None:
            hits = index.search_filtered(query_emb, k, filter_pattern)
        else:
            hits = index.search_topk(query_emb, k)
        item.hits = [(h.chunk_id, h.score, index.chunk_text(h.chunk_id)) for h in hits]
        for h in hits:
            evidence.chunk_ids.add(h.chunk_id)
            for target in index.mentions(h.chunk_id):
                evidence.node_ids.add(target)
            for edge in index.graph.out_edges(h.chunk_id):
                if edge.type == "MENTIONS":
                    evidence.edge_ids.add(edge.id)
    except Exception as exc:
        item.error = str(exc)
    evidence.items.append(item)


def gather_evidence(plan: QueryPlan, graph: PropertyGraph,
                    index: VectorIndex | None, providers: ProviderSet,
                    k: int = 5, filter_pattern=None) -> Evidence:
    evidence = Evidence()
    for sub in plan.sub_queries:
        if sub.kind == GRAPH:
            _run_graph_subquery(graph, sub, evidence)
        else:
            _run_text_subquery(index, providers, sub, evidence, k, filter_pattern)
    if all(item.error is not None for item in evidence.items):
        raise RetrievalError("every sub-query failed: " +
                             "; ".join(item.error for item in evidence.items))
    for item in evidence.items:
        if item.error:
            plan.errors.append(f"sub-query failed: {item.error}")
    return evidence


# -- synthesis ---------------------------------------------------------------------


def _render_table(columns: list[str], rows: list[tuple]) -> str:
    cells = [[render_value(c) for c in row] for row in rows]
    widths = [max([len(col)] + [len(row[i]) for row in cells])
              for i, col in enumerate(columns)]
    lines = [" | ".join(col.ljust(w) for col, w in zip(columns, widths))]
    for row in cells:
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def render_evidence(evidence: Evidence, budget: int = 2048) -> str:
    """Result tables aligned, chunks quoted with ids; whole blocks are taken
    greedily in sub-query order until the token budget runs out."""
    blocks = []
    for i, item in enumerate(evidence.items, 1):
        tag = "G" if item.sub_query.kind == GRAPH else "T"
        head = f"[{tag}{i}] {item.sub_query.label()}"
        if item.error:
            body = f"(failed: {item.error})"
        elif item.sub_query.kind == GRAPH:
            body = _render_table(item.columns, item.rows) if item.rows else "(no rows)"
        else:
            body = "\n".join(f'(chunk {cid}, score {score:.4f}) "{text}"'
                             for cid, score, text in item.hits) or "(no chunks)"
        blocks.append(head + "\n" + body)
    out = []
    used = 0
    for block in blocks:
        cost = token_cost(block)
        if out and used + cost > budget:
            break
        out.append(block)
        used += cost
    return "\n\n".join(out)


def _synthesize(question: str, evidence: Evidence, providers: ProviderSet,
                budget: int = 2048) -> str:
    prompt = (f"QUESTION:\n{question}\n\n"
              f"EVIDENCE:\n{render_evidence(evidence, budget)}\n\n"
              "Answer the question using only the evidence above.")
    return providers.complete("synthesizer", prompt)


# -- the three patterns --------------------------------------------------------------


def answer_graph_rag(question: str, graph: PropertyGraph,
                     providers: ProviderSet) -> Answer:
    plan = plan_question(question, providers, kinds=(GRAPH,))
    evidence = gather_evidence(plan, graph, None, providers)
    text = _synthesize(question, evidence, providers)
    return Answer(text, evidence, PATTERN_GRAPH, plan)


def answer_hybrid(question: str, graph: PropertyGraph, index: VectorIndex,
                  providers: ProviderSet, k: int = 5) -> Answer:
    plan = plan_question(question, providers)
    evidence = gather_evidence(plan, graph, index, providers, k=k)
    text = _synthesize(question, evidence, providers)
    return Answer(text, evidence, PATTERN_HYBRID, plan)


def answer_vector_in_graph(question: str, graph: PropertyGraph, index: VectorIndex,
                           filter_pattern, providers: ProviderSet, k: int = 5) -> Answer:
    # the filter must be sound before any provider call
    stmt = validate_chunk_filter(filter_pattern)
    filter_result = execute(stmt, graph)

    plan = plan_question(question, providers)
    evidence = gather_evidence(plan, graph, index, providers, k=k, filter_pattern=stmt)
    # the filter's matched subgraph grounds the chunk selection
    if evidence.chunk_ids:
        evidence.node_ids |= filter_result.node_ids
        evidence.edge_ids |= filter_result.edge_ids
    text = _synthesize(question, evidence, providers)
    return Answer(text, evidence, PATTERN_VIG, plan)
