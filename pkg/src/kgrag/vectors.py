"""Embedding storage and exact top-k cosine retrieval over chunk nodes.

Chunks live inside the knowledge graph as nodes labeled ``Chunk`` carrying
the original text and the embedding (property ``emb``), connected to the KG
via ``MENTIONS`` edges. Similarity search is an exact scan — no approximate
structure — and can be pre-filtered by any read-only MATCH pattern binding a
``chunk`` variable: graph first, cosine second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cypher import ValidationError, execute, parse_one, validate
from .cypher.ast import MATCH_RETURN, VarRef
from .graph import GraphError, PropertyGraph

CHUNK_LABEL = "Chunk"
MENTIONS = "MENTIONS"
EMBEDDING_KEY = "emb"
TEXT_KEY = "text"


@dataclass(frozen=True)
class ScoredHit:
    chunk_id: int
    score: float


def cosine(a: list[float], b: list[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        raise GraphError("cosine undefined for zero-norm vector")
    return dot / (na * nb)


def validate_chunk_filter(candidate_pattern):
    """Check a candidate filter: read-only, valid, binds and returns `chunk`."""
    stmt = candidate_pattern
    if isinstance(stmt, str):
        stmt = parse_one(stmt)
    if stmt.kind != MATCH_RETURN:
        raise ValidationError("candidate pattern must be a read-only MATCH ... RETURN")
    validate(stmt)
    bound = {n.var for n in stmt.pattern.nodes if n.var}
    if "chunk" not in bound:
        raise ValidationError("candidate pattern must bind a `chunk` variable")
    if not any(isinstance(item.expr, VarRef) and item.expr.var == "chunk"
               for item in stmt.return_items):
        raise ValidationError("candidate pattern must RETURN chunk")
    return stmt


class VectorIndex:
    """Exact cosine index over the Chunk nodes of one graph."""

    def __init__(self, graph: PropertyGraph, dimension: int = 16):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.graph = graph
        self.dimension = dimension

    # -- writes --------------------------------------------------------------

    def _check_vector(self, embedding) -> list[float]:
        vec = [float(x) for x in embedding]
        if len(vec) != self.dimension:
            raise GraphError(
                f"embedding dimension {len(vec)} does not match index dimension {self.dimension}")
        if all(x == 0.0 for x in vec):
            raise GraphError("zero-norm embedding rejected (cosine undefined)")
        return vec

    def upsert_chunk(self, text: str, embedding, mentioned_node_ids=()) -> int:
        """Create or update the chunk node for `text`; returns its node id."""
        vec = self._check_vector(embedding)
        mentioned = list(mentioned_node_ids)
        for nid in mentioned:
            self.graph.node(nid)  # raises on unknown id
        existing = self.graph.find_nodes(CHUNK_LABEL, {TEXT_KEY: text})
        if existing:
            cid = existing[0].id
            self.graph.set_node_property(cid, EMBEDDING_KEY, vec)
        else:
            cid = self.graph.add_node({CHUNK_LABEL}, {TEXT_KEY: text, EMBEDDING_KEY: vec})
        linked = {e.target for e in self.graph.out_edges(cid) if e.type == MENTIONS}
        for nid in mentioned:
            if nid not in linked:
                self.graph.add_edge(MENTIONS, cid, nid)
                linked.add(nid)
        return cid

    # -- reads ---------------------------------------------------------------

    def chunk_ids(self) -> list[int]:
        return [n.id for n in self.graph.find_nodes(CHUNK_LABEL)
                if EMBEDDING_KEY in n.properties]

    def chunk_text(self, chunk_id: int) -> str:
        return self.graph.node(chunk_id).properties.get(TEXT_KEY, "")

    def mentions(self, chunk_id: int) -> list[int]:
        return sorted(e.target for e in self.graph.out_edges(chunk_id)
                      if e.type == MENTIONS)

    def _rank(self, query: list[float], k: int, candidates) -> list[ScoredHit]:
        scored = []
        for cid in candidates:
            emb = self.graph.node(cid).properties.get(EMBEDDING_KEY)
            if emb is None:
                continue
            scored.append(ScoredHit(cid, cosine(query, emb)))
        scored.sort(key=lambda h: (-h.score, h.chunk_id))
        return scored[:k]

    def search_topk(self, query_embedding, k: int) -> list[ScoredHit]:
        """The k highest-cosine chunks (fewer if the index is smaller)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self._check_vector(query_embedding)
        return self._rank(query, k, self.chunk_ids())

    def search_filtered(self, query_embedding, k: int, candidate_pattern) -> list[ScoredHit]:
        """search_topk restricted to chunks matched by a read-only pattern
        binding the variable ``chunk``."""
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self._check_vector(query_embedding)
        stmt = validate_chunk_filter(candidate_pattern)
        result = execute(stmt, self.graph)
        col = next(i for i, item in enumerate(stmt.return_items)
                   if isinstance(item.expr, VarRef) and item.expr.var == "chunk")
        candidates = sorted({int(row[col]) for row in result.table.rows})
        chunkset = set(self.chunk_ids())
        return self._rank(query, k, [c for c in candidates if c in chunkset])
