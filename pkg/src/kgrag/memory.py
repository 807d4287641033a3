"""Session and user memory as graph data.

Each chat session owns an isolated property graph holding its turn chain and
its facts. A fact is a (subject node, predicate, object) assertion; asserting
a different object for the same subject and predicate supersedes the old fact
while keeping it forever (history is the product). Closing a session promotes
its active facts into the user scope, where the same supersession rules
apply. Profiles are compared by Jaccard similarity over their active
(predicate, object) pairs.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

from .cypher.ast import render_value
from .graph import PropertyGraph, load_snapshot, save_snapshot, values_equal
from .quality import canonical_node_key

FACT_LABEL = "Fact"
TURN_LABEL = "Turn"
NEXT = "NEXT"
SUPERSEDED_BY = "SUPERSEDED_BY"

_CANONICAL_PREDICATE = re.compile(r"[A-Z0-9_]+\Z")


class MemoryStateError(Exception):
    """Misuse of a session or scope (closed session, bad predicate)."""


@dataclass
class MemoryFact:
    fact_id: int
    subject: int
    predicate: str
    object: object
    object_is_node: bool
    valid_from: int
    superseded_by: int | None

    def pair(self) -> tuple[str, str]:
        return (self.predicate, render_value(self.object))


@dataclass
class MemoryScope:
    """One fact store: a graph plus a monotone assertion clock."""

    graph: PropertyGraph = field(default_factory=PropertyGraph)
    clock: int = 0


@dataclass
class Session(MemoryScope):
    session_id: str = ""
    user_id: str = ""
    turns: int = 0
    closed: bool = False


def _fact_from_node(node) -> MemoryFact:
    p = node.properties
    return MemoryFact(
        fact_id=node.id, subject=int(p["subject"]), predicate=p["predicate"],
        object=p["object"], object_is_node=bool(p["obj_is_node"]),
        valid_from=int(p["valid_from"]),
        superseded_by=int(p["superseded_by"]) if "superseded_by" in p else None)


def record_turn(session: Session, question: str, answer: str) -> int:
    """Append a turn node linked to the previous one; returns its number."""
    if session.closed:
        raise MemoryStateError(f"session {session.session_id} is closed")
    previous = None
    if session.turns:
        previous = max((n.id for n in session.graph.find_nodes(TURN_LABEL)
                        if n.properties.get("turn") == float(session.turns)))
    session.turns += 1
    session.clock += 1
    node = session.graph.add_node(
        {TURN_LABEL}, {"turn": float(session.turns), "question": question,
                       "answer": answer})
    if previous is not None:
        session.graph.add_edge(NEXT, previous, node)
    return session.turns


def turn_chain(session: Session) -> list[int]:
    """Turn node ids in order, walked through NEXT edges."""
    nodes = session.graph.find_nodes(TURN_LABEL)
    if not nodes:
        return []
    targets = {e.target for e in session.graph.edges.values() if e.type == NEXT}
    heads = [n.id for n in nodes if n.id not in targets]
    chain = [min(heads)]
    while True:
        nxt = [e.target for e in session.graph.out_edges(chain[-1]) if e.type == NEXT]
        if not nxt:
            return chain
        chain.append(nxt[0])


def assert_fact(scope: MemoryScope, subject: int, predicate: str, obj,
                object_is_node: bool = False) -> int:
    """Assert (subject, predicate, obj); supersedes a conflicting active fact.
    Re-asserting the same object is a no-op returning the existing fact id."""
    if not _CANONICAL_PREDICATE.match(predicate or ""):
        raise MemoryStateError(f"predicate {predicate!r} is not canonical (UPPER_SNAKE_CASE)")
    scope.graph.node(subject)
    stored = float(obj) if object_is_node else obj
    active = [f for f in _facts(scope)
              if f.subject == subject and f.predicate == predicate
              and f.superseded_by is None]
    for fact in active:
        if fact.object_is_node == object_is_node and values_equal(fact.object, stored):
            return fact.fact_id
    scope.clock += 1
    new_id = scope.graph.add_node({FACT_LABEL}, {
        "subject": float(subject), "predicate": predicate, "object": stored,
        "obj_is_node": object_is_node, "valid_from": float(scope.clock)})
    for fact in active:
        scope.graph.set_node_property(fact.fact_id, "superseded_by", float(new_id))
        scope.graph.add_edge(SUPERSEDED_BY, fact.fact_id, new_id)
    return new_id


def _facts(scope: MemoryScope) -> list[MemoryFact]:
    return [_fact_from_node(n) for n in scope.graph.find_nodes(FACT_LABEL)]


def active_facts(scope: MemoryScope) -> list[MemoryFact]:
    """Facts not yet superseded, ordered by (subject, predicate)."""
    out = [f for f in _facts(scope) if f.superseded_by is None]
    out.sort(key=lambda f: (f.subject, f.predicate, f.fact_id))
    return out


def all_facts(scope: MemoryScope) -> list[MemoryFact]:
    return sorted(_facts(scope), key=lambda f: f.fact_id)


def supersession_chain(scope: MemoryScope, fact_id: int) -> list[int]:
    """Follow SUPERSEDED_BY edges from a fact to the active end."""
    chain = [fact_id]
    seen = {fact_id}
    while True:
        nxt = [e.target for e in scope.graph.out_edges(chain[-1])
               if e.type == SUPERSEDED_BY]
        if not nxt:
            return chain
        (step,) = nxt
        if step in seen:
            raise MemoryStateError("supersession cycle detected")
        seen.add(step)
        chain.append(step)


def _find_or_create_subject(user_scope: MemoryScope, session_graph: PropertyGraph,
                            subject: int) -> int:
    """Map a session subject node into the user graph by canonical content."""
    source = session_graph.node(subject)
    want = canonical_node_key(source)
    for nid in sorted(user_scope.graph.nodes):
        if canonical_node_key(user_scope.graph.nodes[nid]) == want:
            return nid
    return user_scope.graph.add_node(set(source.labels), dict(source.properties))


def end_session(session: Session, user_scope: MemoryScope) -> dict:
    """Promote active session facts into the user scope and close the session."""
    if session.closed:
        raise MemoryStateError(f"session {session.session_id} already closed")
    promoted = 0
    superseded = 0
    for fact in active_facts(session):
        subject = _find_or_create_subject(user_scope, session.graph, fact.subject)
        before_active = {f.fact_id for f in active_facts(user_scope)
                         if f.subject == subject and f.predicate == fact.predicate}
        new_id = assert_fact(user_scope, subject, fact.predicate, fact.object,
                             fact.object_is_node)
        if new_id not in before_active:
            promoted += 1
            superseded += len(before_active)
    session.closed = True
    return {"promoted": promoted, "superseded": superseded}


def profile_pairs(scope: MemoryScope) -> set[tuple[str, str]]:
    return {f.pair() for f in active_facts(scope)}


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def similar_profiles(user_id: str, scopes: dict[str, MemoryScope],
                     k: int) -> list[tuple[str, float]]:
    """Top-k users by Jaccard over active (predicate, object) pairs."""
    mine = profile_pairs(scopes[user_id])
    scored = [(other, jaccard(mine, profile_pairs(scope)))
              for other, scope in scopes.items() if other != user_id]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


# -- persistence -------------------------------------------------------------------


def save_scope(scope: MemoryScope, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_snapshot(scope.graph, path)


def load_scope(path: str, cls=MemoryScope, **kwargs):
    scope = cls(**kwargs)
    if os.path.exists(path):
        scope.graph = load_snapshot(path)
        facts = [n.properties.get("valid_from", 0.0)
                 for n in scope.graph.find_nodes(FACT_LABEL)]
        turns = [n.properties.get("turn", 0.0)
                 for n in scope.graph.find_nodes(TURN_LABEL)]
        scope.clock = int(max(facts + turns + [0.0]))
        if isinstance(scope, Session):
            scope.turns = int(max(turns + [0.0]))
    return scope
