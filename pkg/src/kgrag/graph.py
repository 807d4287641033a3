"""In-memory property graph (directed multigraph) with snapshot/WAL persistence.

Nodes carry label sets and property maps, edges carry a type and a property
map. Every mutation bumps a monotone revision counter; element ids are
engine-assigned integers and are never reused. The snapshot format is
newline-delimited JSON, one element per line, canonically sorted so that a
graph serializes to identical bytes regardless of insertion order.
"""

from __future__ import annotations

import io
import json
import math
import os
import threading
from dataclasses import dataclass, field

SNAPSHOT_VERSION = 1

Value = str | float | bool | list


class GraphError(Exception):
    """Rejected graph mutation or lookup (bad value, unknown id, ...)."""


class SnapshotError(Exception):
    """Unreadable snapshot/WAL data. Carries the byte offset of the bad line."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def check_value(v) -> Value:
    """Validate and normalize a property value.

    Accepted: text, finite 64-bit number (ints coerced to float), boolean,
    or a homogeneous list of one of those scalar kinds.
    """
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        f = float(v)
        if not math.isfinite(f):
            raise GraphError(f"non-finite number not storable: {v!r}")
        return f
    if isinstance(v, str):
        return v
    if isinstance(v, (list, tuple)):
        items = [check_value(x) for x in v]
        kinds = {_scalar_kind(x) for x in items}
        if len(kinds) > 1:
            raise GraphError(f"list elements must share one scalar kind, got {sorted(kinds)}")
        if "list" in kinds:
            raise GraphError("nested lists are not storable")
        return items
    raise GraphError(f"unsupported property value type: {type(v).__name__}")


def _scalar_kind(v) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "text"
    return "list"


def values_equal(a, b) -> bool:
    """Value equality with kind discrimination (True is not 1.0)."""
    if _scalar_kind(a) != _scalar_kind(b):
        return False
    if isinstance(a, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    return a == b


def properties_match(properties: dict, wanted: dict) -> bool:
    """True when `properties` includes every entry of `wanted` with an equal value."""
    return all(k in properties and values_equal(properties[k], v)
               for k, v in wanted.items())


def check_properties(props: dict) -> dict[str, Value]:
    out = {}
    for k, v in (props or {}).items():
        if not isinstance(k, str) or not k:
            raise GraphError(f"property keys must be nonempty text, got {k!r}")
        out[k] = check_value(v)
    return out


@dataclass
class Node:
    id: int
    labels: set[str]
    properties: dict[str, Value]


@dataclass
class Edge:
    id: int
    type: str
    source: int
    target: int
    properties: dict[str, Value]


@dataclass(frozen=True)
class Triple:
    subject: int
    predicate: str
    object: int


class PropertyGraph:
    """Directed multigraph of nodes and edges.

    Not thread-safe by itself; concurrent use goes through GraphStore's
    reader-writer lock. Mutations may be journaled via the ``journal``
    callback (used for the write-ahead log).
    """

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.edges: dict[int, Edge] = {}
        self.revision = 0
        self._next_id = 1
        self._out: dict[int, list[int]] = {}
        self._in: dict[int, list[int]] = {}
        self.journal = None  # callable(record: dict) or None

    # -- mutations -----------------------------------------------------------

    def add_node(self, labels=(), properties=None) -> int:
        labels = {str(x) for x in labels}
        props = check_properties(properties or {})
        nid = self._next_id
        self._next_id += 1
        self.nodes[nid] = Node(nid, labels, props)
        self._out[nid] = []
        self._in[nid] = []
        self.revision += 1
        self._journal({"k": "n", "id": nid, "labels": sorted(labels), "properties": props})
        return nid

    def add_edge(self, type_: str, source: int, target: int, properties=None) -> int:
        if not type_:
            raise GraphError("edge type must be nonempty")
        for endpoint in (source, target):
            if endpoint not in self.nodes:
                raise GraphError(f"unknown endpoint node id {endpoint}")
        props = check_properties(properties or {})
        eid = self._next_id
        self._next_id += 1
        self.edges[eid] = Edge(eid, type_, source, target, props)
        self._out[source].append(eid)
        self._in[target].append(eid)
        self.revision += 1
        self._journal({"k": "e", "id": eid, "type": type_, "src": source, "dst": target,
                       "properties": props})
        return eid

    def set_node_property(self, node_id: int, key: str, value) -> bool:
        """Set one property; returns True when the stored value changed."""
        node = self.nodes.get(node_id)
        if node is None:
            raise GraphError(f"unknown node id {node_id}")
        return self._set_prop(node, "n", key, value)

    def set_edge_property(self, edge_id: int, key: str, value) -> bool:
        edge = self.edges.get(edge_id)
        if edge is None:
            raise GraphError(f"unknown edge id {edge_id}")
        return self._set_prop(edge, "e", key, value)

    def _set_prop(self, element, kind: str, key: str, value) -> bool:
        if not key:
            raise GraphError("property key must be nonempty")
        value = check_value(value)
        if key in element.properties and values_equal(element.properties[key], value):
            return False
        element.properties[key] = value
        self.revision += 1
        self._journal({"k": "p", "t": kind, "id": element.id, "key": key, "v": value})
        return True

    def _journal(self, record: dict) -> None:
        if self.journal is not None:
            self.journal(record)

    # -- reads ---------------------------------------------------------------

    def node(self, node_id: int) -> Node:
        node = self.nodes.get(node_id)
        if node is None:
            raise GraphError(f"unknown node id {node_id}")
        return node

    def edge(self, edge_id: int) -> Edge:
        edge = self.edges.get(edge_id)
        if edge is None:
            raise GraphError(f"unknown edge id {edge_id}")
        return edge

    def out_edges(self, node_id: int) -> list[Edge]:
        return [self.edges[eid] for eid in self._out.get(node_id, ())]

    def in_edges(self, node_id: int) -> list[Edge]:
        return [self.edges[eid] for eid in self._in.get(node_id, ())]

    def find_nodes(self, label: str | None = None, property_filter: dict | None = None) -> list[Node]:
        """All nodes carrying `label` (if given) whose properties include every
        filter entry with an equal value. Ordered by id."""
        filt = check_properties(property_filter or {})
        hits = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if label is not None and label not in node.labels:
                continue
            if properties_match(node.properties, filt):
                hits.append(node)
        return hits

    def as_triples(self) -> list[Triple]:
        """One (source, type, target) triple per edge, ordered by edge id."""
        return [Triple(e.source, e.type, e.target)
                for _, e in sorted(self.edges.items())]

    def canonical_equal(self, other: "PropertyGraph") -> bool:
        """Same nodes, edges and properties at the same ids."""
        if set(self.nodes) != set(other.nodes) or set(self.edges) != set(other.edges):
            return False
        for nid, node in self.nodes.items():
            o = other.nodes[nid]
            if node.labels != o.labels or not _props_equal(node.properties, o.properties):
                return False
        for eid, edge in self.edges.items():
            o = other.edges[eid]
            if (edge.type, edge.source, edge.target) != (o.type, o.source, o.target):
                return False
            if not _props_equal(edge.properties, o.properties):
                return False
        return True


def _props_equal(a: dict, b: dict) -> bool:
    return set(a) == set(b) and all(values_equal(a[k], b[k]) for k in a)


# -- snapshot format ----------------------------------------------------------
#
# Line 1 header {"k":"h","v":1}; then one line per node ({"k":"n",...}, labels
# sorted, properties key-sorted) ordered by id, then one per edge ({"k":"e",...}).


def _dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def snapshot_lines(graph: PropertyGraph):
    yield _dump_line({"k": "h", "v": SNAPSHOT_VERSION})
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        yield _dump_line({"k": "n", "id": n.id, "labels": sorted(n.labels),
                          "properties": n.properties})
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        yield _dump_line({"k": "e", "id": e.id, "type": e.type, "src": e.source,
                          "dst": e.target, "properties": e.properties})


def save_snapshot(graph: PropertyGraph, destination) -> None:
    """Write the canonical snapshot to a path or text file object."""
    if hasattr(destination, "write"):
        for line in snapshot_lines(graph):
            destination.write(line + "\n")
        return
    tmp = f"{destination}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for line in snapshot_lines(graph):
            fh.write(line + "\n")
    os.replace(tmp, destination)


def _apply_record(graph: PropertyGraph, rec: dict, offset: int) -> None:
    kind = rec.get("k")
    if kind == "n":
        nid = rec["id"]
        if nid in graph.nodes:
            raise SnapshotError(f"duplicate node id {nid}", offset)
        graph.nodes[nid] = Node(nid, set(rec["labels"]),
                                check_properties(rec["properties"]))
        graph._out[nid] = []
        graph._in[nid] = []
    elif kind == "e":
        eid = rec["id"]
        if eid in graph.edges:
            raise SnapshotError(f"duplicate edge id {eid}", offset)
        src, dst = rec["src"], rec["dst"]
        if src not in graph.nodes or dst not in graph.nodes:
            raise SnapshotError(f"edge {eid} references unknown endpoint", offset)
        graph.edges[eid] = Edge(eid, rec["type"], src, dst,
                                check_properties(rec["properties"]))
        graph._out[src].append(eid)
        graph._in[dst].append(eid)
    elif kind == "p":
        target = graph.nodes if rec["t"] == "n" else graph.edges
        element = target.get(rec["id"])
        if element is None:
            raise SnapshotError(f"property record for unknown id {rec['id']}", offset)
        element.properties[rec["key"]] = check_value(rec["v"])
    else:
        raise SnapshotError(f"unknown record kind {kind!r}", offset)


def load_snapshot(source) -> PropertyGraph:
    """Load a snapshot from a path or text file object."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    graph = PropertyGraph()
    offset = 0
    first = True
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if stripped:
            try:
                rec = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise SnapshotError(f"corrupt snapshot line: {exc.msg}", offset) from exc
            if first:
                if rec.get("k") != "h":
                    raise SnapshotError("missing snapshot header", offset)
                if rec.get("v") != SNAPSHOT_VERSION:
                    raise SnapshotError(
                        f"snapshot version {rec.get('v')} unsupported "
                        f"(engine speaks {SNAPSHOT_VERSION})", offset)
                first = False
            else:
                try:
                    _apply_record(graph, rec, offset)
                except GraphError as exc:
                    raise SnapshotError(str(exc), offset) from exc
        offset += len(line.encode("utf-8"))
    if first:
        raise SnapshotError("empty snapshot (no header)", 0)
    _reset_counters(graph)
    return graph


def snapshot_bytes(graph: PropertyGraph) -> bytes:
    buf = io.StringIO()
    save_snapshot(graph, buf)
    return buf.getvalue().encode("utf-8")


def _reset_counters(graph: PropertyGraph) -> None:
    top = max([0, *graph.nodes.keys(), *graph.edges.keys()])
    graph._next_id = top + 1
    graph.revision = 0


# -- reader/writer lock --------------------------------------------------------


class RWLock:
    """Many concurrent readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self, blocking: bool = True) -> bool:
        with self._cond:
            if not blocking:
                if self._writer or self._readers:
                    return False
                self._writer = True
                return True
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
            return True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _ReadHandle:
    def __init__(self, store):
        self._store = store

    def __enter__(self):
        self._store.lock.acquire_read()
        return self._store.graph

    def __exit__(self, *exc):
        self._store.lock.release_read()
        return False


class _WriteHandle:
    def __init__(self, store):
        self._store = store

    def __enter__(self):
        self._store.lock.acquire_write()
        return self._store.graph

    def __exit__(self, *exc):
        self._store.lock.release_write()
        return False


@dataclass
class GraphStore:
    """Durable handle around one PropertyGraph.

    When opened with paths, loads the snapshot, replays the write-ahead log
    (a partial trailing line is ignored) and appends every further mutation
    to the WAL. ``checkpoint`` folds the WAL back into the snapshot.
    """

    graph: PropertyGraph = field(default_factory=PropertyGraph)
    snapshot_path: str | None = None
    wal_path: str | None = None
    lock: RWLock = field(default_factory=RWLock)
    _wal_fh: object = None

    @classmethod
    def open(cls, snapshot_path: str, wal_path: str | None = None) -> "GraphStore":
        wal_path = wal_path or f"{snapshot_path}.wal"
        if os.path.exists(snapshot_path):
            graph = load_snapshot(snapshot_path)
        else:
            graph = PropertyGraph()
        _replay_wal(graph, wal_path)
        store = cls(graph=graph, snapshot_path=snapshot_path, wal_path=wal_path)
        store._attach_wal()
        return store

    def _attach_wal(self) -> None:
        if self.wal_path is None:
            return
        self._wal_fh = open(self.wal_path, "a", encoding="utf-8")
        self.graph.journal = self._append_wal

    def _append_wal(self, record: dict) -> None:
        self._wal_fh.write(_dump_line(record) + "\n")
        self._wal_fh.flush()

    def read(self) -> _ReadHandle:
        return _ReadHandle(self)

    def write(self) -> _WriteHandle:
        return _WriteHandle(self)

    def try_write(self):
        """Non-blocking writer acquisition; returns the graph or None if busy."""
        if not self.lock.acquire_write(blocking=False):
            return None
        return self.graph

    def release_write(self) -> None:
        self.lock.release_write()

    def checkpoint(self) -> None:
        """Persist the snapshot and truncate the WAL."""
        if self.snapshot_path is None:
            return
        save_snapshot(self.graph, self.snapshot_path)
        if self._wal_fh is not None:
            self._wal_fh.close()
        if self.wal_path is not None:
            with open(self.wal_path, "w", encoding="utf-8"):
                pass
        self._attach_wal()

    def close(self) -> None:
        if self._wal_fh is not None:
            self._wal_fh.close()
            self._wal_fh = None
        self.graph.journal = None


def _replay_wal(graph: PropertyGraph, wal_path: str) -> None:
    if not os.path.exists(wal_path):
        return
    with open(wal_path, "rb") as fh:
        data = fh.read()
    offset = 0
    for raw in data.split(b"\n"):
        if not raw.strip():
            offset += len(raw) + 1
            continue
        complete = offset + len(raw) < len(data)  # line ends with the split \n
        try:
            rec = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            if not complete:
                break  # torn trailing write: ignore, the mutation never committed
            raise SnapshotError("corrupt WAL line", offset)
        _apply_record(graph, rec, offset)
        offset += len(raw) + 1
    _reset_counters(graph)
