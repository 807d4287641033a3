"""Capture a scripted-service transcript for the frontend golden tests.

Runs the fixture service in-process with deterministic providers, plays a
five-turn conversation plus the provenance/memory/busy paths, and records
every response body so the frontend test suite can replay the exact bytes.
"""

import json
import os
import sys
import tempfile

from fastapi.testclient import TestClient

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from kgrag.graph import PropertyGraph, save_snapshot
from kgrag.llm import MockEmbedder, ProviderSet, Script, ScriptEntry, ScriptedProvider
from kgrag.service import KgragService, ServiceConfig, create_app
from kgrag.vectors import VectorIndex

LOST_SALES_QUERY = ('MATCH (c:Customer)-[l:LOST_SALES]->(p:Product {name:"cement"}) '
                    'WHERE l.year = 2023 AND l.cause = "humidity" '
                    'RETURN sum(l.volume_units)')
EDGE_QUERY = "MATCH (a)-[r]->(b) RETURN r, a, b, a.name, b.name"
NODE_QUERY = "MATCH (n) RETURN n, n.name"


def scripted(*entries):
    return ScriptedProvider(Script([ScriptEntry(m, k, r) for m, k, r in entries]))


def seed_graph(path):
    g = PropertyGraph()
    cement = g.add_node({"Product"}, {"name": "cement"})
    for i, volume in enumerate((40.0, 30.0, 50.0)):
        c = g.add_node({"Customer"}, {"name": f"client{i}"})
        g.add_edge("LOST_SALES", c, cement,
                   {"volume_units": volume, "year": 2023, "cause": "humidity"})
    VectorIndex(g, 16).upsert_chunk("law 13943 requires humidity-proof packaging",
                                    MockEmbedder(16).embed("law 13943"), [cement])
    save_snapshot(g, path)


def providers():
    plan = json.dumps({"kind": "GRAPH", "cypher": LOST_SALES_QUERY}) + "\n" + \
        json.dumps({"kind": "TEXT", "query": "law 13943"})
    return ProviderSet(
        planner=scripted(("*", "pattern", plan)),
        synthesizer=scripted(("*", "pattern", "Cement lost 120 units in 2023.")),
        judge=scripted(("*", "pattern", "YES")),
        memory=scripted(("*", "pattern",
                         '{"subject":"caller","predicate":"asked about","object":"cement"}')),
        embedder=MockEmbedder(16))


def main(out_path):
    records = []
    with tempfile.TemporaryDirectory() as data_dir:
        seed_graph(os.path.join(data_dir, "graph.ndjson"))
        service = KgragService(ServiceConfig(data_dir=data_dir, inline_factuality=True),
                               providers=providers())
        http = TestClient(create_app(service))

        def record(method, path, resp, payload=None):
            records.append({"method": method, "path": path,
                            "request": payload, "status": resp.status_code,
                            "body": resp.json()})

        session_id = None
        for turn in range(5):
            payload = {"user_id": "u-1", "message": f"lost cement sales? ({turn})"}
            if session_id:
                payload["session_id"] = session_id
            resp = http.post("/v1/chat", json=payload)
            session_id = resp.json()["session_id"]
            record("POST", "/v1/chat", resp, payload)

        for statement in (EDGE_QUERY, NODE_QUERY):
            resp = http.post("/v1/query", json={"statement": statement})
            record("POST", "/v1/query", resp, {"statement": statement})

        resp = http.get(f"/v1/sessions/{session_id}/memory")
        record("GET", f"/v1/sessions/{session_id}/memory", resp)

        resp = http.get("/v1/sessions/unknown/memory")
        record("GET", "/v1/sessions/unknown/memory", resp)

        # hold the writer so ingest sees busy
        assert service.store.try_write() is not None
        resp = http.post("/v1/ingest", json={"document": "busy probe"})
        assert resp.status_code == 409
        record("POST", "/v1/ingest", resp, {"document": "busy probe"})
        service.store.release_write()

        resp = http.get("/v1/metrics")
        record("GET", "/v1/metrics", resp)

    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(records)} records to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "frontend/tests/fixtures/transcript.json")
