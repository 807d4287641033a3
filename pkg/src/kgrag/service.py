"""HTTP facade: ingestion, chat with memory and provenance, graph queries,
suite execution and metrics, all under /v1 with key-sorted JSON bodies.

One writer at a time touches the domain graph; a second concurrent ingest
receives a 409 busy signal instead of blocking. Chat sessions prepend the
session's active memory facts and recent turns to the question, answer
through the selected retrieval pattern, record the turn, extract new memory
facts, and (optionally) score factual adherence inline.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response

from .cypher import ExecutionError, ParseError, ValidationError, execute, parse_one
from .cypher.ast import MATCH_RETURN
from .factuality import ExceptionRule, load_rules, score_response
from .graph import GraphError, GraphStore, PropertyGraph
from .ingestion import (
    DEFAULT_SPEC,
    ExtractionConfig,
    NormalizationConfig,
    STATIC,
    extract_graph,
)
from .llm import (
    HttpEmbedder,
    HttpProvider,
    MockEmbedder,
    ProviderError,
    ProviderSet,
    ScriptedProvider,
    load_script,
)
from .memory import (
    MemoryScope,
    MemoryStateError,
    Session,
    active_facts,
    all_facts,
    assert_fact,
    load_scope,
    record_turn,
    save_scope,
)
from .retrieval import (
    PlanError,
    RetrievalError,
    answer_graph_rag,
    answer_hybrid,
    answer_vector_in_graph,
)
from .vectors import VectorIndex

ENV_PORT = "KGRAG_PORT"
ENV_DATA_DIR = "KGRAG_DATA_DIR"

_MECHANICAL = re.compile(r"[^A-Za-z0-9]+")


class ConfigError(Exception):
    """Service configuration rejected at startup."""


@dataclass
class ServiceConfig:
    data_dir: str = "data"
    dimension: int = 16
    k: int = 5
    schema_mode: str = "free"
    inline_factuality: bool = False
    port: int = 8080
    token: str | None = None
    rules_path: str | None = None
    relation_whitelist: list = field(default_factory=list)
    label_whitelist: list = field(default_factory=list)
    providers: dict = field(default_factory=dict)  # role -> spec dict

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.schema_mode not in ("free", "static"):
            raise ConfigError(f"unknown schema mode {self.schema_mode!r}")
        if not (0 < self.port < 65536):
            raise ConfigError(f"port {self.port} out of range")
        for role, spec in self.providers.items():
            if spec.get("kind") not in ("script", "http", "mock-embedder", "http-embedder"):
                raise ConfigError(f"provider {role}: unknown kind {spec.get('kind')!r}")
            if spec["kind"] == "script" and not os.path.exists(spec.get("path", "")):
                raise ConfigError(f"provider {role}: script {spec.get('path')!r} not found")
        if self.rules_path and not os.path.exists(self.rules_path):
            raise ConfigError(f"rules file {self.rules_path!r} not found")


def build_providers(config: ServiceConfig) -> ProviderSet:
    providers = ProviderSet()
    for role, spec in config.providers.items():
        kind = spec["kind"]
        if kind == "script":
            provider = ScriptedProvider(load_script(spec["path"]))
        elif kind == "http":
            provider = HttpProvider(spec.get("url"), spec.get("timeout_ms"))
        elif kind == "mock-embedder":
            provider = MockEmbedder(spec.get("dimension", config.dimension),
                                    spec.get("seed", 0))
        else:
            provider = HttpEmbedder(spec["url"], spec.get("dimension", config.dimension),
                                    spec.get("timeout_ms", 30000))
        setattr(providers, role, provider)
    if providers.embedder is None:
        providers.embedder = MockEmbedder(config.dimension, 0)
    return providers


def mechanical_predicate(raw: str) -> str:
    return _MECHANICAL.sub("_", raw.strip()).strip("_").upper()


class KgragService:
    """All engine state behind the HTTP handlers."""

    def __init__(self, config: ServiceConfig, providers: ProviderSet | None = None):
        config.validate()
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        self.store = GraphStore.open(os.path.join(config.data_dir, "graph.ndjson"))
        self.index = VectorIndex(self.store.graph, config.dimension)
        self.providers = providers or build_providers(config)
        self.rules: list[ExceptionRule] = (
            load_rules(config.rules_path) if config.rules_path else [])
        self.sessions: dict[str, Session] = {}
        self.user_scopes: dict[str, MemoryScope] = {}
        self.adherence_history: list[float] = []
        self._session_counter = 0
        self.normalization = NormalizationConfig(
            schema_mode=STATIC if config.schema_mode == "static" else "free",
            relation_whitelist=set(config.relation_whitelist),
            label_whitelist=set(config.label_whitelist))

    # -- sessions -------------------------------------------------------------

    def _session_path(self, session_id: str) -> str:
        return os.path.join(self.config.data_dir, "sessions", f"{session_id}.ndjson")

    def _user_path(self, user_id: str) -> str:
        return os.path.join(self.config.data_dir, "users", f"{user_id}.ndjson")

    def open_session(self, session_id: str | None, user_id: str) -> Session:
        if session_id and session_id in self.sessions:
            return self.sessions[session_id]
        if session_id is None:
            self._session_counter += 1
            session_id = f"s-{self._session_counter:04d}"
        session = load_scope(self._session_path(session_id), Session,
                             session_id=session_id, user_id=user_id)
        self.sessions[session_id] = session
        return session

    def user_scope(self, user_id: str) -> MemoryScope:
        if user_id not in self.user_scopes:
            self.user_scopes[user_id] = load_scope(self._user_path(user_id))
        return self.user_scopes[user_id]

    def persist_session(self, session: Session) -> None:
        save_scope(session, self._session_path(session.session_id))

    # -- chat building blocks ---------------------------------------------------

    def memory_context(self, session: Session, recent: int = 3) -> str:
        lines = []
        facts = active_facts(session)
        if facts:
            lines.append("MEMORY:")
            for fact in facts:
                subject = session.graph.node(fact.subject).properties.get("name", fact.subject)
                lines.append(f"{subject} {fact.predicate} {fact.object}")
        turn_nodes = sorted(session.graph.find_nodes("Turn"),
                            key=lambda n: n.properties["turn"])[-recent:]
        if turn_nodes:
            lines.append("RECENT:")
            for node in turn_nodes:
                lines.append(f"Q: {node.properties['question']}")
                lines.append(f"A: {node.properties['answer']}")
        return "\n".join(lines)

    def extract_memory_facts(self, session: Session, question: str, answer: str) -> list[str]:
        """Run the memory extractor and assert its facts; returns error notes."""
        try:
            self.providers.require("memory")
        except ProviderError:
            return []
        prompt = (f"MEMORY-EXTRACT\nQUESTION:\n{question}\n\nANSWER:\n{answer}\n\n"
                  'One JSON object per line: {"subject":"...","predicate":"...","object":"..."}'
                  " or the word NONE.")
        try:
            raw = self.providers.complete("memory", prompt)
        except ProviderError as exc:
            return [f"memory extraction failed: {exc}"]
        errors = []
        for line in raw.splitlines():
            line = line.strip()
            if not line or line == "NONE":
                continue
            try:
                rec = json.loads(line)
                subject_name = rec["subject"]
                predicate = mechanical_predicate(rec["predicate"])
                obj = rec["object"]
            except (json.JSONDecodeError, KeyError, TypeError):
                errors.append(f"unusable memory line: {line!r}")
                continue
            hits = session.graph.find_nodes("Entity", {"name": subject_name})
            subject = hits[0].id if hits else session.graph.add_node(
                {"Entity"}, {"name": subject_name})
            assert_fact(session, subject, predicate, obj)
        return errors

    def rendered_triples(self, edge_ids) -> list[str]:
        graph = self.store.graph
        out = []
        for eid in sorted(edge_ids):
            edge = graph.edges.get(eid)
            if edge is None:
                continue
            src = graph.nodes[edge.source].properties.get("name", edge.source)
            dst = graph.nodes[edge.target].properties.get("name", edge.target)
            out.append(f"({src})-[{edge.type}]->({dst})")
        return out

    def metrics(self) -> dict:
        graph = self.store.graph
        chunks = sum(1 for n in graph.nodes.values() if "Chunk" in n.labels)
        mean = (sum(self.adherence_history) / len(self.adherence_history)
                if self.adherence_history else None)
        return {"nodes": len(graph.nodes), "edges": len(graph.edges),
                "chunks": chunks, "sessions": len(self.sessions),
                "mean_adherence": mean}


# -- HTTP layer -------------------------------------------------------------------


def canonical_json(payload, status_code: int = 200) -> Response:
    return Response(json.dumps(payload, sort_keys=True, ensure_ascii=False,
                               separators=(",", ":")),
                    status_code=status_code, media_type="application/json")


def error_json(status: int, message: str, **extra) -> Response:
    return canonical_json({"error": message, **extra}, status_code=status)


def create_app(service: KgragService) -> FastAPI:
    app = FastAPI(title="kgrag", docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = service.config.token
        if token and request.headers.get("authorization") != f"Bearer {token}":
            return error_json(401, "missing or bad bearer token")
        return await call_next(request)

    @app.post("/v1/ingest")
    async def ingest(request: Request):
        body = await request.json()
        document = (body or {}).get("document", "")
        if not document.strip():
            return error_json(400, "empty document")
        graph = service.store.try_write()
        if graph is None:
            return error_json(409, "ingest already running, retry shortly", retry=True)
        try:
            report = extract_graph(
                document, graph,
                ExtractionConfig(DEFAULT_SPEC, service.normalization),
                service.providers, max_passes=int(body.get("passes", 1)))
            service.store.checkpoint()
        except ProviderError as exc:
            return error_json(502, f"extraction provider failed: {exc}")
        finally:
            service.store.release_write()
        return canonical_json(report.as_dict())

    @app.post("/v1/chat")
    async def chat(request: Request):
        body = await request.json() or {}
        user_id = body.get("user_id", "")
        message = body.get("message", "")
        pattern = body.get("pattern", "hybrid")
        if not user_id or not message:
            return error_json(400, "user_id and message are required")
        if pattern not in ("graph", "hybrid", "vig"):
            return error_json(400, f"unknown pattern {pattern!r}")
        session = service.open_session(body.get("session_id"), user_id)
        if session.closed:
            return error_json(409, f"session {session.session_id} is closed")

        context = service.memory_context(session)
        question = f"{context}\n\nQUESTION:\n{message}" if context else message
        graph = service.store.graph
        try:
            if pattern == "graph":
                answer = answer_graph_rag(question, graph, service.providers)
            elif pattern == "hybrid":
                answer = answer_hybrid(question, graph, service.index,
                                       service.providers, k=service.config.k)
            else:
                filter_pattern = body.get("filter", "MATCH (chunk:Chunk) RETURN chunk")
                answer = answer_vector_in_graph(question, graph, service.index,
                                                filter_pattern, service.providers,
                                                k=service.config.k)
        except (PlanError, RetrievalError, ProviderError, ParseError,
                ValidationError) as exc:
            return error_json(502, f"retrieval failed: {exc}",
                              detail=getattr(exc, "raw", ""))

        turn = record_turn(session, message, answer.text)
        memory_errors = service.extract_memory_facts(session, message, answer.text)
        service.persist_session(session)

        factuality = None
        if service.config.inline_factuality:
            report = score_response(answer.text, graph, service.index, service.rules,
                                    service.providers, k=service.config.k)
            service.adherence_history.append(report.adherence)
            factuality = report.as_dict()

        provenance = answer.evidence.provenance()
        provenance["triples"] = service.rendered_triples(answer.evidence.edge_ids)
        return canonical_json({
            "answer": answer.text,
            "factuality": factuality,
            "memory_errors": memory_errors,
            "pattern": pattern,
            "plan": answer.plan.as_dict(),
            "provenance": provenance,
            "session_id": session.session_id,
            "turn": turn,
        })

    @app.post("/v1/query")
    async def query(request: Request):
        body = await request.json() or {}
        text = body.get("statement", "")
        try:
            stmt = parse_one(text)
        except ParseError as exc:
            return error_json(400, f"parse error: {exc}")
        if stmt.kind != MATCH_RETURN:
            return error_json(400, "only read-only MATCH ... RETURN is accepted here")
        try:
            result = execute(stmt, service.store.graph)
        except (ValidationError, ExecutionError) as exc:
            return error_json(400, str(exc))
        return canonical_json({"columns": result.table.columns,
                               "rows": [list(r) for r in result.table.rows]})

    @app.get("/v1/sessions/{session_id}/memory")
    async def session_memory(session_id: str):
        session = service.sessions.get(session_id)
        if session is None:
            path = service._session_path(session_id)
            if not os.path.exists(path):
                return error_json(404, f"unknown session {session_id!r}")
            session = service.open_session(session_id, "")
        def fact_dict(f):
            return {"fact_id": f.fact_id, "subject": f.subject,
                    "predicate": f.predicate, "object": f.object,
                    "valid_from": f.valid_from, "superseded_by": f.superseded_by}
        return canonical_json({
            "active": [fact_dict(f) for f in active_facts(session)],
            "history": [fact_dict(f) for f in all_facts(session)
                        if f.superseded_by is not None],
            "session_id": session_id,
            "turns": session.turns,
        })

    @app.post("/v1/sessions/{session_id}/end")
    async def end(session_id: str):
        session = service.sessions.get(session_id)
        if session is None:
            return error_json(404, f"unknown session {session_id!r}")
        try:
            from .memory import end_session

            summary = end_session(session, service.user_scope(session.user_id))
        except MemoryStateError as exc:
            return error_json(409, str(exc))
        service.persist_session(session)
        save_scope(service.user_scope(session.user_id),
                   service._user_path(session.user_id))
        return canonical_json(summary)

    @app.post("/v1/suites/run")
    async def suites_run(request: Request):
        body = await request.json() or {}
        suite_dir = body.get("dir", "")
        if not os.path.isdir(suite_dir):
            return error_json(400, f"suite directory {suite_dir!r} not found")
        from .quality import run_suite

        result = run_suite(suite_dir, jobs=int(body.get("jobs", 1)))
        return canonical_json(result.as_dict())

    @app.get("/v1/metrics")
    async def metrics():
        return canonical_json(service.metrics())

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    config.data_dir = os.environ.get(ENV_DATA_DIR, config.data_dir)
    service = KgragService(config)
    port = int(os.environ.get(ENV_PORT, config.port))
    uvicorn.run(create_app(service), host="127.0.0.1", port=port, log_level="warning")
