"""Regression machinery: id-independent graph comparison and suite running.

Elements are matched across graphs by canonical keys (for nodes: sorted
labels plus the designated key property, `name` over `id` over the full
property fingerprint; for edges: endpoint keys, type and the property
fingerprint). Suites pair an input document with an expected snapshot and a
scripted LLM transcript; a case passes exactly when the diff is empty.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .cypher.ast import render_value
from .graph import PropertyGraph, load_snapshot
from .ingestion import (
    DEFAULT_SPEC,
    ExtractionConfig,
    ExtractionReport,
    NormalizationConfig,
    STATIC,
    extract_graph,
)
from .llm import MockEmbedder, ProviderSet, ScriptedProvider, load_script


@dataclass
class KeyConfig:
    """Key-property precedence, overridable per label."""

    default_precedence: tuple = ("name", "id")
    per_label: dict[str, str] = field(default_factory=dict)

    def key_property(self, labels) -> str | None:
        for label in sorted(labels):
            if label in self.per_label:
                return self.per_label[label]
        return None


def canonical_node_key(node, config: KeyConfig | None = None) -> tuple:
    config = config or KeyConfig()
    labels = tuple(sorted(node.labels))
    override = config.key_property(node.labels)
    candidates = (override,) if override else config.default_precedence
    for prop in candidates:
        if prop and prop in node.properties:
            return (labels, prop, render_value(node.properties[prop]))
    fingerprint = tuple((k, render_value(v)) for k, v in sorted(node.properties.items()))
    return (labels, "#", fingerprint)


def canonical_edge_key(edge, node_keys: dict[int, tuple]) -> tuple:
    fingerprint = tuple((k, render_value(v)) for k, v in sorted(edge.properties.items()))
    return (node_keys[edge.source], edge.type, node_keys[edge.target], fingerprint)


def render_key(key: tuple) -> str:
    if len(key) == 3:  # node key
        labels, prop, value = key
        shown = value if isinstance(value, str) else json.dumps(value)
        return ":".join(labels) + f"[{prop}={shown}]"
    src, type_, dst, fingerprint = key
    return f"{render_key(src)}-[{type_} {json.dumps(fingerprint)}]->{render_key(dst)}"


def _counted(keys) -> dict:
    out: dict = {}
    for key in keys:
        out[key] = out.get(key, 0) + 1
    return out


def _multiset_minus(a: dict, b: dict) -> list:
    out = []
    for key, count in a.items():
        extra = count - b.get(key, 0)
        out.extend([key] * max(0, extra))
    return sorted(out, key=render_key)


@dataclass
class GraphDiff:
    nodes_only_in_expected: list = field(default_factory=list)
    nodes_only_in_actual: list = field(default_factory=list)
    edges_only_in_expected: list = field(default_factory=list)
    edges_only_in_actual: list = field(default_factory=list)
    property_mismatches: list = field(default_factory=list)  # (key, expected, actual)
    ambiguous_keys: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.nodes_only_in_expected or self.nodes_only_in_actual
                    or self.edges_only_in_expected or self.edges_only_in_actual
                    or self.property_mismatches)

    def entry_count(self) -> int:
        return (len(self.nodes_only_in_expected) + len(self.nodes_only_in_actual)
                + len(self.edges_only_in_expected) + len(self.edges_only_in_actual)
                + len(self.property_mismatches))

    def as_dict(self) -> dict:
        return {
            "nodes_only_in_expected": [render_key(k) for k in self.nodes_only_in_expected],
            "nodes_only_in_actual": [render_key(k) for k in self.nodes_only_in_actual],
            "edges_only_in_expected": [render_key(k) for k in self.edges_only_in_expected],
            "edges_only_in_actual": [render_key(k) for k in self.edges_only_in_actual],
            "property_mismatches": [
                {"key": render_key(k), "expected": e, "actual": a}
                for k, e, a in self.property_mismatches],
            "ambiguous_keys": [render_key(k) for k in self.ambiguous_keys],
            "empty": self.empty,
        }


def graph_diff(expected: PropertyGraph, actual: PropertyGraph,
               config: KeyConfig | None = None) -> GraphDiff:
    config = config or KeyConfig()
    diff = GraphDiff()

    exp_node_keys = {nid: canonical_node_key(n, config) for nid, n in expected.nodes.items()}
    act_node_keys = {nid: canonical_node_key(n, config) for nid, n in actual.nodes.items()}
    exp_counts = _counted(exp_node_keys.values())
    act_counts = _counted(act_node_keys.values())
    diff.nodes_only_in_expected = _multiset_minus(exp_counts, act_counts)
    diff.nodes_only_in_actual = _multiset_minus(act_counts, exp_counts)

    # duplicated keys on either side: flagged, never paired for property checks
    dupes = {k for k, c in exp_counts.items() if c > 1}
    dupes |= {k for k, c in act_counts.items() if c > 1}
    diff.ambiguous_keys = sorted(dupes, key=render_key)

    exp_by_key = {key: nid for nid, key in exp_node_keys.items() if key not in dupes}
    act_by_key = {key: nid for nid, key in act_node_keys.items() if key not in dupes}
    for key in sorted(set(exp_by_key) & set(act_by_key), key=render_key):
        if key[1] == "#":
            continue  # fingerprint keys equal implies property maps equal
        exp_props = expected.nodes[exp_by_key[key]].properties
        act_props = actual.nodes[act_by_key[key]].properties
        exp_shown = {k: render_value(v) for k, v in sorted(exp_props.items())}
        act_shown = {k: render_value(v) for k, v in sorted(act_props.items())}
        if exp_shown != act_shown:
            diff.property_mismatches.append((key, exp_shown, act_shown))

    exp_edges = _counted(canonical_edge_key(e, exp_node_keys)
                         for e in expected.edges.values())
    act_edges = _counted(canonical_edge_key(e, act_node_keys)
                         for e in actual.edges.values())
    diff.edges_only_in_expected = _multiset_minus(exp_edges, act_edges)
    diff.edges_only_in_actual = _multiset_minus(act_edges, exp_edges)
    return diff


def render_diff(diff: GraphDiff) -> str:
    """Deterministic text rendering, fed to the explaining provider."""
    return json.dumps(diff.as_dict(), sort_keys=True, ensure_ascii=False, indent=1)


def explain_diff(diff: GraphDiff, provider) -> str:
    prompt = "Explain the following knowledge-graph discrepancies:\n" + render_diff(diff)
    from .llm import CompletionRequest

    return provider.complete(CompletionRequest(prompt, role="judge"))


# -- suite runner ----------------------------------------------------------------


@dataclass
class CaseResult:
    name: str
    passed: bool
    error: str | None
    diff: GraphDiff | None
    report: ExtractionReport | None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "error": self.error,
            "diff": self.diff.as_dict() if self.diff else None,
            "report": self.report.as_dict() if self.report else None,
        }


@dataclass
class SuiteResult:
    cases: list[CaseResult]

    @property
    def pass_rate(self) -> float:
        return (sum(1 for c in self.cases if c.passed) / len(self.cases)
                if self.cases else 1.0)

    @property
    def mean_error_rate(self) -> float:
        rates = [c.report.error_rate for c in self.cases if c.report is not None]
        return sum(rates) / len(rates) if rates else 0.0

    @property
    def failed(self) -> list[CaseResult]:
        return [c for c in self.cases if not c.passed]

    def as_dict(self) -> dict:
        return {"cases": [c.as_dict() for c in self.cases],
                "pass_rate": self.pass_rate,
                "mean_error_rate": self.mean_error_rate,
                "total": len(self.cases)}


def _load_case_config(path: str) -> dict:
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def run_case(case_dir: str, key_config: KeyConfig | None = None) -> CaseResult:
    name = os.path.basename(case_dir.rstrip("/"))
    doc_path = os.path.join(case_dir, "doc.txt")
    expected_path = os.path.join(case_dir, "expected.ndjson")
    script_path = os.path.join(case_dir, "script.ndjson")
    for path in (doc_path, expected_path, script_path):
        if not os.path.exists(path):
            return CaseResult(name, False, f"missing fixture file {os.path.basename(path)}",
                              None, None)
    cfg = _load_case_config(os.path.join(case_dir, "config.json"))
    with open(doc_path, "r", encoding="utf-8") as fh:
        document = fh.read()
    try:
        expected = load_snapshot(expected_path)
        providers = ProviderSet(extractor=ScriptedProvider(load_script(script_path)),
                                embedder=MockEmbedder(16))
    except Exception as exc:
        return CaseResult(name, False, str(exc), None, None)

    normalization = NormalizationConfig(
        schema_mode=STATIC if cfg.get("schema") == "static" else "free",
        relation_whitelist=set(cfg.get("relation_whitelist", ())),
        label_whitelist=set(cfg.get("label_whitelist", ())))
    extraction = ExtractionConfig(DEFAULT_SPEC, normalization,
                                  budget=int(cfg.get("budget", 100_000)))
    graph = PropertyGraph()
    report = extract_graph(document, graph, extraction, providers,
                           max_passes=int(cfg.get("passes", 1)))
    for edge in graph.edges.values():  # store invariant scan after every run
        assert edge.source in graph.nodes and edge.target in graph.nodes
    diff = graph_diff(expected, graph, key_config)
    return CaseResult(name, diff.empty, None, diff, report)


def run_suite(suite_dir: str, jobs: int = 1,
              key_config: KeyConfig | None = None) -> SuiteResult:
    case_dirs = sorted(
        os.path.join(suite_dir, d) for d in os.listdir(suite_dir)
        if os.path.isdir(os.path.join(suite_dir, d)))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda d: run_case(d, key_config), case_dirs))
    else:
        results = [run_case(d, key_config) for d in case_dirs]
    return SuiteResult(results)
