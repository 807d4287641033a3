"""Command line interface.

Report-writing commands put a rendered PNG figure next to every JSON report.
Provider wiring comes from a service config file (see README) or defaults to
the deterministic mock embedder plus scripted providers passed via --script.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .factuality import load_rules, score_response
from .figures import (
    factuality_report_figure,
    figure_path,
    ingest_report_figure,
    suite_report_figure,
)
from .fixtures import generate_corpus
from .graph import GraphStore
from .ingestion import DEFAULT_SPEC, ExtractionConfig, NormalizationConfig, STATIC, extract_graph
from .llm import MockEmbedder, ProviderSet, ScriptedProvider, load_script
from .retrieval import answer_graph_rag, answer_hybrid, answer_vector_in_graph
from .service import ENV_DATA_DIR, ServiceConfig, build_providers
from .vectors import VectorIndex


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1)


def _write_report(payload: dict, path: str, figure_fn) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(payload) + "\n")
    figure_fn(payload, path)
    click.echo(f"report: {path}")
    click.echo(f"figure: {figure_path(path)}")


def _providers(config_path: str | None, scripts: tuple) -> tuple[ProviderSet, ServiceConfig]:
    if config_path:
        config = ServiceConfig.from_file(config_path)
        providers = build_providers(config)
    else:
        config = ServiceConfig(data_dir=os.environ.get(ENV_DATA_DIR, "data"))
        providers = ProviderSet(embedder=MockEmbedder(config.dimension))
    for pair in scripts:
        role, _, path = pair.partition("=")
        if not path:
            raise click.UsageError(f"--script expects role=path, got {pair!r}")
        setattr(providers, role, ScriptedProvider(load_script(path)))
    return providers, config


def _open_store(config: ServiceConfig, data_dir: str | None) -> GraphStore:
    directory = data_dir or os.environ.get(ENV_DATA_DIR, config.data_dir)
    os.makedirs(directory, exist_ok=True)
    return GraphStore.open(os.path.join(directory, "graph.ndjson"))


@click.group()
def main():
    """Knowledge-graph RAG engine."""


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--passes", default=1, show_default=True, help="Extraction passes.")
@click.option("--schema", type=click.Choice(["static", "free"]), default="free",
              show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Write the extraction report (JSON + figure).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--script", "scripts", multiple=True, metavar="ROLE=PATH",
              help="Scripted provider for a role, e.g. extractor=script.ndjson.")
@click.option("--data-dir", default=None, help="Graph location (default: $KGRAG_DATA_DIR).")
def ingest(file, passes, schema, report_path, config_path, scripts, data_dir):
    """Extract FILE into the domain graph."""
    providers, config = _providers(config_path, scripts)
    store = _open_store(config, data_dir)
    normalization = NormalizationConfig(
        schema_mode=STATIC if schema == "static" else "free",
        relation_whitelist=set(config.relation_whitelist),
        label_whitelist=set(config.label_whitelist))
    with store.write() as graph:
        document = open(file, "r", encoding="utf-8").read()
        result = extract_graph(document, graph,
                               ExtractionConfig(DEFAULT_SPEC, normalization),
                               providers, max_passes=passes)
    store.checkpoint()
    store.close()
    payload = result.as_dict()
    if report_path:
        _write_report(payload, report_path, ingest_report_figure)
    else:
        click.echo(_dump(payload))
    if result.incomplete:
        sys.exit(2)


@main.command()
@click.argument("question")
@click.option("--pattern", type=click.Choice(["graph", "hybrid", "vig"]),
              default="hybrid", show_default=True)
@click.option("--filter", "filter_pattern", default="MATCH (chunk:Chunk) RETURN chunk",
              show_default=True, help="Candidate pattern for --pattern vig.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--script", "scripts", multiple=True, metavar="ROLE=PATH")
@click.option("--data-dir", default=None)
def ask(question, pattern, filter_pattern, config_path, scripts, data_dir):
    """Answer QUESTION against the stored graph."""
    providers, config = _providers(config_path, scripts)
    store = _open_store(config, data_dir)
    graph = store.graph
    index = VectorIndex(graph, config.dimension)
    if pattern == "graph":
        answer = answer_graph_rag(question, graph, providers)
    elif pattern == "hybrid":
        answer = answer_hybrid(question, graph, index, providers, k=config.k)
    else:
        answer = answer_vector_in_graph(question, graph, index, filter_pattern,
                                        providers, k=config.k)
    store.close()
    click.echo(answer.text)
    click.echo("provenance: " + json.dumps(answer.evidence.provenance(), sort_keys=True))
    click.echo("plan: " + json.dumps(answer.plan.as_dict(), sort_keys=True))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Transcript file: the response text to score.")
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--script", "scripts", multiple=True, metavar="ROLE=PATH")
@click.option("--data-dir", default=None)
def factuality(in_path, rules_path, report_path, config_path, scripts, data_dir):
    """Batch factual-adherence scoring of a transcript."""
    providers, config = _providers(config_path, scripts)
    store = _open_store(config, data_dir)
    index = VectorIndex(store.graph, config.dimension)
    rules = load_rules(rules_path) if rules_path else []
    text = open(in_path, "r", encoding="utf-8").read()
    result = score_response(text, store.graph, index, rules, providers, k=config.k)
    store.close()
    payload = result.as_dict()
    if report_path:
        _write_report(payload, report_path, factuality_report_figure)
    else:
        click.echo(_dump(payload))


@main.group()
def suite():
    """Regression suites."""


@suite.command("run")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--jobs", default=1, show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None)
def suite_run(directory, jobs, report_path):
    """Run every case in DIRECTORY; nonzero exit on any failure."""
    from .quality import run_suite

    result = run_suite(directory, jobs=jobs)
    payload = result.as_dict()
    if report_path:
        _write_report(payload, report_path, suite_report_figure)
    click.echo(f"pass rate: {result.pass_rate:.4f}  "
               f"mean error rate: {result.mean_error_rate:.4f}")
    for case in result.failed:
        click.echo(f"FAIL {case.name}: "
                   + (case.error or f"{case.diff.entry_count()} diff entries"))
    if result.failed:
        sys.exit(1)


@main.group()
def fixtures():
    """Fixture corpora."""


@fixtures.command("gen")
@click.option("--seed", default=1, show_default=True)
@click.option("--count", default=100, show_default=True)
@click.option("--error-rate", default=0.0, show_default=True)
@click.option("--passes", default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def fixtures_gen(seed, count, error_rate, passes, out_dir):
    """Generate a suite corpus of sales-visit minutes."""
    summary = generate_corpus(seed=seed, count=count, error_rate=error_rate,
                              out_dir=out_dir, passes=passes)
    click.echo(_dump(summary))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve(config_path):
    """Start the HTTP service."""
    from .service import ServiceConfig, serve as run_server

    run_server(ServiceConfig.from_file(config_path))


if __name__ == "__main__":
    main()
