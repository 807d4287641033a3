"""Document-to-graph extraction.

One document turns into graph mutations through a multi-pass loop: build a
role/instructions/document/graph/output-format prompt, complete it, parse the
returned statements, normalize relation names and unit-bearing properties,
and apply what survives. Passes after the first carry the previous pass's
parse errors and rejections back to the model as corrective context; the loop
stops early once a pass applies nothing new.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cypher import ParseError, ValidationError, execute, parse, validate
from .cypher.ast import CREATE, MERGE, Statement
from .graph import PropertyGraph
from .llm import ProviderError, ProviderSet
from .vectors import cosine

FREE_FORM = "free"
STATIC = "static"

CORRECTIONS_HEADER = "CORRECTIONS FROM PREVIOUS PASS:"


class NormalizationError(Exception):
    """Relation or unit outside the configured schema."""


class PromptBudgetError(Exception):
    def __init__(self, overflow: int):
        super().__init__(f"prompt exceeds token budget by {overflow}")
        self.overflow = overflow


def token_cost(text: str) -> int:
    """Provider-neutral token proxy: characters / 4, rounded up."""
    return (len(text) + 3) // 4


@dataclass
class PromptSpec:
    role: str
    instructions: list[str]
    output_format: str


@dataclass
class InstructionEntry:
    node_id: int
    body: str
    topics: list[str]
    embedding: list[float]


@dataclass
class NormalizationConfig:
    synonyms: dict[str, str] = field(default_factory=dict)
    # kind -> alias -> (canonical unit, factor)
    units: dict[str, dict[str, tuple[str, float]]] = field(default_factory=dict)
    schema_mode: str = FREE_FORM
    relation_whitelist: set[str] = field(default_factory=set)
    label_whitelist: set[str] = field(default_factory=set)

    def __post_init__(self):
        for canonical in self.synonyms.values():
            if canonical != _mechanical(canonical):
                raise ValueError(f"canonical relation {canonical!r} is not UPPER_SNAKE_CASE")
        for kind, registry in self.units.items():
            for alias, (canon, factor) in registry.items():
                if factor <= 0:
                    raise ValueError(f"conversion factor for {kind}/{alias} must be positive")


@dataclass
class PassReport:
    number: int
    emitted: int = 0
    valid: int = 0
    applied: int = 0
    parse_errors: int = 0
    rewrites: int = 0
    errors: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"number": self.number, "emitted": self.emitted, "valid": self.valid,
                "applied": self.applied, "parse_errors": self.parse_errors,
                "rewrites": self.rewrites, "errors": list(self.errors)}


@dataclass
class ExtractionReport:
    passes: list[PassReport] = field(default_factory=list)
    nodes_created: int = 0
    edges_created: int = 0
    incomplete: bool = False

    @property
    def emitted(self) -> int:
        return sum(p.emitted for p in self.passes)

    @property
    def valid(self) -> int:
        return sum(p.valid for p in self.passes)

    @property
    def applied(self) -> int:
        return sum(p.applied for p in self.passes)

    @property
    def error_rate(self) -> float:
        return (self.emitted - self.valid) / self.emitted if self.emitted else 0.0

    def as_dict(self) -> dict:
        return {"passes": [p.as_dict() for p in self.passes],
                "nodes_created": self.nodes_created,
                "edges_created": self.edges_created,
                "emitted": self.emitted, "valid": self.valid, "applied": self.applied,
                "error_rate": self.error_rate, "incomplete": self.incomplete}


@dataclass
class ExtractionConfig:
    prompt_spec: PromptSpec
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    budget: int = 4096
    instruction_graph: PropertyGraph | None = None
    instruction_budget: int = 512


DEFAULT_SPEC = PromptSpec(
    role=("You are an assistant in the data science team of a construction "
          "materials company extracting knowledge graphs from sales visit notes."),
    instructions=[
        "Break down customers, products, complaints and quantities mentioned in the note.",
        "Use MERGE so entities that already exist in the graph are reused.",
    ],
    output_format="Format the output only with the Cypher statements necessary to create the graph.",
)


# -- relation and unit normalization -----------------------------------------


def _mechanical(raw: str) -> str:
    out = raw.strip().upper()
    for ch in (" ", "-"):
        out = out.replace(ch, "_")
    return out


def normalize_relation(raw: str, config: NormalizationConfig) -> str:
    """Synonym-map, else mechanical UPPER_SNAKE_CASE. STATIC mode whitelists."""
    canonical = config.synonyms.get(raw) or config.synonyms.get(raw.lower())
    if canonical is None:
        canonical = _mechanical(raw)
    if config.schema_mode == STATIC and canonical not in config.relation_whitelist:
        raise NormalizationError(f"relation {raw!r} outside the static schema")
    return canonical


def normalize_unit(value: float, unit: str, kind: str,
                   config: NormalizationConfig) -> tuple[float, str]:
    registry = config.units.get(kind, {})
    if unit not in registry:
        raise NormalizationError(f"unit {unit!r} not registered for kind {kind!r}")
    canonical, factor = registry[unit]
    return value * factor, canonical


def _unit_suffixes(config: NormalizationConfig) -> dict[str, tuple[str, str, float]]:
    # alias -> (kind, canonical, factor); later kinds never shadow earlier aliases
    table = {}
    for kind in sorted(config.units):
        for alias, (canonical, factor) in config.units[kind].items():
            table.setdefault(alias, (kind, canonical, factor))
    return table


def normalize_statement(stmt: Statement, config: NormalizationConfig) -> tuple[Statement, int, list[str]]:
    """Rewrite relation types and unit-suffixed properties in place.

    Returns (statement, rewrite count, rejection messages). A nonempty
    rejection list means the statement must not be applied.
    """
    rewrites = 0
    rejections = []
    if stmt.kind not in (CREATE, MERGE):
        return stmt, 0, []
    suffixes = _unit_suffixes(config)
    for rel in stmt.pattern.rels:
        if rel.type is None:
            continue
        try:
            canonical = normalize_relation(rel.type, config)
        except NormalizationError as exc:
            rejections.append(str(exc))
            continue
        if canonical != rel.type:
            rel.type = canonical
            rewrites += 1
    for element in list(stmt.pattern.nodes) + list(stmt.pattern.rels):
        props = element.properties
        for key in sorted(props):
            base, _, suffix = key.rpartition("_")
            if not base or suffix not in suffixes:
                continue
            kind, canonical, factor = suffixes[suffix]
            if suffix == canonical or not isinstance(props[key], float):
                continue
            props[f"{base}_{canonical}"] = props.pop(key) * factor
            rewrites += 1
        element.properties = dict(sorted(props.items()))
    if config.schema_mode == STATIC:
        for node in stmt.pattern.nodes:
            if not node.labels:
                rejections.append("label-less node outside the static schema")
            for label in node.labels:
                if label not in config.label_whitelist:
                    rejections.append(f"label {label!r} outside the static schema")
    return stmt, rewrites, rejections


def add_instruction(graph: PropertyGraph, body: str, topics=(), embedding=None,
                    providers: ProviderSet | None = None) -> int:
    """Store one instruction node; embeds the body when no vector is given."""
    if embedding is None:
        embedding = providers.embed(body)
    return graph.add_node({"Instruction"},
                          {"body": body, "topics": list(topics), "emb": list(embedding)})


# -- prompt assembly -----------------------------------------------------------


def select_instructions(document_text: str, instruction_graph: PropertyGraph | None,
                        budget: int, providers: ProviderSet) -> list[InstructionEntry]:
    """Rank instruction nodes by cosine against the document, take greedily
    in rank order while the rendered size fits the budget."""
    if instruction_graph is None or not instruction_graph.nodes:
        return []
    doc_emb = providers.embed(document_text)
    entries = []
    for node in instruction_graph.find_nodes("Instruction"):
        body = node.properties.get("body")
        emb = node.properties.get("emb")
        if not body or not emb:
            continue
        topics = node.properties.get("topics", [])
        entries.append((cosine(doc_emb, emb), node.id,
                        InstructionEntry(node.id, body, list(topics), list(emb))))
    entries.sort(key=lambda t: (-t[0], t[1]))
    picked = []
    used = 0
    for _, _, entry in entries:
        cost = token_cost(entry.body)
        if used + cost > budget:
            break
        picked.append(entry)
        used += cost
    return picked


def build_prompt(spec: PromptSpec, document_text: str, graph_summary: str,
                 budget: int | None = None) -> str:
    instructions = "\n".join(f"{i}. {text}" for i, text in enumerate(spec.instructions, 1))
    prompt = (f"ROLE:\n{spec.role}\n\n"
              f"INSTRUCTIONS:\n{instructions}\n\n"
              f"DOCUMENT:\n{document_text}\n\n"
              f"GRAPH:\n{graph_summary or '(empty)'}\n\n"
              f"OUTPUT_FORMAT:\n{spec.output_format}")
    if budget is not None and token_cost(prompt) > budget:
        raise PromptBudgetError(token_cost(prompt) - budget)
    return prompt


def summarize_graph(graph: PropertyGraph, sample_triples: int = 20) -> str:
    """Label histogram + relation histogram + sample triples, deterministic."""
    if not graph.nodes:
        return ""
    labels: dict[str, int] = {}
    for node in graph.nodes.values():
        for label in node.labels:
            labels[label] = labels.get(label, 0) + 1
    rels: dict[str, int] = {}
    for edge in graph.edges.values():
        rels[edge.type] = rels.get(edge.type, 0) + 1
    lines = ["labels: " + " ".join(f"{k}={v}" for k, v in sorted(labels.items()))]
    if rels:
        lines.append("relations: " + " ".join(f"{k}={v}" for k, v in sorted(rels.items())))
    triples = sorted(graph.as_triples(),
                     key=lambda t: (t.subject, t.predicate, t.object))[:sample_triples]
    if triples:
        lines.append("triples:")
        for t in triples:
            lines.append(f"  ({t.subject})-[{t.predicate}]->({t.object})")
    return "\n".join(lines)


# -- the agentic loop ----------------------------------------------------------


def extract_graph(document_text: str, graph: PropertyGraph, config: ExtractionConfig,
                  providers: ProviderSet, max_passes: int = 1) -> ExtractionReport:
    if max_passes < 1:
        raise ValueError("max_passes must be >= 1")
    report = ExtractionReport()
    nodes_before = len(graph.nodes)
    edges_before = len(graph.edges)
    selected = None
    previous_errors: list[str] = []

    for number in range(1, max_passes + 1):
        if selected is None:
            if config.instruction_graph is not None:
                selected = select_instructions(document_text, config.instruction_graph,
                                               config.instruction_budget, providers)
            else:
                selected = []
        instructions = list(config.prompt_spec.instructions)
        instructions += [entry.body for entry in selected]
        if number > 1:
            block = CORRECTIONS_HEADER
            if previous_errors:
                block += "\n" + "\n".join(previous_errors)
            else:
                block += "\nnone"
            instructions.append(block)
        spec = PromptSpec(config.prompt_spec.role, instructions,
                          config.prompt_spec.output_format)
        summary = summarize_graph(graph) if number > 1 else ""
        prompt = build_prompt(spec, document_text, summary, config.budget)

        pass_report = PassReport(number)
        report.passes.append(pass_report)
        try:
            response = providers.complete("extractor", prompt)
        except ProviderError as exc:
            pass_report.errors.append(f"provider failure: {exc}")
            report.incomplete = True
            break

        previous_errors = []
        for item in parse(response):
            pass_report.emitted += 1
            if isinstance(item, ParseError):
                pass_report.parse_errors += 1
                pass_report.errors.append(str(item))
                previous_errors.append(str(item))
                continue
            try:
                validate(item)
            except ValidationError as exc:
                pass_report.errors.append(str(exc))
                previous_errors.append(str(exc))
                continue
            item, rewrites, rejections = normalize_statement(item, config.normalization)
            pass_report.rewrites += rewrites
            if rejections:
                pass_report.errors.extend(rejections)
                previous_errors.extend(rejections)
                continue
            pass_report.valid += 1
            if item.is_write:
                before = graph.revision
                execute(item, graph)
                if graph.revision > before:
                    pass_report.applied += 1
        if pass_report.applied == 0:
            break

    report.nodes_created = len(graph.nodes) - nodes_before
    report.edges_created = len(graph.edges) - edges_before
    return report
