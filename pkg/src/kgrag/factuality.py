"""Factual-adherence scoring: the hallucination-risk indicator.

A response is split into sentences; each sentence is checked first against
the earlier sentences (with a judge provider), then against the knowledge
graph (evidence gathered by hybrid retrieval, decided by the judge).
Exception rules short-circuit both checks. The adherence score is the
supported fraction of non-exception sentences; responses whose checks failed
operationally (unparseable judge output, retrieval failure) are flagged and
the report is marked partial, but the arithmetic is unchanged.
"""

from __future__ import annotations

import fnmatch
import json
import re
from dataclasses import dataclass, field

from .graph import PropertyGraph
from .llm import ProviderError, ProviderSet
from .retrieval import (
    GRAPH,
    Evidence,
    PlanError,
    RetrievalError,
    gather_evidence,
    plan_question,
    render_evidence,
)
from .vectors import VectorIndex

SELF_SUPPORTED = "SELF_SUPPORTED"
KG_SUPPORTED = "KG_SUPPORTED"
UNSUPPORTED = "UNSUPPORTED"
EXCEPTION = "EXCEPTION"

_SENTENCE_END = ".?!"
_YES_RE = re.compile(r"YES\s+([0-9]+(?:\s*,\s*[0-9]+)*)\s*\Z")


@dataclass
class ExceptionRule:
    pattern: str
    kind: str  # exact | wildcard
    reason: str

    def __post_init__(self):
        if not self.reason:
            raise ValueError("exception rule needs a nonempty reason")
        if self.kind not in ("exact", "wildcard"):
            raise ValueError(f"unknown exception rule kind {self.kind!r}")

    def matches(self, sentence: str) -> bool:
        if self.kind == "exact":
            return sentence == self.pattern
        return fnmatch.fnmatchcase(sentence, self.pattern)


def load_rules(path) -> list[ExceptionRule]:
    rules = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rules.append(ExceptionRule(rec["pattern"], rec.get("kind", "exact"),
                                           rec["reason"]))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}: bad rule at line {lineno}: {exc}")
    return rules


@dataclass
class SentenceVerdict:
    index: int  # 1-based
    text: str
    verdict: str
    evidence: list = field(default_factory=list)  # sentence indices or provenance ids
    reason: str | None = None  # exception reason
    failures: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"index": self.index, "text": self.text, "verdict": self.verdict,
                "evidence": list(self.evidence), "reason": self.reason,
                "failures": list(self.failures)}


@dataclass
class FactualityReport:
    response: str
    verdicts: list[SentenceVerdict]
    partial: bool = False

    @property
    def n(self) -> int:
        return len(self.verdicts)

    @property
    def adherence(self) -> float:
        supported = sum(1 for v in self.verdicts
                        if v.verdict in (SELF_SUPPORTED, KG_SUPPORTED))
        exceptions = sum(1 for v in self.verdicts if v.verdict == EXCEPTION)
        denominator = self.n - exceptions
        return supported / denominator if denominator else 1.0

    def as_dict(self) -> dict:
        return {"response": self.response, "n": self.n,
                "adherence": self.adherence, "partial": self.partial,
                "verdicts": [v.as_dict() for v in self.verdicts]}


# -- sentence splitting --------------------------------------------------------


def split_sentences(text: str) -> list[str]:
    """Split on . ? ! followed by whitespace or end of text; a period between
    digits (decimals like 3.5) never ends a sentence. Fragments are trimmed
    and empty ones dropped."""
    sentences = []
    start = 0
    for i, ch in enumerate(text):
        if ch not in _SENTENCE_END:
            continue
        at_end = i + 1 == len(text)
        if not at_end and not text[i + 1].isspace():
            continue  # covers decimals: the period in 3.5 never splits
        fragment = text[start:i + 1].strip()
        if fragment:
            sentences.append(fragment)
        start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# -- the two checks -------------------------------------------------------------


def _self_prompt(index: int, sentence: str, earlier: list[str]) -> str:
    listed = "\n".join(f"R{k}: {s}" for k, s in enumerate(earlier, 1))
    return (f"SELF-CHECK\nSENTENCE:\nR{index}: {sentence}\n\n"
            f"EARLIER:\n{listed}\n\n"
            "Is the sentence supported by the earlier sentences? "
            "Answer YES followed by the supporting sentence numbers "
            "(for example: YES 1,2) or NO.")


def check_self(index: int, sentence: str, earlier: list[str],
               providers: ProviderSet) -> tuple[bool, list[int], str | None]:
    """Judge a sentence against the earlier ones.

    Returns (supported, supporting 1-based indices, failure message). An
    empty context is vacuously unsupported and never consults the judge.
    """
    if not earlier:
        return False, [], None
    reply = providers.complete("judge", _self_prompt(index, sentence, earlier)).strip()
    if reply == "NO":
        return False, [], None
    m = _YES_RE.fullmatch(reply)
    if m:
        indices = sorted({int(x) for x in m.group(1).replace(" ", "").split(",")})
        if indices and all(1 <= k <= len(earlier) for k in indices):
            return True, indices, None
    return False, [], f"unparseable self-check verdict {reply!r}"


def _kg_prompt(sentence: str, evidence: Evidence) -> str:
    return (f"KG-CHECK\nSENTENCE:\n{sentence}\n\n"
            f"EVIDENCE:\n{render_evidence(evidence)}\n\n"
            "Does the evidence support the sentence? Answer YES or NO.")


def check_kg(sentence: str, graph: PropertyGraph, index: VectorIndex | None,
             providers: ProviderSet, k: int = 5) -> tuple[bool, list, str | None]:
    """Judge a sentence against evidence gathered from the graph and chunks.

    Returns (supported, provenance ids, failure message).
    """
    evidence = Evidence()
    if providers.planner is not None:
        try:
            plan = plan_question(sentence, providers, kinds=(GRAPH,))
            evidence = gather_evidence(plan, graph, None, providers)
        except (PlanError, RetrievalError, ProviderError) as exc:
            return False, [], f"retrieval failure: {exc}"
    if index is not None:
        try:
            hits = index.search_topk(providers.embed(sentence), k)
        except ProviderError as exc:
            return False, [], f"retrieval failure: {exc}"
        from .retrieval import SubQuery, TEXT, EvidenceItem

        item = EvidenceItem(SubQuery(TEXT, query=sentence))
        item.hits = [(h.chunk_id, h.score, index.chunk_text(h.chunk_id)) for h in hits]
        evidence.items.append(item)
        evidence.chunk_ids.update(h.chunk_id for h in hits)
    if not evidence.nonempty:
        return False, [], None  # nothing in the KG even mentions this
    reply = providers.complete("judge", _kg_prompt(sentence, evidence)).strip()
    provenance = sorted(evidence.node_ids) + sorted(evidence.edge_ids) \
        + sorted(evidence.chunk_ids)
    if reply == "YES":
        if not provenance:
            return False, [], "judge accepted a sentence without provenance"
        return True, provenance, None
    if reply == "NO":
        return False, [], None
    return False, [], f"unparseable kg-check verdict {reply!r}"


# -- scoring ---------------------------------------------------------------------


def score_response(text: str, graph: PropertyGraph, index: VectorIndex | None,
                   rules: list[ExceptionRule], providers: ProviderSet,
                   k: int = 5) -> FactualityReport:
    """Exception check, then self check, then KG check, per sentence in order."""
    sentences = split_sentences(text)
    report = FactualityReport(text, [])
    for i, sentence in enumerate(sentences, 1):
        verdict = SentenceVerdict(i, sentence, UNSUPPORTED)
        report.verdicts.append(verdict)
        rule = next((r for r in rules if r.matches(sentence)), None)
        if rule is not None:
            verdict.verdict = EXCEPTION
            verdict.reason = rule.reason
            continue
        supported, indices, failure = check_self(i, sentence, sentences[: i - 1],
                                                 providers)
        if failure:
            verdict.failures.append(failure)
        if supported:
            verdict.verdict = SELF_SUPPORTED
            verdict.evidence = indices
            continue
        supported, provenance, failure = check_kg(sentence, graph, index, providers, k)
        if failure:
            verdict.failures.append(failure)
        if supported:
            verdict.verdict = KG_SUPPORTED
            verdict.evidence = provenance
    report.partial = any(v.failures for v in report.verdicts)
    return report
