"""Synthetic sales-visit corpus at desk scale.

Every generated case pairs a minute document with the exact Cypher a
well-behaved extractor would emit (ten MERGE statements), the expected graph
snapshot produced by executing those statements, and a scripted provider
transcript. An invalid-statement rate can be injected: chosen statement slots
are deterministically mangled in the pass-1 response and the corrected
statements are scripted behind the corrective-context prompt, which makes
those cases the designated multi-pass fixtures.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass

from .cypher import execute, parse_one
from .graph import PropertyGraph, save_snapshot
from .ingestion import CORRECTIONS_HEADER
from .llm import Script, ScriptEntry, save_script

PRODUCTS = ["cement", "concrete", "mortar", "plaster", "lime"]
CLIENTS = ["ACME Construcciones", "BuildCo", "Norte Obras", "Sur Materiales",
           "Delta Hormigones", "Obras Pampa"]
REPS = ["Ana Diaz", "Luis Paz", "Marta Gil", "Juan Ruiz"]
COMPETITORS = ["HormiMax", "Cementera Rio", "Grupo Anden"]
CAUSES = ["humidity", "late delivery", "packaging", "price"]
YEARS = [2022, 2023, 2024]
SENTIMENTS = ["positive", "neutral", "negative"]

LABEL_WHITELIST = {"SalesRep", "Customer", "Product", "Competitor", "Visit"}
RELATION_WHITELIST = {"VISITED", "ABOUT", "COMPLAINED_ABOUT", "LOST_SALES", "PRICES"}

STATEMENTS_PER_DOC = 10
_FIRST_EDGE_STATEMENT = 5  # statements 5..9 carry the relationships


@dataclass
class DocTruth:
    case: str
    note: str
    rep: str
    client: str
    product: str
    competitor: str
    cause: str
    year: int
    volume_units: int
    price_usd: float
    sentiment: str
    mangled: list[int]

    def as_dict(self) -> dict:
        return {"case": self.case, "note": self.note, "rep": self.rep,
                "client": self.client, "product": self.product,
                "competitor": self.competitor, "cause": self.cause,
                "year": self.year, "volume_units": self.volume_units,
                "price_usd": self.price_usd, "sentiment": self.sentiment,
                "statements": STATEMENTS_PER_DOC, "mangled": list(self.mangled)}


def _doc_statements(t: DocTruth) -> list[str]:
    q = json.dumps
    rep, client, product = q(t.rep), q(t.client), q(t.product)
    comp, note, cause = q(t.competitor), q(t.note), q(t.cause)
    return [
        f"MERGE (r:SalesRep {{name:{rep}}})",
        f"MERGE (c:Customer {{name:{client}}})",
        f"MERGE (p:Product {{name:{product}}})",
        f"MERGE (k:Competitor {{name:{comp}}})",
        f"MERGE (v:Visit {{note:{note}, sentiment:{q(t.sentiment)}, year:{t.year}}})",
        f"MERGE (r:SalesRep {{name:{rep}}})-[:VISITED {{note:{note}}}]->(c:Customer {{name:{client}}})",
        f"MERGE (v:Visit {{note:{note}}})-[:ABOUT {{note:{note}}}]->(p:Product {{name:{product}}})",
        f"MERGE (c:Customer {{name:{client}}})-[:COMPLAINED_ABOUT {{cause:{cause}, note:{note}}}]->(p:Product {{name:{product}}})",
        (f"MERGE (c:Customer {{name:{client}}})-[:LOST_SALES {{cause:{cause}, note:{note}, "
         f"volume_units:{t.volume_units}, year:{t.year}}}]->(p:Product {{name:{product}}})"),
        f"MERGE (k:Competitor {{name:{comp}}})-[:PRICES {{note:{note}, usd:{t.price_usd}}}]->(p:Product {{name:{product}}})",
    ]


def _doc_text(t: DocTruth) -> str:
    day = 1 + (t.volume_units % 27)
    month = 1 + (t.volume_units % 12)
    return (f"Note {t.note} | rep: {t.rep} | client: {t.client} | "
            f"date: {t.year}-{month:02d}-{day:02d}\n"
            f"Visited {t.client} to review {t.product} supplies.\n"
            f"Sentiment: {t.sentiment}. Client complained about {t.cause} issues "
            f"with {t.product}.\n"
            f"Lost sales: {t.volume_units} units of {t.product} in {t.year} "
            f"due to {t.cause}.\n"
            f"Competitor {t.competitor} prices {t.product} at {t.price_usd} USD per bag.\n")


def _mangle(statement: str, flavor: int) -> str:
    if flavor == 0:
        return statement.replace("{", "", 1)
    if flavor == 1 and "]->" in statement:
        return statement.replace("]->", "]-", 1)
    if flavor == 2:
        idx = statement.rindex(")")
        return statement[:idx] + statement[idx + 1:]
    return statement.replace("MERGE", "MERG", 1)


def _case_script(truth: DocTruth, statements: list[str]) -> Script:
    response = []
    corrections = []
    for i, stmt in enumerate(statements):
        if i in truth.mangled:
            response.append(_mangle(stmt, (truth.volume_units + i) % 4))
            corrections.append(stmt)
        else:
            response.append(stmt)
    entries = [ScriptEntry(f"*{CORRECTIONS_HEADER}\nnone*", "pattern", "")]
    entries.append(ScriptEntry(f"*{CORRECTIONS_HEADER}*", "pattern",
                               ";\n".join(corrections) + (";" if corrections else "")))
    entries.append(ScriptEntry(f"*DOCUMENT:*Note {truth.note}*", "pattern",
                               ";\n".join(response) + ";"))
    return Script(entries)


def generate_corpus(seed: int, count: int, error_rate: float = 0.0,
                    out_dir: str = "corpus", passes: int = 1) -> dict:
    """Write `count` suite cases under `out_dir`, deterministically from `seed`.

    Returns a summary dict with document, statement and injected-error counts.
    """
    if count > 10_000:
        raise ValueError("count is capped at 10_000 (desk scale)")
    rng = random.Random(seed)
    truths: list[DocTruth] = []
    for i in range(count):
        note = f"N-{i:04d}"
        if i < 3:
            # the corpus always answers the cement/humidity/2023 question
            product, cause, year = "cement", "humidity", 2023
        else:
            product = rng.choice(PRODUCTS)
            cause = rng.choice(CAUSES)
            year = rng.choice(YEARS)
        truths.append(DocTruth(
            case=f"case-{i:04d}", note=note, rep=rng.choice(REPS),
            client=rng.choice(CLIENTS), product=product,
            competitor=rng.choice(COMPETITORS), cause=cause, year=year,
            volume_units=rng.randrange(5, 96),
            price_usd=round(rng.uniform(5, 40), 2), sentiment=rng.choice(SENTIMENTS),
            mangled=[]))

    # only edge statements are mangle-eligible: their loss is never subsumed
    # by another statement, so a pass-2 correction always strictly adds
    eligible = [(d, s) for d in range(count)
                for s in range(_FIRST_EDGE_STATEMENT, STATEMENTS_PER_DOC)]
    injected = round(error_rate * count * STATEMENTS_PER_DOC)
    if injected > len(eligible):
        raise ValueError(f"error rate {error_rate} exceeds the mangle-eligible half")
    for doc_idx, stmt_idx in sorted(rng.sample(eligible, injected)):
        truths[doc_idx].mangled.append(stmt_idx)

    os.makedirs(out_dir, exist_ok=True)
    for truth in truths:
        case_dir = os.path.join(out_dir, truth.case)
        os.makedirs(case_dir, exist_ok=True)
        statements = _doc_statements(truth)

        with open(os.path.join(case_dir, "doc.txt"), "w", encoding="utf-8") as fh:
            fh.write(_doc_text(truth))

        expected = PropertyGraph()
        for stmt in statements:
            execute(parse_one(stmt), expected)
        save_snapshot(expected, os.path.join(case_dir, "expected.ndjson"))

        save_script(_case_script(truth, statements),
                    os.path.join(case_dir, "script.ndjson"))

        config = {"passes": passes, "corrective": bool(truth.mangled),
                  "schema": "static",
                  "label_whitelist": sorted(LABEL_WHITELIST),
                  "relation_whitelist": sorted(RELATION_WHITELIST)}
        with open(os.path.join(case_dir, "config.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(config, sort_keys=True, indent=1) + "\n")

    with open(os.path.join(out_dir, "truth.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps([t.as_dict() for t in truths], sort_keys=True, indent=1) + "\n")
    return {"cases": count, "statements": count * STATEMENTS_PER_DOC,
            "injected": injected}


def load_truth(out_dir: str) -> list[dict]:
    with open(os.path.join(out_dir, "truth.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)


def lost_sales_oracle(truth: list[dict], product: str, cause: str, year: int) -> float:
    """Independent aggregation over the ground-truth records."""
    return float(sum(t["volume_units"] for t in truth
                     if t["product"] == product and t["cause"] == cause
                     and t["year"] == year))
