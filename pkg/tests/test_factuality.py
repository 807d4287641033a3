import json
import re

import pytest

from kgrag.factuality import (
    EXCEPTION,
    ExceptionRule,
    KG_SUPPORTED,
    SELF_SUPPORTED,
    UNSUPPORTED,
    check_kg,
    check_self,
    load_rules,
    score_response,
    split_sentences,
)
from kgrag.graph import PropertyGraph
from kgrag.llm import MockEmbedder, ProviderSet, Script, ScriptEntry, ScriptedProvider
from kgrag.vectors import VectorIndex


def scripted(*entries):
    return ScriptedProvider(Script([ScriptEntry(m, k, r) for m, k, r in entries]))


# -- sentence splitting ------------------------------------------------------------


def test_split_basic():
    assert split_sentences("A. B? C!") == ["A.", "B?", "C!"]


def test_split_empty():
    assert split_sentences("") == []
    assert split_sentences("   \n ") == []


def test_split_decimal_points_not_boundaries():
    assert split_sentences("Price was 3.5 USD. Done.") == ["Price was 3.5 USD.", "Done."]


SPLIT_CASES = [
    "A. B? C!",
    "",
    "Price was 3.5 USD. Done.",
    "One sentence without end",
    "Trailing end.",
    "Double  spaces.  Stay out.",
    "Version 2.0 shipped. Users rejoiced!",
    "Is it done? Yes. Truly?",
    "a.b.c stays together. next",
    "Multi\nline. Breaks\ncount as whitespace? Yes.",
    "Ellipsis... counts as one boundary run.",
    "Numbers 1. 2. 3.",
    "Mixed 3.5 then 4. done",
    "Tail after punct. tail",
    "!",
    "?",
    ".",
    "  leading space. and more.  ",
    "No split at 12.99 price",
    "End with exclaim! And query? And dot.",
    "Unicode señal. Ñandú corre.",
    "Bang!Bang stays joined",
    "spaces after punct.   three of them.",
    "one.two.three",
    "A sentence. Another one. A third one. Four.",
    "Note N-1 | client: ACME. Sentiment: negative.",
    "Lost sales: 40 units of cement in 2023 due to humidity.",
    "price at 12.75 USD per bag. next note",
    "tabs\tdo not split. but this does.\tsee",
    "Question?! Both marks split on the last one",
    "Dot at end of text.",
    "No dot at end of text",
    "5. 6",
    "x. y. z",
    "Hello world! How are you? I am fine.",
    "Approx 3.14159 is pi. True.",
    "a !b",
    "a ! b",
    "sentence one!  sentence two?",
    "A.B? C",
    "A .B. C",
    "It costs 3.5. Next",
    "It costs 3.5.Next stays joined",
    "one\n\ntwo. three",
    "  . ",
    "..",
    ". leading dot",
    "inner (paren. still splits) here",
    '"quoted." follows',
    "semi; colon. splits only on dot",
]


def oracle_split(text):
    # independent path: regex lookaround split at punct followed by whitespace/end
    parts = re.split(r"(?<=[.?!])(?=\s|\Z)", text)
    return [p.strip() for p in parts if p.strip()]


def test_split_matches_rule_oracle_on_fixture_set():
    assert len(SPLIT_CASES) >= 50
    for text in SPLIT_CASES:
        assert split_sentences(text) == oracle_split(text), repr(text)


def test_split_order_preserved():
    out = split_sentences("Zeta. Alpha. Mid.")
    assert out == ["Zeta.", "Alpha.", "Mid."]


# -- exception rules ---------------------------------------------------------------


def test_exception_rules_match_and_validate():
    exact = ExceptionRule("As an AI model, I rely on the graph.", "exact", "disclaimer")
    wild = ExceptionRule("*boilerplate*", "wildcard", "template text")
    assert exact.matches("As an AI model, I rely on the graph.")
    assert not exact.matches("As an AI model")
    assert wild.matches("usual boilerplate sentence.")
    with pytest.raises(ValueError):
        ExceptionRule("x", "exact", "")
    with pytest.raises(ValueError):
        ExceptionRule("x", "regex", "r")


def test_rules_file_round_trip(tmp_path):
    path = tmp_path / "rules.ndjson"
    path.write_text(json.dumps({"pattern": "skip me.", "kind": "exact", "reason": "r"}) +
                    "\n" + json.dumps({"pattern": "*menu*", "kind": "wildcard",
                                       "reason": "nav"}) + "\n")
    rules = load_rules(path)
    assert len(rules) == 2 and rules[1].kind == "wildcard"
    bad = tmp_path / "bad.ndjson"
    bad.write_text('{"pattern": "x"}\n')
    with pytest.raises(ValueError, match="line 1"):
        load_rules(bad)


# -- self check --------------------------------------------------------------------


def test_self_check_first_sentence_vacuous():
    providers = ProviderSet()  # would raise if the judge were consulted
    supported, indices, failure = check_self(1, "First.", [], providers)
    assert (supported, indices, failure) == (False, [], None)


def test_self_check_parses_yes_with_indices():
    providers = ProviderSet(judge=scripted(("*", "pattern", "YES 1")))
    supported, indices, failure = check_self(2, "Echo.", ["First."], providers)
    assert supported and indices == [1] and failure is None


def test_self_check_garbage_is_flagged_not_unsupported_silently():
    providers = ProviderSet(judge=scripted(("*", "pattern", "perhaps?")))
    supported, indices, failure = check_self(2, "Echo.", ["First."], providers)
    assert not supported and "unparseable" in failure


def test_self_check_rejects_out_of_range_indices():
    providers = ProviderSet(judge=scripted(("*", "pattern", "YES 5")))
    supported, _, failure = check_self(2, "Echo.", ["First."], providers)
    assert not supported and failure


# -- kg check ----------------------------------------------------------------------


@pytest.fixture
def kg_fixture():
    g = PropertyGraph()
    cement = g.add_node({"Product"}, {"name": "cement"})
    c = g.add_node({"Customer"}, {"name": "ACME"})
    edge = g.add_edge("LOST_SALES", c, cement,
                      {"volume_units": 120.0, "year": 2023, "cause": "humidity"})
    index = VectorIndex(g, 16)
    emb = MockEmbedder(16)
    chunk = index.upsert_chunk("cement lost 120 units to humidity in 2023",
                               emb.embed("cement humidity"), [cement])
    return g, index, edge, chunk


def test_kg_check_supported_with_provenance(kg_fixture):
    g, index, edge, chunk = kg_fixture
    planner_resp = json.dumps({
        "kind": "GRAPH",
        "cypher": ('MATCH (c:Customer)-[l:LOST_SALES]->(p:Product {name:"cement"}) '
                   "RETURN sum(l.volume_units)")})
    providers = ProviderSet(
        planner=scripted(("*", "pattern", planner_resp)),
        judge=scripted(("*", "pattern", "YES")),
        embedder=MockEmbedder(16))
    supported, provenance, failure = check_kg(
        "Cement lost sales were 120 units", g, index, providers)
    assert supported and failure is None
    assert edge in provenance and chunk in provenance


def test_kg_check_unsupported(kg_fixture):
    g, index, _, _ = kg_fixture
    providers = ProviderSet(judge=scripted(("*", "pattern", "NO")),
                            embedder=MockEmbedder(16))
    supported, provenance, failure = check_kg("The moon is cheese", g, index, providers)
    assert (supported, provenance, failure) == (False, [], None)


def test_kg_check_no_evidence_skips_judge():
    providers = ProviderSet()  # raises if judge used
    supported, provenance, failure = check_kg("anything", PropertyGraph(), None, providers)
    assert (supported, provenance, failure) == (False, [], None)


def test_kg_check_retrieval_failure_flagged(kg_fixture):
    g, index, _, _ = kg_fixture
    providers = ProviderSet(planner=scripted(("*", "pattern", "not json")),
                            judge=scripted(("*", "pattern", "YES")),
                            embedder=MockEmbedder(16))
    supported, _, failure = check_kg("sentence", g, index, providers)
    assert not supported and "retrieval failure" in failure


# -- scoring -----------------------------------------------------------------------


def judge_script(mapping):
    """Route judge prompts by check kind and leading sentence text."""
    entries = []
    for kind, needle, reply in mapping:
        head = "SELF-CHECK" if kind == "self" else "KG-CHECK"
        entries.append((f"{head}\nSENTENCE:\n{needle}*", "pattern", reply))
    # default: self checks fail, so sentences fall through to the KG check
    entries.append(("SELF-CHECK*", "pattern", "NO"))
    return scripted(*entries)


def test_four_sentence_case_yields_three_quarters(kg_fixture):
    g, index, _, _ = kg_fixture
    text = ("Cement lost 120 units in 2023. The loss happened in 2023. "
            "The cause was humidity. Competitors are all bankrupt.")
    providers = ProviderSet(
        judge=judge_script([
            ("self", "R2: The loss happened in 2023.", "YES 1"),  # self-supported
            ("kg", "Cement lost 120 units in 2023.", "YES"),
            ("kg", "The cause was humidity.", "YES"),
            ("kg", "Competitors are all bankrupt.", "NO"),
        ]),
        embedder=MockEmbedder(16))
    report = score_response(text, g, index, [], providers)
    verdicts = [v.verdict for v in report.verdicts]
    assert verdicts == [KG_SUPPORTED, SELF_SUPPORTED, KG_SUPPORTED, UNSUPPORTED]
    # formula oracle: (1 self + 2 kg) / (4 - 0 exceptions)
    assert report.adherence == 0.75
    assert not report.partial


def test_all_exceptions_adherence_one():
    rules = [ExceptionRule("*", "wildcard", "everything excepted")]
    no_judge = ProviderSet(judge=scripted(("*", "pattern", "NO")))
    report = score_response("One. Two. Three.", PropertyGraph(), None, [], no_judge)
    assert report.adherence == 0.0  # no support without evidence or rules
    report = score_response("One. Two. Three.", PropertyGraph(), None, rules,
                            ProviderSet())  # rules short-circuit every provider
    assert [v.verdict for v in report.verdicts] == [EXCEPTION] * 3
    assert report.adherence == 1.0


def test_empty_response():
    report = score_response("", PropertyGraph(), None, [], ProviderSet())
    assert report.n == 0 and report.verdicts == [] and report.adherence == 1.0


def test_exception_short_circuits_judges():
    rules = [ExceptionRule("Skip me.", "exact", "template")]
    providers = ProviderSet()  # any judge/embedding call would raise
    report = score_response("Skip me.", PropertyGraph(), None, rules, providers)
    assert report.verdicts[0].verdict == EXCEPTION
    assert report.verdicts[0].reason == "template"
    assert report.verdicts[0].evidence == []


def test_verification_failure_keeps_arithmetic_marks_partial(kg_fixture):
    g, index, _, _ = kg_fixture
    text = "First sentence. Second sentence."
    providers = ProviderSet(
        judge=judge_script([
            ("self", "R2: Second sentence.", "garbled"),  # self-check fails operationally
            ("kg", "First sentence.", "NO"),
            ("kg", "Second sentence.", "NO"),
        ]),
        embedder=MockEmbedder(16))
    report = score_response(text, g, index, [], providers)
    assert report.partial is True
    assert report.verdicts[1].failures
    assert report.verdicts[1].verdict == UNSUPPORTED
    assert report.adherence == 0.0  # flags reduce neither numerator nor denominator


def test_self_check_consults_only_earlier_indices(kg_fixture):
    g, index, _, _ = kg_fixture
    transcript = []

    class RecordingJudge:
        def complete(self, request):
            transcript.append(request.prompt)
            return "NO"

    providers = ProviderSet(judge=RecordingJudge(), embedder=MockEmbedder(16))
    sentences = ["Alpha marker one.", "Beta marker two.", "Gamma marker three."]
    score_response(" ".join(sentences), g, index, [], providers)
    self_prompts = [p for p in transcript if p.startswith("SELF-CHECK")]
    for prompt in self_prompts:
        m = re.search(r"SENTENCE:\nR(\d+): (.+)", prompt)
        i = int(m.group(1))
        earlier_block = prompt.split("EARLIER:\n")[1].split("\n\n")[0]
        for k, sentence in enumerate(sentences, 1):
            if k < i:
                assert sentence in earlier_block
            else:
                assert sentence not in earlier_block


def test_monotonicity_unsupported_to_supported_never_decreases():
    # formula-level property: flip one UNSUPPORTED verdict to KG_SUPPORTED
    from kgrag.factuality import FactualityReport, SentenceVerdict

    for n in range(1, 6):
        for flips in range(n):
            verdicts = [SentenceVerdict(i + 1, "s", UNSUPPORTED) for i in range(n)]
            base = FactualityReport("r", verdicts).adherence
            verdicts[flips].verdict = KG_SUPPORTED
            assert FactualityReport("r", verdicts).adherence >= base


def test_report_pure_function_of_inputs(kg_fixture):
    g, index, _, _ = kg_fixture
    text = "Cement lost 120 units in 2023. Something unfounded."
    def providers():
        return ProviderSet(
            judge=judge_script([
                ("kg", "Cement lost 120 units in 2023.", "YES"),
                ("kg", "Something unfounded.", "NO"),
            ]),
            embedder=MockEmbedder(16))
    a = score_response(text, g, index, [], providers()).as_dict()
    b = score_response(text, g, index, [], providers()).as_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
