"""Report figures.

Every CLI report path gets a rendered PNG next to the JSON file: ingestion
pass totals, suite pass/error overview, factuality verdict breakdown. Uses
the Agg backend so rendering works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIG_SIZE = (7.0, 4.2)
BAR_COLORS = {"emitted": "#9ecae1", "valid": "#4292c6", "applied": "#08519c"}


def figure_path(report_path: str) -> str:
    base, _ = os.path.splitext(report_path)
    return base + ".png"


def _save(fig, report_path: str) -> str:
    path = figure_path(report_path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def ingest_report_figure(report: dict, report_path: str) -> str:
    """Per-pass emitted/valid/applied bars for one extraction run."""
    passes = report.get("passes", [])
    numbers = [p["number"] for p in passes]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    width = 0.25
    for offset, key in enumerate(("emitted", "valid", "applied")):
        ax.bar([n + (offset - 1) * width for n in numbers],
               [p[key] for p in passes], width=width, label=key,
               color=BAR_COLORS[key])
    ax.set_xlabel("pass")
    ax.set_ylabel("statements")
    ax.set_xticks(numbers)
    ax.set_title(f"extraction: error rate {report.get('error_rate', 0.0):.3f}")
    ax.legend()
    return _save(fig, report_path)


def suite_report_figure(result: dict, report_path: str) -> str:
    """Suite overview: pass/fail counts and the error-rate distribution."""
    cases = result.get("cases", [])
    rates = [c["report"]["error_rate"] for c in cases if c.get("report")]
    passed = sum(1 for c in cases if c["passed"])
    fig, (left, right) = plt.subplots(1, 2, figsize=FIG_SIZE)
    left.bar(["pass", "fail"], [passed, len(cases) - passed],
             color=["#31a354", "#de2d26"])
    left.set_title(f"cases ({result.get('pass_rate', 0.0):.2%} pass)")
    if rates:
        right.hist(rates, bins=min(20, max(5, len(set(rates)))), color="#4292c6")
    right.set_title(f"error rate (mean {result.get('mean_error_rate', 0.0):.4f})")
    right.set_xlabel("per-case error rate")
    return _save(fig, report_path)


def factuality_report_figure(report: dict, report_path: str) -> str:
    """Verdict breakdown with the adherence score in the title."""
    counts: dict[str, int] = {}
    for verdict in report.get("verdicts", []):
        counts[verdict["verdict"]] = counts.get(verdict["verdict"], 0) + 1
    order = ["SELF_SUPPORTED", "KG_SUPPORTED", "UNSUPPORTED", "EXCEPTION"]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.bar(order, [counts.get(k, 0) for k in order],
           color=["#31a354", "#74c476", "#de2d26", "#969696"])
    ax.set_ylabel("sentences")
    ax.set_title(f"factual adherence {report.get('adherence', 1.0):.3f}"
                 + (" (partial)" if report.get("partial") else ""))
    ax.tick_params(axis="x", labelrotation=12)
    return _save(fig, report_path)
