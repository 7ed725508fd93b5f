"""Three-tier hybrid verification.

Objective golds (exact string, label set, numeric) are matched
deterministically. Semantic string golds go through a similarity cascade:
clear matches and clear mismatches are decided by similarity alone and only
the ambiguous band is sent to a judge. Tool-use golds are scored by trace
alignment. Similarity and judge are injected callables.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyGold, EmptyInput, JudgeFailure, LengthMismatch, OutOfRange, ValidationError

ACCEPT_ABOVE = 0.92
REJECT_BELOW = 0.60
NUMERIC_RTOL = 1e-6

TIERS = (
    "objective_exact", "objective_numeric", "semantic_auto_accept", "semantic_auto_reject",
    "judge", "agent_composite", "synthetic_hint", "failed",
)

AUTO_ACCEPT, AUTO_REJECT, JUDGE = "AutoAccept", "AutoReject", "Judge"


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    score: float
    tier: str
    similarity: float | None = None
    judge_verdict: float | None = None
    flags: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")
        if self.tier not in TIERS:
            raise ValidationError(f"unknown tier {self.tier!r}")
        sim = self.similarity
        if self.tier == "semantic_auto_accept" and not (sim is not None and sim > ACCEPT_ABOVE):
            raise ValidationError("auto-accept needs similarity above the accept threshold")
        if self.tier == "semantic_auto_reject" and not (sim is not None and sim < REJECT_BELOW):
            raise ValidationError("auto-reject needs similarity below the reject threshold")
        if self.tier == "judge" and not (sim is not None and REJECT_BELOW <= sim <= ACCEPT_ABOVE):
            raise ValidationError("judge tier needs similarity inside the ambiguous band")

    def to_dict(self):
        return {"sample_id": self.sample_id, "score": self.score, "tier": self.tier,
                "similarity": self.similarity, "judge_verdict": self.judge_verdict,
                "flags": list(self.flags)}


# --- exact matching -------------------------------------------------------------

_TRAILING = "。．.!?！？"


def normalize_answer(text: str) -> str:
    text = " ".join(text.split()).casefold()
    return text.rstrip(_TRAILING + " ").lstrip()


@lru_cache(maxsize=1)
def extraction_table() -> dict:
    raw = resources.files("anisoeval").joinpath("data/extraction.json").read_text(encoding="utf-8")
    table = json.loads(raw)
    return {
        "version": table["version"],
        "prefix_rules": [re.compile(p, re.MULTILINE) for p in table["prefix_rules"]],
        "option_rule": re.compile(table["option_rule"]),
    }


def extract_answer(text: str) -> str:
    """Pull the final answer out of a verbose response using the extraction table."""
    table = extraction_table()
    out = text.strip()
    for rule in table["prefix_rules"]:
        found = list(rule.finditer(out))
        if found:
            out = found[-1].group("answer").strip()
            break
    m = table["option_rule"].match(out)
    if m:
        out = m.group("answer").upper()
    return out


def exact_match(output: str, gold: str) -> int:
    return int(normalize_answer(output) == normalize_answer(gold))


_NUMBER_RE = re.compile(
    r"(?P<num>[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)"
    r"(?:\s*/\s*(?P<den>\d+(?:\.\d*)?|\.\d+))?"
    r"(?P<pct>\s*%)?"
)


def extract_number(text: str) -> float | None:
    """Value of the last numeric literal (integer, decimal, a/b fraction, percent)."""
    text = text.replace("−", "-").replace("，", ",")
    for m in reversed(list(_NUMBER_RE.finditer(text))):
        x = float(m.group("num"))
        if m.group("den") is not None:
            den = float(m.group("den"))
            if den == 0:
                continue
            if "." not in m.group("num") + m.group("den") and "e" not in m.group("num").lower():
                x = float(Fraction(int(m.group("num")), int(m.group("den"))))
            else:
                x = x / den
        if m.group("pct"):
            x = x / 100.0
        return x
    return None


def numeric_equiv(output: str, gold: float) -> tuple[int, bool]:
    """``(score, no_number_flag)``; match within 1e-6 relative (absolute below 1)."""
    gold = float(gold)
    if not math.isfinite(gold):
        raise ValidationError("numeric gold must be finite")
    x = extract_number(output)
    if x is None:
        return 0, True
    return int(abs(x - gold) <= NUMERIC_RTOL * max(1.0, abs(gold))), False


# --- cascade ---------------------------------------------------------------------

def route(similarity: float) -> str:
    if not (-1.0 <= similarity <= 1.0):
        raise OutOfRange(f"similarity {similarity} outside [-1, 1]")
    if similarity > ACCEPT_ABOVE:
        return AUTO_ACCEPT
    if similarity < REJECT_BELOW:
        return AUTO_REJECT
    return JUDGE


def default_similarity(a: str, b: str) -> float:
    """Cosine of hashed character-trigram bags."""
    from .datapipe import cosine, hashed_trigram_embedding

    return min(1.0, max(-1.0, cosine(hashed_trigram_embedding(a), hashed_trigram_embedding(b))))


def constant_judge(verdict: float) -> Callable[[str, str], float]:
    def judge(candidate: str, gold: str) -> float:
        return verdict

    return judge


_SCORE_LINE = re.compile(r"\A\s*SCORE:\s*(0|0\.5|1)\s*\Z")


def parse_judge_output(text: str) -> float:
    m = _SCORE_LINE.match(text)
    if not m:
        raise JudgeFailure(f"judge output does not match 'SCORE: <0|0.5|1>': {text[:80]!r}")
    return float(m.group(1))


def judge_template() -> str:
    return resources.files("anisoeval").joinpath("data/judge_prompt.txt").read_text(encoding="utf-8")


class TemplateJudge:
    """Judge adapter: render the prompt template, call a text completer, parse the verdict.

    ``complete`` maps a prompt string to the judge model's reply.
    """

    wants_question = True

    def __init__(self, complete: Callable[[str], str], template: str | None = None):
        self.complete = complete
        self.template = template if template is not None else judge_template()

    def render(self, candidate: str, gold: str, question: str = "") -> str:
        return self.template.format(question=question, gold=gold, candidate=candidate)

    def __call__(self, candidate: str, gold: str, question: str = "") -> float:
        return parse_judge_output(self.complete(self.render(candidate, gold, question)))


def _call_judge(judge_fn, candidate, gold, question):
    if getattr(judge_fn, "wants_question", False):
        return judge_fn(candidate, gold, question=question)
    return judge_fn(candidate, gold)


def hybrid_score(sample, output: str, similarity_fn: Callable = default_similarity,
                 judge_fn: Callable | None = None) -> ScoreRecord:
    gold = sample.gold
    sid = sample.id
    if gold.kind == "numeric":
        score, no_number = numeric_equiv(output, gold.value)
        return ScoreRecord(sid, float(score), "objective_numeric", flags=("no_number",) if no_number else ())
    if gold.kind == "labels":
        cand = extract_answer(output)
        hit = any(exact_match(cand, g) or exact_match(output, g) for g in gold.value)
        return ScoreRecord(sid, float(hit), "objective_exact")
    if gold.kind == "tool_trace":
        trace = parse_tool_trace(output)
        if trace is None:
            return ScoreRecord(sid, 0.0, "agent_composite", flags=("unparseable_trace",))
        acc, red = tool_metrics(trace, list(gold.value))
        return ScoreRecord(sid, acc * (1.0 - red), "agent_composite")
    if not gold.semantic:
        hit = exact_match(output, gold.value) or exact_match(extract_answer(output), gold.value)
        return ScoreRecord(sid, float(hit), "objective_exact")

    sim = float(similarity_fn(output, gold.value))
    branch = route(sim)
    if branch == AUTO_ACCEPT:
        return ScoreRecord(sid, 1.0, "semantic_auto_accept", similarity=sim)
    if branch == AUTO_REJECT:
        return ScoreRecord(sid, 0.0, "semantic_auto_reject", similarity=sim)
    if judge_fn is None:
        return ScoreRecord(sid, 0.0, "judge", similarity=sim, flags=("judge_failure",))
    try:
        verdict = float(_call_judge(judge_fn, output, gold.value, sample.prompt))
        if not 0.0 <= verdict <= 1.0:
            raise JudgeFailure(f"verdict {verdict} outside [0, 1]")
    except Exception:
        # conservative: an unavailable judge never accepts
        return ScoreRecord(sid, 0.0, "judge", similarity=sim, flags=("judge_failure",))
    return ScoreRecord(sid, verdict, "judge", similarity=sim, judge_verdict=verdict)


class HybridScorer:
    """Scheduler-facing scorer: ``(sample, response) -> ScoreRecord``."""

    def __init__(self, similarity_fn: Callable = default_similarity, judge_fn: Callable | None = None):
        self.similarity_fn = similarity_fn
        self.judge_fn = judge_fn

    def __call__(self, sample, response) -> ScoreRecord:
        return hybrid_score(sample, response.output, self.similarity_fn, self.judge_fn)


# --- agreement ---------------------------------------------------------------------

def cohen_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"{len(labels_a)} vs {len(labels_b)} labels")
    if not labels_a:
        raise EmptyInput("no labels")
    n = len(labels_a)
    cats = sorted(set(labels_a) | set(labels_b), key=repr)
    pa = np.array([sum(1 for x in labels_a if x == c) for c in cats], dtype=np.float64) / n
    pb = np.array([sum(1 for x in labels_b if x == c) for c in cats], dtype=np.float64) / n
    p_o = sum(1 for x, y in zip(labels_a, labels_b) if x == y) / n
    p_e = float(np.dot(pa, pb))
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


# --- tool use --------------------------------------------------------------------------

def _tool_name(step) -> str:
    if isinstance(step, dict):
        return str(step.get("tool", ""))
    return str(step[0])


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def tool_metrics(trace: Sequence, gold_trace: Sequence) -> tuple[float, float]:
    """``(tool selection accuracy, step redundancy)`` of a tool-call trace."""
    if not gold_trace:
        raise EmptyGold("gold trace is empty")
    if not trace:
        return 0.0, 0.0
    names = [_tool_name(s) for s in trace]
    gold_names = [_tool_name(s) for s in gold_trace]
    matched = _lcs_length(names, gold_names)
    return matched / len(names), max(0, len(names) - len(gold_names)) / len(names)


def parse_tool_trace(output: str):
    """A JSON list of ``{"tool", "args"}`` steps embedded in ``output``, or None."""
    start, end = output.find("["), output.rfind("]")
    if start < 0 or end < start:
        return None
    try:
        steps = json.loads(output[start:end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(steps, list) or not all(isinstance(s, dict) and "tool" in s for s in steps):
        return None
    return steps
