"""Structured CoT pre-annotation and the high-confidence auto-label rule.

A comment is analyzed in six chained steps (summary, tones, severity axes,
implicit strategies, doubts, conclusion); each step's prompt embeds every
previous completion, so the chain is strictly monotone. Each step is a
separate client call (6 calls per comment): costlier than one structured
call, but it feeds the model its own prior reasoning verbatim and makes
each step independently parseable. The conclusion step yields a 0-10
toxicity score and a binary decision, from which the auto-label rule
either emits a non-toxic label or routes the comment to the human
verification queue. The rule never auto-labels anything as toxic.

Prompts are versioned French text assets shipped with the package; reports
cite their bundle hash so results stay traceable to the exact prompt text.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional

from .chatclient import ChatClient, ChatClientError
from .corpus import CommentRecord
from .taxonomy import (
    ImplicitCategory,
    Label,
    LabelValue,
    Provenance,
    ToxicityVector,
    vector_violations,
)

AUTO_LABEL_MAX_SCORE = 3
PROMPT_VERSION = "fr-v1"

STEP_NAMES = ("summary", "tones", "severity", "implicit", "doubts", "conclusion")
_STEP_FILES = {
    "summary": "step1_summary.txt",
    "tones": "step2_tones.txt",
    "severity": "step3_severity.txt",
    "implicit": "step4_implicit.txt",
    "doubts": "step5_doubts.txt",
    "conclusion": "step6_conclusion.txt",
}

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
CONCLUSION_QUESTION = "En conclusion, ce message est-il toxique ?"


@lru_cache(maxsize=None)
def _load_asset(name: str) -> str:
    return resources.files("toxipipe.prompts").joinpath(name).read_text(encoding="utf-8")


def toxicity_definition() -> str:
    return _load_asset("toxicity_definition.txt").strip()


def prompt_bundle_hash() -> str:
    """Stable hash of every prompt asset; cited in evaluation reports."""
    digest = hashlib.sha256()
    root = resources.files("toxipipe.prompts")
    for name in sorted(p.name for p in root.iterdir() if p.name.endswith(".txt")):
        digest.update(name.encode("utf-8"))
        digest.update(root.joinpath(name).read_text(encoding="utf-8").encode("utf-8"))
    return digest.hexdigest()[:12]


# ---------------------------------------------------------------------------
# Accent-insensitive scanning

def fold_text(text: str) -> str:
    """Length-preserving lowercase accent folding, for marker scanning.

    Offsets in the folded string map 1:1 onto the original, so sections
    located in folded space can be sliced out of the original text.
    """
    out = []
    for ch in text:
        base = unicodedata.normalize("NFD", ch)[0]
        low = base.lower()
        out.append(low[0] if low else base)
    return "".join(out)


# conclusion phrase plus, when interrogative, the rest of the question
_CONCLUSION_RE = re.compile(r"en conclusion(?:[^?\n]*\?)?")
_DECISION_RE = re.compile(r"\b(non[\s\-]toxique|non[\s\-]toxic|toxique|toxic|oui|non)\b")
_SCORE_RE = re.compile(r"(?<!\d)(\d{1,2})\s*/\s*10")
_SCORE_ANCHORED_RE = re.compile(r"score de toxicite\s*[:=]?\s*(\d{1,2})\s*/\s*10")
_TONE_RE = re.compile(r"([^,():\n]+?)\s*\(\s*(\d{1,3})\s*%\s*\)")
_SEVERITY_RE = re.compile(
    r"s\s*[:=]\s*(-?\d+)\s*[,;]?\s*h\s*[:=]\s*(-?\d+)\s*[,;]?\s*v\s*[:=]\s*(-?\d+)"
    r"\s*[,;]?\s*r\s*[:=]\s*(-?\d+)\s*[,;]?\s*a\s*[:=]\s*(-?\d+)\s*[,;]?\s*i\s*[:=]\s*(-?\d+)"
)


def _decision_from_token(token: str) -> LabelValue:
    token = token.replace("-", " ")
    if token.startswith("non") and "toxi" in token:
        return LabelValue.NON_TOXIC
    if token in ("oui", "toxique", "toxic"):
        return LabelValue.TOXIC
    return LabelValue.NON_TOXIC  # bare "non"


def find_decision(text: str, *, require_marker: bool) -> Optional[LabelValue]:
    """First decision token after the last conclusion marker.

    When the marker sentence is interrogative the whole question is skipped
    (the word "toxique" inside the question is not an answer). With no
    marker present, strict mode gives up while lenient mode scans the
    whole text.
    """
    folded = fold_text(text)
    start = 0
    markers = list(_CONCLUSION_RE.finditer(folded))
    if markers:
        start = markers[-1].end()
    elif require_marker:
        return None
    match = _DECISION_RE.search(folded, start)
    if not match:
        return None
    return _decision_from_token(match.group(1))


# ---------------------------------------------------------------------------
# Annotation record


@dataclass(frozen=True)
class CoTAnnotation:
    """Structured multi-step reasoning output for one comment."""

    summary: str
    tones: list[tuple[str, int]]
    taxonomy: ToxicityVector
    implicit: list[ImplicitCategory]
    doubts: str
    score: int
    justification: str
    decision: LabelValue
    raw_steps: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 <= self.score <= 10:
            raise ValueError(f"score must be in [0, 10], got {self.score}")
        for name, pct in self.tones:
            if not 0 <= pct <= 100:
                raise ValueError(f"tone confidence out of [0, 100]: {name} ({pct})")
        if vector_violations(self.taxonomy):
            raise ValueError(f"invalid severity vector {self.taxonomy}")

    def to_json_dict(self) -> dict:
        return {
            "summary": self.summary,
            "tones": [[name, pct] for name, pct in self.tones],
            "taxonomy": list(self.taxonomy.components()),
            "implicit": [cat.value for cat in self.implicit],
            "doubts": self.doubts,
            "score": self.score,
            "justification": self.justification,
            "decision": self.decision.value,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CoTAnnotation":
        return cls(
            summary=data["summary"],
            tones=[(name, int(pct)) for name, pct in data.get("tones", [])],
            taxonomy=ToxicityVector.from_components(data["taxonomy"]),
            implicit=[ImplicitCategory(v) for v in data.get("implicit", [])],
            doubts=data.get("doubts", ""),
            score=int(data["score"]),
            justification=data.get("justification", ""),
            decision=LabelValue(data["decision"]),
        )


# ---------------------------------------------------------------------------
# Prompt chain


@dataclass(frozen=True)
class ChainStep:
    index: int  # 1-based
    name: str
    template: str

    def render(self, comment_text: str, prior_completions: list[str]) -> str:
        prior = "\n\n".join(prior_completions) if prior_completions else "(aucune)"
        return self.template.format(
            definition=toxicity_definition(),
            comment=comment_text,
            prior=prior,
        )


def build_cot_chain(comment: CommentRecord) -> list[ChainStep]:
    """The six ordered reasoning steps for one comment.

    Step k's prompt embeds the completions of steps 1..k-1 verbatim via
    :meth:`ChainStep.render`; step 1 renders with no prior completions.
    """
    steps = []
    for index, name in enumerate(STEP_NAMES, start=1):
        steps.append(ChainStep(index=index, name=name, template=_load_asset(_STEP_FILES[name])))
    return steps


class CoTParseError(ValueError):
    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(message or code)


@dataclass(frozen=True)
class ParsedCoT:
    """Fields recovered from free-form chain or model output."""

    score: int
    decision: LabelValue
    tones: list[tuple[str, int]]
    taxonomy: Optional[ToxicityVector] = None


def _section(text: str, marker: str) -> Optional[str]:
    """Original-text content of the line following ``marker`` (folded match)."""
    folded = fold_text(text)
    pos = folded.find(fold_text(marker))
    if pos < 0:
        return None
    start = pos + len(marker)
    end = text.find("\n", start)
    if end < 0:
        end = len(text)
    return text[start:end].strip(" :\t")


def parse_tones(text: str) -> list[tuple[str, int]]:
    section = _section(text, "tons identifies")
    haystack = section if section is not None else text
    tones = []
    for match in _TONE_RE.finditer(haystack):
        name = match.group(1).strip(" -:;.«»\"'")
        pct = int(match.group(2))
        if name and pct <= 100:
            tones.append((name, pct))
    return tones


def parse_severity(text: str) -> Optional[ToxicityVector]:
    match = _SEVERITY_RE.search(fold_text(text))
    if not match:
        return None
    vector = ToxicityVector.from_components(int(g) for g in match.groups())
    if vector_violations(vector):
        return None
    return vector


def parse_implicit(text: str) -> list[ImplicitCategory]:
    folded = fold_text(text)
    found = [cat for cat in ImplicitCategory if re.search(rf"\b{cat.value}\b", folded)]
    return found


def parse_cot_output(text: str) -> ParsedCoT:
    """Recover (score, decision, tones) from conclusion-bearing output.

    The score is the integer right before "/10", preferring the canonical
    "Score de toxicité" line when present; the decision is the first
    oui/non (or toxique/non-toxique) token after the conclusion sentence.
    Scanning is accent- and case-insensitive.
    """
    folded = fold_text(text)
    anchored = list(_SCORE_ANCHORED_RE.finditer(folded))
    if anchored:
        score_match = anchored[-1]
    else:
        score_match = _SCORE_RE.search(folded)
    if not score_match:
        raise CoTParseError("score_missing", "no <n>/10 toxicity score found")
    score = int(score_match.group(1))
    if score > 10:
        raise CoTParseError("score_out_of_range", f"score {score} exceeds 10")

    decision = find_decision(text, require_marker=True)
    if decision is None:
        raise CoTParseError("decision_missing", "no decision after the conclusion sentence")
    return ParsedCoT(
        score=score,
        decision=decision,
        tones=parse_tones(text),
        taxonomy=parse_severity(text),
    )


def format_annotation(annotation: CoTAnnotation) -> str:
    """Canonical training-text rendering of an annotation.

    Each reasoning section sits in its own think block; the binary answer
    follows the conclusion question as a bare oui/non token. This is the
    exact shape the fine-tuning data and the output parser agree on.
    """
    tones = ", ".join(f"{name} ({pct}%)" for name, pct in annotation.tones) or "Neutre (100%)"
    implicit = ", ".join(cat.value for cat in annotation.implicit) or "aucune"
    s, h, v, r, a, i = annotation.taxonomy.components()
    blocks = [
        f"Résumé : {annotation.summary}",
        f"Tons identifiés : {tones}",
        f"Axes de sévérité : S:{s} H:{h} V:{v} R:{r} A:{a} I:{i}",
        f"Catégories implicites : {implicit}",
        f"Doutes : {annotation.doubts or 'aucun'}",
        f"Score de toxicité : {annotation.score}/10\nJustification : {annotation.justification}",
    ]
    rendered = "\n\n".join(f"{THINK_OPEN}\n{body}\n{THINK_CLOSE}" for body in blocks)
    answer = "oui" if annotation.decision is LabelValue.TOXIC else "non"
    return f"{rendered}\n\n{CONCLUSION_QUESTION}\n\n{answer}\n"


# ---------------------------------------------------------------------------
# Auto-label rule


@dataclass(frozen=True)
class AutoLabeled:
    label: Label


@dataclass(frozen=True)
class NeedsHuman:
    reason: str


def auto_label(annotation: CoTAnnotation) -> AutoLabeled | NeedsHuman:
    """High-confidence routing rule.

    Auto-labels non-toxic iff the pre-annotator either decided non-toxic
    or scored the comment <= 3; everything else goes to the human queue.
    By construction this never emits an automatic toxic label.
    """
    if annotation.decision is LabelValue.NON_TOXIC or annotation.score <= AUTO_LABEL_MAX_SCORE:
        return AutoLabeled(Label(LabelValue.NON_TOXIC, Provenance.AUTO_RULE))
    return NeedsHuman(
        reason=f"decision={annotation.decision.value} score={annotation.score}"
    )


# ---------------------------------------------------------------------------
# Chain execution


def run_chain(comment: CommentRecord, client: ChatClient) -> CoTAnnotation:
    """Run the six steps against the client and assemble the annotation."""
    steps = build_cot_chain(comment)
    completions: list[str] = []
    raw_steps: list[tuple[str, str]] = []
    for step in steps:
        prompt = step.render(comment.text, completions)
        completion = client.complete(prompt, request_id=f"{comment.id}/step{step.index}")
        completions.append(completion)
        raw_steps.append((prompt, completion))

    summary = _section(completions[0], "resume") or completions[0].strip()
    tones = parse_tones(completions[1])
    taxonomy = parse_severity(completions[2])
    if taxonomy is None:
        raise CoTParseError("severity_missing", "step 3 did not yield six 0-3 axes")
    implicit = parse_implicit(completions[3])
    doubts = _section(completions[4], "doutes") or completions[4].strip()
    conclusion = parse_cot_output(completions[5])
    justification = _section(completions[5], "justification") or ""
    return CoTAnnotation(
        summary=summary,
        tones=tones,
        taxonomy=taxonomy,
        implicit=implicit,
        doubts=doubts,
        score=conclusion.score,
        justification=justification,
        decision=conclusion.decision,
        raw_steps=raw_steps,
    )


@dataclass
class RoutingSummary:
    total: int = 0
    auto_labeled: int = 0
    needs_human: int = 0
    failed: int = 0
    skipped: int = 0

    @property
    def auto_fraction(self) -> float:
        annotated = self.auto_labeled + self.needs_human
        return self.auto_labeled / annotated if annotated else 0.0

    @property
    def queue_fraction(self) -> float:
        annotated = self.auto_labeled + self.needs_human
        return self.needs_human / annotated if annotated else 0.0


@dataclass
class PreannotationRun:
    annotations: dict[str, CoTAnnotation]
    failures: dict[str, str]
    summary: RoutingSummary


def run_preannotation(
    batch: Iterable[CommentRecord],
    client: ChatClient,
    max_concurrency: int = 4,
    existing: Optional[dict[str, CoTAnnotation]] = None,
) -> PreannotationRun:
    """Annotate a batch with bounded concurrency; resumable and fail-soft.

    Comments whose ids appear in ``existing`` are skipped without any
    client call. A comment that still fails after the client's retries is
    recorded as a failure and the run continues.
    """
    existing = existing or {}
    comments = list(batch)
    summary = RoutingSummary(total=len(comments))
    annotations: dict[str, CoTAnnotation] = {}
    failures: dict[str, str] = {}

    todo = []
    for comment in comments:
        if comment.id in existing:
            annotations[comment.id] = existing[comment.id]
            summary.skipped += 1
        else:
            todo.append(comment)

    def work(comment: CommentRecord) -> tuple[str, CoTAnnotation | None, str | None]:
        try:
            return comment.id, run_chain(comment, client), None
        except (ChatClientError, ValueError) as exc:
            # CoTParseError is a ValueError; malformed step output and
            # exhausted transport retries both count as per-comment failures
            return comment.id, None, str(exc)

    if todo:
        with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
            for comment_id, annotation, error in pool.map(work, todo):
                if annotation is not None:
                    annotations[comment_id] = annotation
                else:
                    failures[comment_id] = error or "unknown error"

    for annotation in annotations.values():
        if isinstance(auto_label(annotation), AutoLabeled):
            summary.auto_labeled += 1
        else:
            summary.needs_human += 1
    summary.failed = len(failures)
    return PreannotationRun(annotations=annotations, failures=failures, summary=summary)


# ---------------------------------------------------------------------------
# Rule validation harness


@dataclass(frozen=True)
class RuleValidation:
    """Agreement of the auto-label rule with human labels on a sample."""

    rule_fired: int
    agreements: int
    rate: float
    interval: tuple[float, float]


def validate_rule(
    samples: list[tuple[CoTAnnotation, Label]], alpha: float = 0.05
) -> RuleValidation:
    """Recompute rule/human agreement with a Wilson interval.

    Considers only the samples where the rule fires (auto-labels); counts
    how often the human label is also non-toxic.
    """
    from .stats import BinomialSample, wilson_interval

    fired = 0
    agreements = 0
    for annotation, human in samples:
        routed = auto_label(annotation)
        if isinstance(routed, AutoLabeled):
            fired += 1
            if human.value is LabelValue.NON_TOXIC:
                agreements += 1
    if fired == 0:
        raise ValueError("rule never fired on the sample; agreement undefined")
    interval = wilson_interval(BinomialSample(agreements, fired, alpha))
    return RuleValidation(
        rule_fired=fired, agreements=agreements, rate=agreements / fired, interval=interval
    )
