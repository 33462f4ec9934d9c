"""Benchmark evaluation: ICL prompts, adapters, cached runs, reports.

Any model usable for the task hides behind :class:`ModelAdapter` (a local
checkpoint, a chat endpoint, or a score-based moderation endpoint). The
runner invokes every benchmark item once, caching raw outputs keyed by
(adapter, prompt config, item id), so reruns are free and two identical
runs produce byte-identical result files.

Invalid model outputs count as non-toxic predictions by default (the
recall-conservative choice for the toxic class); the invalid rate is
always reported separately and the policy is configurable.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from .chatclient import ChatClient
from .preannotate import _load_asset, find_decision, prompt_bundle_hash, toxicity_definition
from .stats import ClassReport, classification_report, render_class_report
from .taxonomy import Label, LabelValue, Provenance


class PromptMode(str, Enum):
    ZERO_SIMPLE = "zero_simple"
    ZERO_DETAILED = "zero_detailed"
    ONE_SHOT_TOXIC = "one_shot_toxic"
    ONE_SHOT_NON_TOXIC = "one_shot_non_toxic"
    FEW_SHOT = "few_shot"


class PromptConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PromptConfig:
    mode: PromptMode = PromptMode.ZERO_DETAILED
    k: int = 4  # few_shot exemplar count, class-balanced
    exemplar_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode is PromptMode.FEW_SHOT and (self.k < 2 or self.k % 2):
            raise PromptConfigError(f"few_shot k must be even and >= 2, got {self.k}")

    @property
    def cache_key(self) -> str:
        return f"{self.mode.value}:k{self.k}:s{self.exemplar_seed}:p{prompt_bundle_hash()}"


@dataclass(frozen=True)
class BenchItem:
    id: str
    text: str
    gold: LabelValue
    lang: str = "fr"


def _answer_word(value: LabelValue) -> str:
    return "oui" if value is LabelValue.TOXIC else "non"


def _exemplar_block(text: str, value: LabelValue) -> str:
    return f"Message :\n« {text} »\nRéponse : {_answer_word(value)}"


def build_icl_prompt(
    config: PromptConfig,
    comment_text: str,
    exemplar_pool: Sequence[tuple[str, LabelValue]] = (),
) -> str:
    """Render the evaluation prompt for one comment.

    Exemplars must come from the training split only, never the bench set;
    selection is seeded and few-shot exemplars interleave the two classes.
    """
    if config.mode is PromptMode.ZERO_SIMPLE:
        return _load_asset("icl_zero_simple.txt").format(comment=comment_text)
    if config.mode is PromptMode.ZERO_DETAILED:
        return _load_asset("icl_zero_detailed.txt").format(
            definition=toxicity_definition(), comment=comment_text
        )

    by_class = {LabelValue.TOXIC: [], LabelValue.NON_TOXIC: []}
    for text, value in exemplar_pool:
        by_class[value].append(text)
    rng = random.Random(config.exemplar_seed)

    if config.mode in (PromptMode.ONE_SHOT_TOXIC, PromptMode.ONE_SHOT_NON_TOXIC):
        wanted = (
            LabelValue.TOXIC
            if config.mode is PromptMode.ONE_SHOT_TOXIC
            else LabelValue.NON_TOXIC
        )
        if not by_class[wanted]:
            raise PromptConfigError(f"exemplar pool has no {wanted.value} example")
        exemplars = [(rng.choice(sorted(by_class[wanted])), wanted)]
    else:
        per_class = config.k // 2
        for value, texts in by_class.items():
            if len(texts) < per_class:
                raise PromptConfigError(
                    f"exemplar pool has {len(texts)} {value.value} examples, need {per_class}"
                )
        toxic = rng.sample(sorted(by_class[LabelValue.TOXIC]), per_class)
        non_toxic = rng.sample(sorted(by_class[LabelValue.NON_TOXIC]), per_class)
        exemplars = []
        for t, n in zip(toxic, non_toxic):  # interleaved by class
            exemplars.append((t, LabelValue.TOXIC))
            exemplars.append((n, LabelValue.NON_TOXIC))

    blocks = [
        "Tu es un modérateur de forum francophone chargé de détecter les messages toxiques.",
        "Définition de la toxicité :\n" + toxicity_definition(),
        "Voici des exemples annotés :",
    ]
    blocks.extend(_exemplar_block(text, value) for text, value in exemplars)
    blocks.append(
        f"Message :\n« {comment_text} »\nRéponds par un seul mot : oui ou non.\nRéponse :"
    )
    return "\n\n".join(blocks)


def parse_decision(raw: str) -> Optional[LabelValue]:
    """Decision in arbitrary model output; None when unresolvable.

    Scans after the last conclusion marker when one is present, otherwise
    the whole text, accent- and case-insensitive.
    """
    if not raw:
        return None
    return find_decision(raw, require_marker=False)


# ---------------------------------------------------------------------------
# Adapters


class ModelAdapter(Protocol):
    """Stateless text-in/text-out model surface."""

    name: str
    kind: str  # local_checkpoint | chat_endpoint | moderation_endpoint

    def invoke(self, prompt: str) -> str: ...


_LAST_QUOTED_RE = re.compile(r"«\s*(.*?)\s*»", re.DOTALL)


def target_comment_of(prompt: str) -> str:
    """The comment under evaluation: the last quoted block of the prompt."""
    blocks = _LAST_QUOTED_RE.findall(prompt)
    return blocks[-1] if blocks else prompt


@dataclass
class OracleAdapter:
    """Answers from a text -> gold lookup; the identity baseline for tests."""

    answers: dict[str, LabelValue]
    name: str = "oracle"
    kind: str = "local_checkpoint"

    def invoke(self, prompt: str) -> str:
        value = self.answers.get(target_comment_of(prompt))
        return _answer_word(value) if value is not None else ""


@dataclass
class ConstantAdapter:
    """Always the same answer; forces the 0.5-accuracy balanced baseline."""

    answer: str = "oui"
    name: str = "constant"
    kind: str = "local_checkpoint"

    def invoke(self, prompt: str) -> str:
        return self.answer


@dataclass
class ChatAdapter:
    """Evaluates through a chat-completion endpoint."""

    client: ChatClient
    name: str = "chat"
    kind: str = "chat_endpoint"

    def invoke(self, prompt: str) -> str:
        request_id = "eval/" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
        return self.client.complete(prompt, request_id)


@dataclass
class CheckpointAdapter:
    """Scores a local fine-tuned checkpoint, teacher-forced on oui/non."""

    backend: object  # TinyBackend
    name: str = "checkpoint"
    kind: str = "local_checkpoint"

    def invoke(self, prompt: str) -> str:
        encoded = self.backend.encode_pair(prompt, "non", binary=True)
        return self.backend.predict_answer(encoded)


@dataclass
class ModerationAdapter:
    """Maps a provider toxicity score to a binary answer via a threshold."""

    score_fn: Callable[[str], float]
    threshold: float = 0.5
    name: str = "moderation"
    kind: str = "moderation_endpoint"

    def invoke(self, prompt: str) -> str:
        score = self.score_fn(prompt)
        return f"{_answer_word(LabelValue.TOXIC if score >= self.threshold else LabelValue.NON_TOXIC)} (score={score:.4f})"

    def confidence_of(self, raw: str) -> Optional[float]:
        if "(score=" not in raw:
            return None
        try:
            score = float(raw.split("(score=")[1].rstrip(")"))
        except ValueError:
            return None
        return abs(score - self.threshold)


# ---------------------------------------------------------------------------
# Benchmark runner


@dataclass(frozen=True)
class ItemResult:
    id: str
    gold: LabelValue
    predicted: LabelValue
    raw: str
    valid: bool
    confidence: Optional[float] = None


@dataclass
class EvalResult:
    adapter_name: str
    prompt_key: str
    items: list[ItemResult]
    report: ClassReport
    invalid_rate: float
    new_invocations: int


class EvalCache:
    """Raw-output cache, one JSON line per (adapter, config, item)."""

    def __init__(self, path: Optional[Path]):
        self.path = path
        self._data: dict[str, str] = {}
        if path is not None and path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        entry = json.loads(line)
                        self._data[entry["key"]] = entry["raw"]

    def get(self, key: str) -> Optional[str]:
        return self._data.get(key)

    def put(self, key: str, raw: str) -> None:
        self._data[key] = raw
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "raw": raw}, ensure_ascii=False) + "\n")


def run_benchmark(
    adapter: ModelAdapter,
    benchmark: Sequence[BenchItem],
    config: PromptConfig = PromptConfig(),
    exemplar_pool: Sequence[tuple[str, LabelValue]] = (),
    cache_path: Optional[Path] = None,
    invalid_policy: LabelValue = LabelValue.NON_TOXIC,
    max_concurrency: int = 4,
) -> EvalResult:
    """Invoke the adapter once per item (cache hits skip the call).

    Adapter exceptions and unparseable outputs mark the item invalid; the
    run always completes and invalid items are scored per
    ``invalid_policy``.
    """
    if not benchmark:
        raise ValueError("benchmark is empty")
    cache = EvalCache(cache_path)
    prompts = {
        item.id: build_icl_prompt(config, item.text, exemplar_pool) for item in benchmark
    }

    def key_for(item: BenchItem) -> str:
        return f"{adapter.name}|{config.cache_key}|{item.id}"

    todo = [item for item in benchmark if cache.get(key_for(item)) is None]

    def invoke(item: BenchItem) -> tuple[str, str]:
        try:
            return item.id, adapter.invoke(prompts[item.id])
        except Exception as exc:
            return item.id, f"<adapter-error: {exc}>"

    if todo:
        with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
            fresh = dict(pool.map(invoke, todo))
        for item in todo:  # single writer appends in benchmark order
            cache.put(key_for(item), fresh[item.id])

    items: list[ItemResult] = []
    for item in benchmark:
        raw = cache.get(key_for(item))
        decision = parse_decision(raw) if not raw.startswith("<adapter-error:") else None
        valid = decision is not None
        predicted = decision if valid else invalid_policy
        confidence = None
        confidence_of = getattr(adapter, "confidence_of", None)
        if confidence_of is not None:
            confidence = confidence_of(raw)
        items.append(
            ItemResult(
                id=item.id, gold=item.gold, predicted=predicted, raw=raw,
                valid=valid, confidence=confidence,
            )
        )

    preds = [Label(r.predicted, Provenance.HUMAN) for r in items]
    golds = [Label(r.gold, Provenance.HUMAN) for r in items]
    report = classification_report(preds, golds)
    invalid_rate = sum(1 for r in items if not r.valid) / len(items)
    return EvalResult(
        adapter_name=adapter.name,
        prompt_key=config.cache_key,
        items=items,
        report=report,
        invalid_rate=invalid_rate,
        new_invocations=len(todo),
    )


def eval_result_dict(result: EvalResult) -> dict:
    """Deterministic machine-readable form (no timestamps, sorted items)."""
    from .stats import class_report_dict

    return {
        "adapter": result.adapter_name,
        "prompt": result.prompt_key,
        "invalid_rate": result.invalid_rate,
        "report": class_report_dict(result.report),
        "items": [
            {
                "id": r.id,
                "gold": r.gold.value,
                "predicted": r.predicted.value,
                "valid": r.valid,
                "raw": r.raw,
                "confidence": r.confidence,
            }
            for r in sorted(result.items, key=lambda r: r.id)
        ],
    }


def write_eval_report(result: EvalResult, out_dir: Path | str) -> tuple[Path, Path]:
    """Emit result.json (machine) and report.txt (aligned, zeros stripped)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "result.json"
    json_path.write_text(
        json.dumps(eval_result_dict(result), ensure_ascii=False, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    text_path = out_dir / "report.txt"
    lines = [
        f"adapter: {result.adapter_name}",
        f"prompt:  {result.prompt_key}",
        f"invalid rate: {result.invalid_rate:.4f}",
        "",
        render_class_report(result.report),
        "",
    ]
    text_path.write_text("\n".join(lines), encoding="utf-8")
    return json_path, text_path


# ---------------------------------------------------------------------------
# Cross-lingual subset translation


@dataclass(frozen=True)
class TranslatedItem:
    id: str
    source_text: str
    text: str
    gold: LabelValue
    direction: str
    passthrough: bool = False


TRANSLATE_PROMPT = (
    "Traduis le message suivant en {language} courant et naturel, sans commentaire, "
    "en conservant le ton d'origine.\n\nMessage :\n« {text} »\n\nTraduction :"
)


def translate_subset(
    items: Sequence[BenchItem],
    client: ChatClient,
    target_language: str = "fr",
) -> tuple[list[TranslatedItem], list[str]]:
    """Translate a labeled subset, carrying ids and labels unchanged.

    Items already in the target language pass through flagged; failed
    translations are excluded and reported in the warnings list.
    """
    translated: list[TranslatedItem] = []
    warnings: list[str] = []
    for item in items:
        if item.lang == target_language:
            translated.append(
                TranslatedItem(
                    id=item.id, source_text=item.text, text=item.text,
                    gold=item.gold, direction=f"{item.lang}2{target_language}",
                    passthrough=True,
                )
            )
            continue
        prompt = TRANSLATE_PROMPT.format(language=target_language, text=item.text)
        try:
            text = client.complete(prompt, request_id=f"xlingual/{item.id}").strip()
        except Exception as exc:
            warnings.append(f"{item.id}: translation failed ({exc}); excluded")
            continue
        if not text:
            warnings.append(f"{item.id}: empty translation; excluded")
            continue
        translated.append(
            TranslatedItem(
                id=item.id, source_text=item.text, text=text, gold=item.gold,
                direction=f"{item.lang}2{target_language}",
            )
        )
    return translated, warnings


# ---------------------------------------------------------------------------
# Misclassification listings


@dataclass
class MisclassificationReport:
    false_positives: list[ItemResult]  # non-toxic classified toxic
    false_negatives: list[ItemResult]  # toxic classified non-toxic


def misclassification_report(result: EvalResult, k: int = 3) -> MisclassificationReport:
    """Top-k errors per type, ranked by adapter confidence when available."""

    def rank(items: list[ItemResult]) -> list[ItemResult]:
        if any(r.confidence is not None for r in items):
            items = sorted(items, key=lambda r: -(r.confidence or 0.0))
        return items[:k]

    fps = [r for r in result.items
           if r.gold is LabelValue.NON_TOXIC and r.predicted is LabelValue.TOXIC]
    fns = [r for r in result.items
           if r.gold is LabelValue.TOXIC and r.predicted is LabelValue.NON_TOXIC]
    return MisclassificationReport(false_positives=rank(fps), false_negatives=rank(fns))


def render_misclassifications(
    report: MisclassificationReport, texts: Optional[dict[str, str]] = None
) -> str:
    texts = texts or {}
    lines = ["Non-toxic classified toxic:"]
    for r in report.false_positives:
        lines.append(f"  {r.id}" + (f"  {texts[r.id]}" if r.id in texts else ""))
    lines.append("Toxic classified non-toxic:")
    for r in report.false_negatives:
        lines.append(f"  {r.id}" + (f"  {texts[r.id]}" if r.id in texts else ""))
    return "\n".join(lines)
