"""Deterministic offline stand-in for the chat endpoint.

Lets the whole pipeline (pre-annotation, evaluation, translation) run
without network access or spend: completions are derived from keyword
heuristics over the comment text, rendered in the same structured formats
the real chain expects. Useful for fixtures, demos and smoke tests; not a
toxicity classifier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# crude lexical signal; drives the mock's score, tones and decision
TOXIC_MARKERS = (
    "idiot",
    "imbécile",
    "crève",
    "dégage",
    "haine",
    "ferme-la",
    "minable",
    "ordure",
    "débile",
    "pourri",
)

_COMMENT_RE = re.compile(r"«\s*(.*?)\s*»", re.DOTALL)


def _extract_comment(prompt: str) -> str:
    match = _COMMENT_RE.search(prompt)
    return match.group(1) if match else prompt


def toxicity_signal(text: str) -> int:
    """0-10 mock score: 2 + 3 per matched marker, capped at 10."""
    lowered = text.lower()
    hits = sum(1 for marker in TOXIC_MARKERS if marker in lowered)
    return min(10, 2 + 3 * hits) if hits else 1


@dataclass
class KeywordMockClient:
    """Scripted per-step chain completions from keyword lookups.

    The step index is taken from the request id suffix (``.../step<k>``),
    the comment from the quoted block of the prompt itself.
    """

    calls: list[str] = field(default_factory=list)

    def complete(self, prompt: str, request_id: str) -> str:
        self.calls.append(request_id)
        comment = _extract_comment(prompt)
        step = int(request_id.rsplit("step", 1)[1]) if "step" in request_id else 6
        score = toxicity_signal(comment)
        toxic = score > 3
        if step == 1:
            return f"Résumé : L'auteur écrit « {comment[:60]} » sur un forum."
        if step == 2:
            if toxic:
                return "Tons identifiés : Agressif (80%), Méprisant (60%)"
            return "Tons identifiés : Neutre (90%)"
        if step == 3:
            a = 2 if toxic else 0
            i = min(3, score // 3)
            return f"Axes de sévérité : S:0 H:0 V:0 R:0 A:{a} I:{i}"
        if step == 4:
            return "Catégories implicites : passive_mockery" if toxic else "Catégories implicites : aucune"
        if step == 5:
            return "Doutes : le second degré reste possible." if toxic else "Doutes : aucun."
        answer = "oui" if toxic else "non"
        justification = (
            "Le message contient des attaques directes."
            if toxic
            else "Le message reste factuel et sans hostilité."
        )
        return (
            f"Score de toxicité : {score}/10\n"
            f"Justification : {justification}\n\n"
            f"En conclusion, ce message est-il toxique ?\n\n{answer}\n"
        )


@dataclass
class EchoTranslationClient:
    """Mock translator: tags the text instead of translating it."""

    target_language: str = "fr"
    calls: list[str] = field(default_factory=list)

    def complete(self, prompt: str, request_id: str) -> str:
        self.calls.append(request_id)
        comment = _extract_comment(prompt)
        return f"[{self.target_language}] {comment}"
