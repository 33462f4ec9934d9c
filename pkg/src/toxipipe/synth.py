"""Deterministic synthetic corpora for fixtures, demos and desk-scale runs.

Generates French-flavored toy comments whose toxicity is carried by
marker words (the same lexicon the mock chat client keys on), plus
matching structured annotations. Everything is a pure function of the
seed, so fixtures are reproducible across machines.
"""

from __future__ import annotations

import random
from datetime import datetime, timezone

from .corpus import RawRecord
from .mockllm import TOXIC_MARKERS, toxicity_signal
from .preannotate import CoTAnnotation
from .taxonomy import ImplicitCategory, Label, LabelValue, Provenance, ToxicityVector

NEUTRAL_WORDS = (
    "je", "pense", "que", "le", "match", "était", "vraiment", "samedi",
    "super", "bon", "jeu", "merci", "pour", "ton", "avis", "sur", "cette",
    "question", "intéressante", "on", "verra", "bien", "la", "suite", "du",
    "tournoi", "demain", "soir", "avec", "les", "copains", "d'accord",
    "franchement", "ce", "film", "m'a", "plu", "beaucoup", "bravo", "l'équipe",
)


def synthetic_comment_text(rng: random.Random, toxic: bool) -> str:
    """5-14 word comment; toxic ones carry one or two marker words."""
    length = rng.randint(5, 14)
    words = [rng.choice(NEUTRAL_WORDS) for _ in range(length)]
    if toxic:
        for _ in range(rng.randint(1, 2)):
            words[rng.randrange(len(words))] = rng.choice(TOXIC_MARKERS)
    return " ".join(words)


def synthetic_raw_records(n: int, toxic_fraction: float = 0.2, seed: int = 0) -> list[RawRecord]:
    """Forum-dump-shaped records spread over 2011-2025."""
    rng = random.Random(seed)
    records = []
    n_toxic = round(n * toxic_fraction)
    for i in range(n):
        toxic = i < n_toxic
        year = rng.randint(2011, 2025)
        records.append(
            RawRecord(
                source_id=f"post-{seed}-{i}",
                author=f"user{rng.randint(1, 500)}",
                text=synthetic_comment_text(rng, toxic),
                timestamp=datetime(year, rng.randint(1, 12), rng.randint(1, 28),
                                   tzinfo=timezone.utc),
                forum="forum-fixture",
                meta={"flagged": toxic and rng.random() < 0.7},
            )
        )
    rng.shuffle(records)
    return records


def synthetic_annotation(text: str) -> CoTAnnotation:
    """Structured annotation derived from the marker lexicon, chain-free."""
    score = toxicity_signal(text)
    toxic = score > 3
    head = " ".join(text.split()[:6])
    if toxic:
        tones = [("Agressif", 80), ("Méprisant", 60)]
        implicit = [ImplicitCategory.PASSIVE_MOCKERY]
        doubts = "le second degré reste possible."
        justification = "Le message contient des attaques directes."
    else:
        tones = [("Neutre", 90)]
        implicit = []
        doubts = "aucun"
        justification = "Le message reste factuel et sans hostilité."
    return CoTAnnotation(
        summary=f"L'auteur écrit « {head} » sur un forum.",
        tones=tones,
        taxonomy=ToxicityVector(0, 0, 0, 0, 2 if toxic else 0, min(3, score // 3)),
        implicit=implicit,
        doubts=doubts,
        score=score,
        justification=justification,
        decision=LabelValue.TOXIC if toxic else LabelValue.NON_TOXIC,
    )


def synthetic_label(text: str) -> Label:
    value = LabelValue.TOXIC if toxicity_signal(text) > 3 else LabelValue.NON_TOXIC
    return Label(value, Provenance.HUMAN)
