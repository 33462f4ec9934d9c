"""Corpus ingestion: anonymization, PII scrubbing, filtering, statistics.

Takes raw forum-dump records and produces the anonymized, length-filtered
comment corpus. Original author/source identifiers never survive past this
module: downstream stages only ever see the salted-hash anonymous id.

Records travel as line-delimited JSON, one object per line.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Iterable, Optional

ANON_ID_PATTERN = re.compile(r"^anon_msg_[0-9a-f]{12}$")

DEFAULT_MIN_WORDS = 5
DEFAULT_MAX_WORDS = 25


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Record types


@dataclass(frozen=True)
class RawRecord:
    """One message as it appears in a forum dump, identifiers intact."""

    source_id: str
    author: str
    text: str
    timestamp: datetime
    forum: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("raw record text must be non-empty")


class RecordState(str, Enum):
    RAW = "raw"
    PREANNOTATED = "preannotated"
    QUEUED = "queued"
    LABELED = "labeled"


@dataclass(frozen=True)
class CommentRecord:
    """One anonymized, scrubbed comment with lifecycle state.

    ``weak_signal`` is an optional [0, 1] priority used to order the human
    annotation queue; it comes from a pluggable scorer over ingestion
    metadata, not from the comment text.
    """

    id: str
    text: str
    timestamp: Optional[datetime]
    word_count: int
    weak_signal: Optional[float] = None
    state: RecordState = RecordState.RAW

    def __post_init__(self) -> None:
        if not ANON_ID_PATTERN.match(self.id):
            raise ValueError(f"malformed anonymous id: {self.id!r}")
        if self.weak_signal is not None and not 0.0 <= self.weak_signal <= 1.0:
            raise ValueError(f"weak_signal must be in [0, 1], got {self.weak_signal}")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "timestamp": self.timestamp.isoformat() if self.timestamp else None,
            "word_count": self.word_count,
            "weak_signal": self.weak_signal,
            "state": self.state.value,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CommentRecord":
        ts = data.get("timestamp")
        return cls(
            id=data["id"],
            text=data["text"],
            timestamp=datetime.fromisoformat(ts) if ts else None,
            word_count=data["word_count"],
            weak_signal=data.get("weak_signal"),
            state=RecordState(data.get("state", "raw")),
        )


def parse_raw_line(line: str) -> RawRecord:
    """Parse one JSONL line into a RawRecord; unknown fields land in meta."""
    data = json.loads(line)
    known = {"source_id", "author", "text", "timestamp", "forum"}
    ts = data["timestamp"]
    timestamp = datetime.fromisoformat(ts) if isinstance(ts, str) else ts
    if timestamp.tzinfo is None:
        timestamp = timestamp.replace(tzinfo=timezone.utc)
    return RawRecord(
        source_id=str(data["source_id"]),
        author=data.get("author", ""),
        text=data["text"],
        timestamp=timestamp,
        forum=data.get("forum", ""),
        meta={k: v for k, v in data.items() if k not in known},
    )


# ---------------------------------------------------------------------------
# PII scrubbing

_URL_RE = re.compile(r"(?:https?://|www\.)[^\s<>\"']+")
_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}")
# candidate tokens validated through ipaddress before replacement
_IPV6_RE = re.compile(r"(?<![\w:.])(?=[0-9A-Fa-f:.]*:[0-9A-Fa-f:.]*:)[0-9A-Fa-f:.]{3,45}(?![\w:])")
_IPV4_RE = re.compile(r"(?<!\d)(?:\d{1,3}\.){3}\d{1,3}(?!\d)")
# French national numbers (0X XX XX XX XX with ., -, space or no separator)
_PHONE_FR_RE = re.compile(r"(?<!\d)0\d(?:[\s.\-]?\d{2}){4}(?!\d)")
# international +CC numbers; digit count checked in the callback
_PHONE_INTL_RE = re.compile(r"\+\d[\d\s.\-()]{5,18}\d(?!\d)")
_MENTION_RE = re.compile(r"@\w+")

PLACEHOLDERS = {
    "email": "<email>",
    "ip": "<ip>",
    "phone": "<phone>",
    "url": "<url>",
    "user": "<user>",
}


def _valid_ip(candidate: str, version: int) -> bool:
    try:
        return ipaddress.ip_address(candidate).version == version
    except ValueError:
        return False


def scrub_pii(text: str) -> tuple[str, dict[str, int]]:
    """Replace PII spans with fixed placeholders; total and idempotent.

    Handles URLs, email addresses, IPv4/IPv6 addresses, phone numbers
    (French national and international formats), and @-mentions. Returns
    the scrubbed text plus replacement counts by category. Placeholders
    are angle-bracket tokens, which no pattern can re-match, so
    ``scrub_pii(scrub_pii(t)[0])`` is a fixed point.
    """
    counts: Counter = Counter()
    current = text

    def sub(pattern: re.Pattern, category: str, check=None) -> None:
        nonlocal current

        def repl(match: re.Match) -> str:
            if check is not None and not check(match.group(0)):
                return match.group(0)
            counts[category] += 1
            return PLACEHOLDERS[category]

        current = pattern.sub(repl, current)

    sub(_URL_RE, "url")
    sub(_EMAIL_RE, "email")
    sub(_IPV6_RE, "ip", check=lambda c: _valid_ip(c, 6))
    sub(_IPV4_RE, "ip", check=lambda c: _valid_ip(c, 4))
    sub(_PHONE_FR_RE, "phone")
    sub(_PHONE_INTL_RE, "phone", check=lambda c: 8 <= sum(ch.isdigit() for ch in c) <= 15)
    sub(_MENTION_RE, "user")
    return current, dict(counts)


def contains_pii(text: str) -> bool:
    """Re-scan helper used by tests and audits: does any pattern still hit?"""
    if _URL_RE.search(text) or _EMAIL_RE.search(text) or _MENTION_RE.search(text):
        return True
    if any(_valid_ip(m.group(0), 6) for m in _IPV6_RE.finditer(text)):
        return True
    if any(_valid_ip(m.group(0), 4) for m in _IPV4_RE.finditer(text)):
        return True
    if _PHONE_FR_RE.search(text):
        return True
    return any(
        8 <= sum(ch.isdigit() for ch in m.group(0)) <= 15
        for m in _PHONE_INTL_RE.finditer(text)
    )


# ---------------------------------------------------------------------------
# Length filter


@dataclass(frozen=True)
class LengthVerdict:
    keep: bool
    word_count: int
    reason: Optional[str] = None  # "too_short" | "too_long" when dropped


def filter_length(
    text: str, min_words: int = DEFAULT_MIN_WORDS, max_words: int = DEFAULT_MAX_WORDS
) -> LengthVerdict:
    """Keep iff the whitespace-token count is within [min_words, max_words].

    A word is a maximal whitespace-separated token, so placeholders like
    ``<email>`` count as one word each.
    """
    count = len(text.split())
    if count < min_words:
        return LengthVerdict(keep=False, word_count=count, reason="too_short")
    if count > max_words:
        return LengthVerdict(keep=False, word_count=count, reason="too_long")
    return LengthVerdict(keep=True, word_count=count)


# ---------------------------------------------------------------------------
# Anonymous ids


def assign_anonymous_id(raw: RawRecord, salt: bytes) -> str:
    """Salted keyed hash of the source id: ``anon_msg_`` + 12 hex chars.

    Deterministic per (salt, source_id) so re-ingestion is stable, but
    unlinkable to the original id without the salt.
    """
    if not salt:
        raise ConfigurationError("anonymization salt must be non-empty")
    digest = hashlib.blake2b(raw.source_id.encode("utf-8"), key=salt, digest_size=16)
    return "anon_msg_" + digest.hexdigest()[:12]


# ---------------------------------------------------------------------------
# Corpus statistics and dedup


def temporal_histogram(
    records: Iterable[CommentRecord], bucket: str = "year"
) -> list[tuple[object, int]]:
    """Comment counts per time bucket, sorted ascending; sums to corpus size.

    ``bucket`` is "year" (integer keys) or "month" ("YYYY-MM" keys).
    Records without a timestamp land in a trailing "unknown" bucket.
    """
    if bucket not in ("year", "month"):
        raise ValueError(f"bucket must be 'year' or 'month', got {bucket!r}")
    counts: Counter = Counter()
    unknown = 0
    for record in records:
        if record.timestamp is None:
            unknown += 1
        elif bucket == "year":
            counts[record.timestamp.year] += 1
        else:
            counts[f"{record.timestamp.year:04d}-{record.timestamp.month:02d}"] += 1
    out: list[tuple[object, int]] = [(key, counts[key]) for key in sorted(counts)]
    if unknown:
        out.append(("unknown", unknown))
    return out


def dedupe_exact(records: list[RawRecord]) -> list[RawRecord]:
    """Drop exact text duplicates, keeping the earliest-timestamp copy."""
    best: dict[str, RawRecord] = {}
    for record in records:
        current = best.get(record.text)
        if current is None or record.timestamp < current.timestamp:
            best[record.text] = record
    # preserve input order of the survivors
    survivors = set(id(r) for r in best.values())
    return [r for r in records if id(r) in survivors]


# ---------------------------------------------------------------------------
# Pipeline

WeakSignalScorer = Callable[[RawRecord], float]


def default_weak_signal(raw: RawRecord) -> float:
    """Neutral priority; platform-specific scorers plug in per deployment."""
    return 0.5


@dataclass
class IngestStats:
    ingested: int = 0
    after_dedupe: int = 0
    kept: int = 0
    dropped_short: int = 0
    dropped_long: int = 0
    redactions: dict[str, int] = field(default_factory=dict)


def ingest_records(
    raws: Iterable[RawRecord],
    salt: bytes,
    min_words: int = DEFAULT_MIN_WORDS,
    max_words: int = DEFAULT_MAX_WORDS,
    weak_signal: WeakSignalScorer = default_weak_signal,
) -> tuple[list[CommentRecord], IngestStats]:
    """Full ingest pass: scrub -> dedupe -> length filter -> anonymize.

    Output is stably sorted on (timestamp, id) so concurrent or re-ordered
    ingestion produces identical corpora.
    """
    stats = IngestStats()
    scrubbed: list[RawRecord] = []
    redactions: Counter = Counter()
    for raw in raws:
        stats.ingested += 1
        clean, report = scrub_pii(raw.text)
        redactions.update(report)
        scrubbed.append(replace(raw, text=clean))

    deduped = dedupe_exact(scrubbed)
    stats.after_dedupe = len(deduped)

    records: list[CommentRecord] = []
    for raw in deduped:
        verdict = filter_length(raw.text, min_words, max_words)
        if not verdict.keep:
            if verdict.reason == "too_short":
                stats.dropped_short += 1
            else:
                stats.dropped_long += 1
            continue
        signal = weak_signal(raw)
        records.append(
            CommentRecord(
                id=assign_anonymous_id(raw, salt),
                text=raw.text,
                timestamp=raw.timestamp,
                word_count=verdict.word_count,
                weak_signal=min(1.0, max(0.0, signal)),
                state=RecordState.RAW,
            )
        )
    stats.kept = len(records)
    stats.redactions = dict(redactions)
    records.sort(key=lambda r: (r.timestamp.isoformat() if r.timestamp else "", r.id))
    return records, stats


def read_comment_records(path) -> list[CommentRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(CommentRecord.from_json_dict(json.loads(line)))
    return records


def write_comment_records(path, records: Iterable[CommentRecord]) -> None:
    from pathlib import Path

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")
