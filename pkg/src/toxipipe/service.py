"""Annotation store, human verification queue, and train/bench split.

Persistence is a single append-only event log (one JSON object per line);
the in-memory index is rebuilt by replaying it at startup, which makes the
label history auditable and backup a file copy. Leases are deliberately
runtime-only state: a restart simply returns leased items to the pool.

All mutations go through one lock so many concurrent readers and several
annotators stay safe.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional

from .corpus import CommentRecord, RecordState
from .preannotate import AutoLabeled, CoTAnnotation, auto_label
from .taxonomy import (
    FourWayDecision,
    Label,
    LabelValue,
    Provenance,
    map_four_way_to_binary,
)

DEFAULT_LEASE_TIMEOUT = 15 * 60.0  # seconds; annotators take breaks


class NotFoundError(LookupError):
    pass


class AuthError(PermissionError):
    pass


class UnresolvedError(ValueError):
    pass


class SizingError(ValueError):
    pass


@dataclass
class QueueItem:
    """One comment waiting for (or holding) human decisions.

    ``validation`` marks items that already carry an auto label and were
    re-queued to measure rule/human agreement.
    """

    comment: CommentRecord
    annotation: CoTAnnotation
    priority: float
    assigned_to: Optional[str] = None
    decisions: list[tuple[str, FourWayDecision, float]] = field(default_factory=list)
    validation: bool = False

    @property
    def latest_by_annotator(self) -> dict[str, FourWayDecision]:
        latest: dict[str, FourWayDecision] = {}
        for annotator, decision, _ in self.decisions:
            latest[annotator] = decision
        return latest


def resolve_final_label(
    decisions: Iterable[FourWayDecision],
    tie_break: LabelValue = LabelValue.TOXIC,
) -> Label:
    """Collapse one item's human decisions to a final binary label.

    A single decision maps directly; multiple decisions take the majority
    of the grouped binary votes. Ties resolve to ``tie_break``, toxic by
    default (the recall-conservative moderation choice).
    """
    votes = [map_four_way_to_binary(d).value for d in decisions]
    if not votes:
        raise UnresolvedError("no decisions recorded for this item")
    toxic = sum(1 for v in votes if v is LabelValue.TOXIC)
    non_toxic = len(votes) - toxic
    if toxic > non_toxic:
        value = LabelValue.TOXIC
    elif non_toxic > toxic:
        value = LabelValue.NON_TOXIC
    else:
        value = tie_break
    return Label(value=value, provenance=Provenance.HUMAN)


class AnnotationStore:
    """Event-sourced store behind the queue API.

    ``clock`` is injectable so lease-expiry behavior is testable without
    real waiting; ``decisions_per_item`` sets the resolution policy (how
    many human decisions finalize an item).
    """

    def __init__(
        self,
        data_dir: Path | str,
        lease_timeout: float = DEFAULT_LEASE_TIMEOUT,
        decisions_per_item: int = 1,
        tie_break: LabelValue = LabelValue.TOXIC,
        clock: Callable[[], float] = time.time,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "events.jsonl"
        self.lease_timeout = lease_timeout
        self.decisions_per_item = decisions_per_item
        self.tie_break = tie_break
        self.clock = clock
        # reentrant: queue operations self-register annotators
        self._lock = threading.RLock()

        self.items: dict[str, QueueItem] = {}
        self.auto_labels: dict[str, Label] = {}
        self.annotators: set[str] = set()
        self._leases: dict[str, tuple[str, float]] = {}  # item id -> (annotator, expiry)

        if self.log_path.exists():
            with open(self.log_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line))

    # -- event machinery ----------------------------------------------------

    def _append(self, event: dict) -> None:
        self._apply(event)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "item_queued":
            comment = CommentRecord.from_json_dict(event["comment"])
            annotation = CoTAnnotation.from_json_dict(event["annotation"])
            self.items[comment.id] = QueueItem(
                comment=comment,
                annotation=annotation,
                priority=event["priority"],
                validation=event.get("validation", False),
            )
        elif kind == "auto_labeled":
            comment = CommentRecord.from_json_dict(event["comment"])
            self.auto_labels[comment.id] = Label(
                LabelValue(event["label"]), Provenance.AUTO_RULE
            )
        elif kind == "annotator_registered":
            self.annotators.add(event["annotator"])
        elif kind == "decision_submitted":
            item = self.items[event["item_id"]]
            item.decisions.append(
                (event["annotator"], FourWayDecision(event["decision"]), event["ts"])
            )
        else:
            raise ValueError(f"unknown event type {kind!r}")

    def snapshot(self) -> dict:
        """Replayable-state digest (leases excluded; they are ephemeral)."""
        return {
            "items": {
                item_id: {
                    "priority": item.priority,
                    "decisions": [(a, d.value, ts) for a, d, ts in item.decisions],
                }
                for item_id, item in sorted(self.items.items())
            },
            "auto_labels": {k: v.value.value for k, v in sorted(self.auto_labels.items())},
            "annotators": sorted(self.annotators),
        }

    # -- ingestion ----------------------------------------------------------

    def add_annotated(
        self, pairs: Iterable[tuple[CommentRecord, CoTAnnotation]]
    ) -> dict[str, int]:
        """Route (comment, annotation) pairs through the auto-label rule.

        Already-known ids are skipped, so re-running an ingest is a no-op.
        """
        counts = {"auto_labeled": 0, "queued": 0, "skipped": 0}
        with self._lock:
            for comment, annotation in pairs:
                if comment.id in self.items or comment.id in self.auto_labels:
                    counts["skipped"] += 1
                    continue
                routed = auto_label(annotation)
                if isinstance(routed, AutoLabeled):
                    labeled = replace(comment, state=RecordState.LABELED)
                    self._append(
                        {
                            "type": "auto_labeled",
                            "comment": labeled.to_json_dict(),
                            "label": routed.label.value.value,
                        }
                    )
                    counts["auto_labeled"] += 1
                else:
                    priority = comment.weak_signal if comment.weak_signal is not None else 0.5
                    queued = replace(comment, state=RecordState.QUEUED)
                    self._append(
                        {
                            "type": "item_queued",
                            "comment": queued.to_json_dict(),
                            "annotation": annotation.to_json_dict(),
                            "priority": priority,
                        }
                    )
                    counts["queued"] += 1
        return counts

    def queue_validation_sample(
        self,
        pairs: Iterable[tuple[CommentRecord, CoTAnnotation]],
        n: int,
        seed: int = 0,
    ) -> int:
        """Re-queue a seeded sample of auto-labeled comments for humans.

        This is how rule/human agreement becomes measurable: the regular
        queue only ever holds rule-negative comments, so a validation
        study needs rule-fired ones deliberately routed past the rule.
        Human decisions on these items supersede their auto labels.
        """
        with self._lock:
            candidates = {
                comment.id: (comment, annotation)
                for comment, annotation in pairs
                if comment.id in self.auto_labels and comment.id not in self.items
            }
            ids = sorted(candidates)
            rng = random.Random(seed)
            chosen = ids if len(ids) <= n else rng.sample(ids, n)
            for comment_id in chosen:
                comment, annotation = candidates[comment_id]
                queued = replace(comment, state=RecordState.QUEUED)
                self._append(
                    {
                        "type": "item_queued",
                        "comment": queued.to_json_dict(),
                        "annotation": annotation.to_json_dict(),
                        "priority": comment.weak_signal if comment.weak_signal is not None else 0.5,
                        "validation": True,
                    }
                )
            return len(chosen)

    # -- queue --------------------------------------------------------------

    def register_annotator(self, annotator: str) -> None:
        with self._lock:
            if annotator not in self.annotators:
                self._append({"type": "annotator_registered", "annotator": annotator})

    def _is_resolved(self, item: QueueItem) -> bool:
        return len(item.latest_by_annotator) >= self.decisions_per_item

    def _lease_active(self, item_id: str, now: float) -> Optional[str]:
        lease = self._leases.get(item_id)
        if lease is None:
            return None
        annotator, expiry = lease
        if expiry <= now:
            del self._leases[item_id]
            self.items[item_id].assigned_to = None
            return None
        return annotator

    def next_item(self, annotator: str) -> Optional[QueueItem]:
        """Lease the highest-priority open item this annotator hasn't labeled."""
        self.register_annotator(annotator)
        with self._lock:
            now = self.clock()
            candidates = []
            for item_id, item in self.items.items():
                if self._is_resolved(item):
                    continue
                if annotator in item.latest_by_annotator:
                    continue
                holder = self._lease_active(item_id, now)
                if holder is not None and holder != annotator:
                    continue
                candidates.append(item)
            if not candidates:
                return None
            best = max(candidates, key=lambda i: (i.priority, i.comment.id))
            self._leases[best.comment.id] = (annotator, now + self.lease_timeout)
            best.assigned_to = annotator
            return best

    def submit_label(
        self, item_id: str, annotator: str, decision: FourWayDecision
    ) -> tuple[str, FourWayDecision, float]:
        """Record one decision; latest submission per (item, annotator) wins."""
        with self._lock:
            if annotator not in self.annotators:
                raise AuthError(f"unknown annotator {annotator!r}")
            if item_id not in self.items:
                raise NotFoundError(f"unknown item {item_id!r}")
            now = self.clock()
            item = self.items[item_id]
            previous = item.latest_by_annotator.get(annotator)
            if previous is not decision:
                self._append(
                    {
                        "type": "decision_submitted",
                        "item_id": item_id,
                        "annotator": annotator,
                        "decision": decision.value,
                        "ts": now,
                    }
                )
            lease = self._leases.get(item_id)
            if lease and lease[0] == annotator:
                del self._leases[item_id]
                item.assigned_to = None
            return (annotator, decision, now)

    # -- labels and reporting -----------------------------------------------

    def final_label(self, item_id: str) -> Label:
        """Resolved human label when present; otherwise the auto label."""
        item = self.items.get(item_id)
        if item is not None and self._is_resolved(item):
            return resolve_final_label(item.latest_by_annotator.values(), self.tie_break)
        if item_id in self.auto_labels:
            return self.auto_labels[item_id]
        if item is None:
            raise NotFoundError(f"unknown item {item_id!r}")
        return resolve_final_label(item.latest_by_annotator.values(), self.tie_break)

    def final_labels(self) -> dict[str, Label]:
        """All finalized labels: auto-labeled plus fully-decided queue items."""
        labels = dict(self.auto_labels)
        for item_id, item in self.items.items():
            if self._is_resolved(item):
                labels[item_id] = resolve_final_label(item.latest_by_annotator.values(), self.tie_break)
        return labels

    def progress(self) -> dict:
        queued = sum(1 for item in self.items.values() if not self._is_resolved(item))
        resolved = len(self.items) - queued
        return {
            "total": len(self.items) + len(self.auto_labels),
            "auto_labeled": len(self.auto_labels),
            "in_queue": queued,
            "human_resolved": resolved,
            "decisions": sum(len(i.decisions) for i in self.items.values()),
            "annotators": sorted(self.annotators),
        }

    def agreement_pairs(
        self, annotator_a: str, annotator_b: str
    ) -> list[tuple[FourWayDecision, Label]]:
        """(a's four-way decision, b's grouped label) on jointly-labeled items."""
        pairs = []
        for item in self.items.values():
            latest = item.latest_by_annotator
            if annotator_a in latest and annotator_b in latest:
                reference = map_four_way_to_binary(latest[annotator_b])
                pairs.append((latest[annotator_a], reference))
        return pairs


# ---------------------------------------------------------------------------
# Train/bench split


@dataclass(frozen=True)
class SplitManifest:
    """Disjoint train/bench id sets with class bookkeeping."""

    train_ids: tuple[str, ...]
    bench_ids: tuple[str, ...]
    train_toxic_fraction: float
    bench_class_counts: tuple[int, int]  # (toxic, non_toxic)
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "train_ids": list(self.train_ids),
            "bench_ids": list(self.bench_ids),
            "train_toxic_fraction": self.train_toxic_fraction,
            "bench_class_counts": list(self.bench_class_counts),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SplitManifest":
        return cls(
            train_ids=tuple(data["train_ids"]),
            bench_ids=tuple(data["bench_ids"]),
            train_toxic_fraction=data["train_toxic_fraction"],
            bench_class_counts=tuple(data["bench_class_counts"]),
            seed=data["seed"],
        )


def split_dataset(
    labels: dict[str, Label], bench_per_class: int, seed: int
) -> SplitManifest:
    """Seeded split: a class-balanced bench set, the imbalanced rest as train.

    Bench items are sampled uniformly per class; ids are sorted before
    sampling so the manifest is a pure function of (labels, seed).
    """
    by_class: dict[LabelValue, list[str]] = {LabelValue.TOXIC: [], LabelValue.NON_TOXIC: []}
    for item_id, label in labels.items():
        by_class[label.value].append(item_id)
    for value, ids in by_class.items():
        if len(ids) < bench_per_class:
            raise SizingError(
                f"need {bench_per_class} {value.value} items for the bench set, "
                f"have {len(ids)}"
            )

    rng = random.Random(seed)
    bench: list[str] = []
    for value in (LabelValue.TOXIC, LabelValue.NON_TOXIC):
        bench.extend(rng.sample(sorted(by_class[value]), bench_per_class))
    bench_set = set(bench)
    train = [item_id for item_id in sorted(labels) if item_id not in bench_set]
    train_toxic = sum(1 for item_id in train if labels[item_id].value is LabelValue.TOXIC)
    return SplitManifest(
        train_ids=tuple(train),
        bench_ids=tuple(sorted(bench)),
        train_toxic_fraction=train_toxic / len(train) if train else 0.0,
        bench_class_counts=(bench_per_class, bench_per_class),
        seed=seed,
    )
