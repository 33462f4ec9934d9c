"""HTTP surface of the annotation queue, consumed by the review UI.

Endpoints:
  GET  /api/queue/next?annotator=ID   lease the next uncertain comment
  POST /api/labels                    {item_id, annotator_id, decision}
  GET  /api/items/{id}                full item with decision history
  GET  /api/stats/agreement?a=&b=     two-annotator agreement table
  GET  /api/stats/progress            queue and labeling counters

When a built review-UI bundle is available its directory is served at /.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .service import AnnotationStore, AuthError, NotFoundError, QueueItem, UnresolvedError
from .stats import agreement_table
from .taxonomy import FourWayDecision


class LabelSubmission(BaseModel):
    item_id: str
    annotator_id: str
    decision: str


def _item_view(item: QueueItem) -> dict:
    """What an annotator is shown; no other annotator identities leak."""
    annotation = item.annotation
    return {
        "item_id": item.comment.id,
        "text": item.comment.text,
        "priority": item.priority,
        "summary": annotation.summary,
        "tones": [[name, pct] for name, pct in annotation.tones],
        "score": annotation.score,
        "justification": annotation.justification,
        "model_decision": annotation.decision.value,
        "content_warning": annotation.score > 3,
    }


def create_app(store: AnnotationStore, static_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="annotation queue")

    @app.get("/api/queue/next")
    def queue_next(annotator: str = Query(min_length=1)):
        item = store.next_item(annotator)
        if item is None:
            return {"empty": True}
        return _item_view(item)

    @app.post("/api/labels")
    def submit_label(submission: LabelSubmission):
        try:
            decision = FourWayDecision(submission.decision)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown decision {submission.decision!r}")
        try:
            annotator, stored, ts = store.submit_label(
                submission.item_id, submission.annotator_id, decision
            )
        except AuthError as exc:
            raise HTTPException(status_code=401, detail=str(exc))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"item_id": submission.item_id, "annotator_id": annotator,
                "decision": stored.value, "ts": ts}

    @app.get("/api/items/{item_id}")
    def get_item(item_id: str):
        if item_id not in store.items:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id!r}")
        item = store.items[item_id]
        view = _item_view(item)
        view["decisions"] = [
            {"annotator": a, "decision": d.value, "ts": ts} for a, d, ts in item.decisions
        ]
        try:
            view["final_label"] = store.final_label(item_id).value.value
        except UnresolvedError:
            view["final_label"] = None
        return view

    @app.get("/api/stats/agreement")
    def stats_agreement(a: str, b: str):
        pairs = store.agreement_pairs(a, b)
        if not pairs:
            return {"pairs": 0, "columns": {}}
        table = agreement_table(pairs)
        return {
            "pairs": len(pairs),
            "columns": {
                value.value: {
                    row: {
                        "count": cell.count,
                        "trials": cell.trials,
                        "rate": cell.rate,
                        "interval": list(cell.interval),
                    }
                    for row, cell in rows.items()
                }
                for value, rows in table.columns.items()
            },
            "warnings": table.warnings,
        }

    @app.get("/api/stats/progress")
    def stats_progress():
        return store.progress()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
