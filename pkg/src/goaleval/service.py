"""HTTP service for the adjudication workflow and report access.

Serves the escalation queue, item detail (dialog, every judge's labels and
rationale, SOP text), binding resolution submission, and the recomputed
evaluation report. Resolutions update the label store immediately.
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.staticfiles import StaticFiles

from .aggregation import (
    AlreadyResolved,
    EscalationItem,
    EscalationStore,
    LabelStore,
    NotFound,
    item_to_wire,
)
from .dialog_model import (
    AnnotationMismatch,
    SchemaError,
    annotation_from_dict,
    annotation_to_dict,
)
from .pipeline import load_dialogs, load_labels
from .report import build_report, report_to_dict


def _age_seconds(enqueued_at: str | None) -> float | None:
    if not enqueued_at:
        return None
    try:
        stamp = datetime.fromisoformat(enqueued_at)
    except ValueError:
        return None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return max(0.0, (datetime.now(timezone.utc) - stamp).total_seconds())


def _item_summary(item: EscalationItem) -> dict:
    return {
        "item_id": item.item_id,
        "dialog_id": item.dialog_id,
        "ambiguous_fields": [[n, f] for n, f in item.ambiguous_fields],
        "status": item.status,
        "enqueued_at": item.enqueued_at,
        "age_seconds": _age_seconds(item.enqueued_at),
        "annotator_id": item.annotator_id,
        "resolved_at": item.resolved_at,
    }


def create_app(
    queue_path: str | Path,
    labels_path: str | Path,
    dialogs_path: str | Path | None = None,
    sop_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="goaleval adjudication service")
    store = EscalationStore(queue_path)
    labels = LabelStore(labels_path)
    dialogs = load_dialogs(Path(dialogs_path), strict=False) if dialogs_path else []
    sop_text = (
        Path(sop_path).read_text(encoding="utf-8") if sop_path else ""
    )

    @app.get("/api/queue")
    def get_queue(status: str = "pending"):
        wanted = None if status == "all" else status
        return {"items": [_item_summary(i) for i in store.items(wanted)]}

    @app.get("/api/items/{item_id}")
    def get_item(item_id: str):
        try:
            item = store.get(item_id)
        except NotFound:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        payload = item_to_wire(item)
        payload["sop"] = sop_text
        payload["age_seconds"] = _age_seconds(item.enqueued_at)
        return payload

    @app.post("/api/items/{item_id}/resolution")
    async def post_resolution(item_id: str, request: Request):
        body = await request.json()
        annotator_id = body.get("annotator_id")
        if not annotator_id or not isinstance(annotator_id, str):
            raise HTTPException(status_code=422, detail="annotator_id is required")
        try:
            annotation = annotation_from_dict(body.get("annotation") or {})
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            item = store.resolve(item_id, annotation, annotator_id)
        except NotFound:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        except AlreadyResolved:
            raise HTTPException(status_code=409, detail=f"item {item_id} already resolved")
        except AnnotationMismatch as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        labels.append(item.resolution)
        return {
            "item_id": item.item_id,
            "status": item.status,
            "annotation": annotation_to_dict(item.resolution),
        }

    @app.get("/api/metrics/summary")
    def metrics_summary():
        current = load_labels(labels.path) if labels.path.exists() else []
        report = build_report(current, dialogs=dialogs or None)
        gsr = report_to_dict(report)["gsr"]
        return {
            "queue": {
                "pending": len(store.items("pending")),
                "resolved": len(store.items("resolved")),
            },
            "labels": len(current),
            "goals": report.goal_count,
            "gsr": gsr,
        }

    @app.get("/api/report")
    def get_report():
        current = load_labels(labels.path) if labels.path.exists() else []
        report = build_report(current, dialogs=dialogs or None)
        return report_to_dict(report)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
