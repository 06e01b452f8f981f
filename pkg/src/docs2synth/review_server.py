"""HTTP API for human QA review and side-by-side strategy comparison.

Reads always reflect the append-only store's latest state; the three
review mutations and compare's trace persistence are the only writes.
An optional shared bearer token (from the environment) guards /api.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import docmodel
from .agents import ProviderError
from .config import PipelineConfig
from .inference import annotate_image, rag_baseline, run_loop
from .retriever.model import load_checkpoint
from .retriever.served import ServedRetriever
from .store import JsonlStore, LockHeld, latest_by_key
from .synthgen import (
    EditAnswerNotFound,
    IllegalTransition,
    QAPair,
    ReviewAction,
    apply_review,
)

logger = logging.getLogger(__name__)

MAX_PAGE_SIZE = 200
STATIC_DIR = Path(__file__).parent / "static"


class EditBody(BaseModel):
    field: str
    new_value: str


class CompareBody(BaseModel):
    question: str
    doc_id: str
    strategies: list[str] = Field(default_factory=lambda: ["trained", "rag-baseline"])
    k: int = 3
    iterations: int = 2


class ServerState:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.root = Path(config.storage.root_dir)
        self.store = JsonlStore(self.root)
        self._docs_cache: dict[str, docmodel.ParsedDocument] | None = None
        self._docs_mtime: float | None = None

    def documents(self) -> dict[str, docmodel.ParsedDocument]:
        path = self.root / "documents.jsonl"
        if not path.exists():
            return {}
        mtime = path.stat().st_mtime
        if self._docs_cache is None or mtime != self._docs_mtime:
            docs = docmodel.load_documents_jsonl(path)
            self._docs_cache = {d.doc_id: d for d in docs}
            self._docs_mtime = mtime
        return self._docs_cache

    def latest_pairs(self) -> list[QAPair]:
        records = latest_by_key(self.store.scan("qa"), "qa_id")
        return [QAPair.from_json_dict(r) for r in records]

    def pair_by_id(self, qa_id: str) -> QAPair:
        for pair in self.latest_pairs():
            if pair.qa_id == qa_id:
                return pair
        raise HTTPException(status_code=404, detail=f"unknown qa_id {qa_id!r}")

    def persist(self, pair: QAPair) -> None:
        try:
            self.store.append("qa", [pair])
        except LockHeld as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc


def create_app(config: PipelineConfig) -> FastAPI:
    state = ServerState(config)
    app = FastAPI(
        title="docs2synth review API",
        description="QA review queue and retrieval-strategy comparison.",
        version="1.0",
    )

    expected_token = ""
    if config.review.bearer_token_env:
        expected_token = os.environ.get(config.review.bearer_token_env, "")

    async def require_token(request: Request) -> None:
        if not expected_token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected_token}":
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    guarded = [Depends(require_token)]

    @app.get("/api/qa", dependencies=guarded)
    def list_qa(
        response: Response,
        status: str | None = None,
        doc_id: str | None = None,
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1),
    ):
        if page_size > MAX_PAGE_SIZE:
            raise HTTPException(
                status_code=400, detail=f"page_size must be <= {MAX_PAGE_SIZE}"
            )
        if status is not None and status not in ("pending", "approved", "rejected", "edited"):
            raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        pairs = state.latest_pairs()
        if status is not None:
            pairs = [p for p in pairs if p.review_status == status]
        if doc_id is not None:
            pairs = [p for p in pairs if p.doc_id == doc_id]
        pairs.sort(key=lambda p: p.qa_id)
        total = len(pairs)
        start = (page - 1) * page_size
        page_items = pairs[start : start + page_size]
        response.headers["X-Total-Count"] = str(total)
        return {"items": [p.to_json_dict() for p in page_items], "total": total}

    def _apply(qa_id: str, action: ReviewAction) -> dict:
        pair = state.pair_by_id(qa_id)
        doc = state.documents().get(pair.doc_id)
        try:
            updated = apply_review(pair, action, reviewer="api", doc=doc)
        except IllegalTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except EditAnswerNotFound as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        state.persist(updated)
        return updated.to_json_dict()

    @app.post("/api/qa/{qa_id}/approve", dependencies=guarded)
    def approve(qa_id: str):
        return _apply(qa_id, ReviewAction.approve())

    @app.post("/api/qa/{qa_id}/reject", dependencies=guarded)
    def reject(qa_id: str):
        return _apply(qa_id, ReviewAction.reject())

    @app.patch("/api/qa/{qa_id}", dependencies=guarded)
    def edit(qa_id: str, body: EditBody):
        return _apply(qa_id, ReviewAction.edit(body.field, body.new_value))

    @app.get("/api/session", dependencies=guarded)
    def session(reviewer: str = "anonymous", status: str | None = None, doc_id: str | None = None):
        # counts reflect the store's latest state at response time
        pairs = state.latest_pairs()
        counts = {name: 0 for name in ("pending", "approved", "rejected", "edited")}
        for pair in pairs:
            counts[pair.review_status] += 1
        return {
            "reviewer": reviewer,
            "filters": {"status": status, "doc_id": doc_id},
            "counts": counts,
        }

    @app.get("/api/documents", dependencies=guarded)
    def list_documents():
        docs = state.documents()
        return {
            "items": [
                {
                    "doc_id": d.doc_id,
                    "n_entities": len(d.entities),
                    "width": d.width,
                    "height": d.height,
                }
                for d in sorted(docs.values(), key=lambda d: d.doc_id)
            ]
        }

    @app.get("/api/documents/{doc_id}/image", dependencies=guarded)
    def document_image(doc_id: str, boxes: str | None = None):
        doc = state.documents().get(doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown doc_id {doc_id!r}")
        selected = []
        if boxes:
            for chunk in boxes.split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                try:
                    index = int(chunk)
                except ValueError:
                    raise HTTPException(status_code=400, detail=f"bad box index {chunk!r}")
                if not 0 <= index < len(doc.entities):
                    raise HTTPException(
                        status_code=400,
                        detail=f"box index {index} out of range for {len(doc.entities)} entities",
                    )
                selected.append(doc.entities[index].bbox)
        png = annotate_image(doc.image_ref, selected)
        return Response(content=png, media_type="image/png")

    @app.get("/api/entities/{doc_id}", dependencies=guarded)
    def entities(doc_id: str):
        doc = state.documents().get(doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown doc_id {doc_id!r}")
        return {
            "items": [
                {"index": e.index, "content": e.content, "bbox": e.bbox.as_list()}
                for e in doc.entities
            ]
        }

    @app.post("/api/compare", dependencies=guarded)
    def compare(body: CompareBody):
        doc = state.documents().get(body.doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown doc_id {body.doc_id!r}")
        loop_base = state.config.inference
        artifacts_dir = state.root / "artifacts"
        traces = {}
        for strategy in body.strategies:
            if strategy not in ("trained", "served", "rag-baseline"):
                raise HTTPException(status_code=400, detail=f"unknown strategy {strategy!r}")
            try:
                if strategy == "rag-baseline":
                    trace = rag_baseline(
                        body.question,
                        doc,
                        body.k,
                        state.config.providers,
                        answerer_provider=loop_base.answerer_provider,
                        artifacts_dir=artifacts_dir,
                    )
                else:
                    model = None
                    scorer = None
                    if strategy == "trained":
                        ckpt = state.root / "checkpoints" / "retriever.ckpt"
                        if not ckpt.exists():
                            raise HTTPException(
                                status_code=409,
                                detail="no trained checkpoint; run `docs2synth train` first",
                            )
                        model = load_checkpoint(ckpt)
                    else:
                        if not loop_base.served_url:
                            raise HTTPException(
                                status_code=409, detail="inference.served_url not configured"
                            )
                        scorer = ServedRetriever(loop_base.served_url).score
                    section = dataclasses.replace(
                        loop_base,
                        k=body.k,
                        max_iterations=body.iterations,
                        retriever=strategy,
                    )
                    trace = run_loop(
                        body.question,
                        doc,
                        model,
                        section.loop_config(),
                        state.config.providers,
                        artifacts_dir=artifacts_dir,
                        scorer=scorer,
                    )
            except ProviderError as exc:
                raise HTTPException(
                    status_code=502, detail=f"provider failure during {strategy}: {exc}"
                ) from exc
            try:
                state.store.append("traces", [trace])
            except LockHeld as exc:
                raise HTTPException(status_code=503, detail=str(exc)) from exc
            payload = trace.to_json_dict()
            for record in payload["iterations"]:
                ref = record["annotated_image_ref"]
                if ref:
                    record["annotated_image_url"] = f"/api/artifacts/{ref.removeprefix('artifacts/')}"
            traces[strategy] = payload
        return {"traces": traces}

    @app.get("/api/artifacts/{subpath:path}", dependencies=guarded)
    def artifact(subpath: str):
        base = (state.root / "artifacts").resolve()
        target = (base / subpath).resolve()
        if not str(target).startswith(str(base) + os.sep):
            raise HTTPException(status_code=400, detail="bad artifact path")
        if not target.is_file():
            raise HTTPException(status_code=404, detail="artifact not found")
        return FileResponse(target)

    if STATIC_DIR.is_dir() and (STATIC_DIR / "index.html").exists():

        @app.get("/")
        def index():
            return FileResponse(STATIC_DIR / "index.html")

        app.mount("/static", StaticFiles(directory=STATIC_DIR), name="static")

    return app
