"""Retrieval-guided iterative inference and the single-pass RAG baseline.

Each iteration retrieves the top-k entities for the current answer
hypothesis, draws their boxes in red on the page image, and asks the
answer model again with the marked image plus the retrieved contents as
an explicit evidence block. The refined answer drives the next retrieval.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .agents import ChatMessage, ImagePart, ProviderConfig, ProviderError, TextPart, complete
from .docmodel import BoundingBox, ParsedDocument
from .evalharness import normalize_answer
from .retriever.features import embed_text
from .retriever.model import ModelError, ScoringModel, predict, top_k
from .synthgen import load_prompt, render_prompt

logger = logging.getLogger(__name__)

ANSWER_SYSTEM_INSTRUCTION = (
    "You answer questions about a scanned document page. The page image is "
    "attached; retrieved entities, when present, are highlighted in red on it. "
    "Answer with the exact text from the page, on a single line."
)
ANSWER_TEMPERATURE = 0.0

RETRIEVER_STRATEGIES = ("trained", "served", "rag-baseline")


class UndecodableImage(ValueError):
    """Page image bytes could not be decoded."""


class InferenceAborted(RuntimeError):
    """Provider or model failure mid-loop; partial trace preserved."""

    def __init__(self, message: str, partial_trace: "InferenceTrace"):
        super().__init__(message)
        self.partial_trace = partial_trace


@dataclass(frozen=True)
class LoopConfig:
    k: int = 3
    max_iterations: int = 2
    stop_on_stable_answer: bool = True
    answerer_provider: str = "answerer"
    retriever: str = "trained"  # trained | served | rag-baseline

    def __post_init__(self) -> None:
        if self.k < 1 or self.max_iterations < 1:
            raise ValueError("k and max_iterations must be >= 1")
        if self.retriever not in RETRIEVER_STRATEGIES:
            raise ValueError(f"unknown retriever strategy {self.retriever!r}")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    topk_indices: tuple[int, ...]
    retrieved_contents: tuple[str, ...]
    annotated_image_ref: str
    answer: str

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "topk_indices": list(self.topk_indices),
            "retrieved_contents": list(self.retrieved_contents),
            "annotated_image_ref": self.annotated_image_ref,
            "answer": self.answer,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "IterationRecord":
        return cls(
            t=int(raw["t"]),
            topk_indices=tuple(int(i) for i in raw["topk_indices"]),
            retrieved_contents=tuple(raw["retrieved_contents"]),
            annotated_image_ref=raw.get("annotated_image_ref", ""),
            answer=raw["answer"],
        )


@dataclass(frozen=True)
class InferenceTrace:
    question: str
    doc_id: str
    iterations: tuple[IterationRecord, ...]
    final_answer: str
    stop_reason: str  # max_iterations | stable_answer
    strategy: str = "trained"

    def to_json_dict(self) -> dict:
        return {
            "question": self.question,
            "doc_id": self.doc_id,
            "iterations": [it.to_json_dict() for it in self.iterations],
            "final_answer": self.final_answer,
            "stop_reason": self.stop_reason,
            "strategy": self.strategy,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "InferenceTrace":
        return cls(
            question=raw["question"],
            doc_id=raw["doc_id"],
            iterations=tuple(IterationRecord.from_json_dict(i) for i in raw["iterations"]),
            final_answer=raw["final_answer"],
            stop_reason=raw["stop_reason"],
            strategy=raw.get("strategy", "trained"),
        )


def stroke_width(width: int, height: int) -> int:
    return max(2, round(0.003 * max(width, height)))


def annotate_image(image_ref, boxes: list[BoundingBox]) -> bytes:
    """Draw red box outlines on the page; returns deterministic PNG bytes.

    The stroke lies inside the rectangle; boxes are clamped to the page.
    With no boxes this is a plain decode + re-encode of the source.
    """
    try:
        with Image.open(image_ref) as im:
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UndecodableImage(f"cannot decode image {image_ref}: {exc}") from exc
    arr = np.array(rgb)
    height, width = arr.shape[:2]
    w = stroke_width(width, height)
    for box in boxes:
        x0 = max(0, min(int(round(box.x0)), width))
        x1 = max(0, min(int(round(box.x1)), width))
        y0 = max(0, min(int(round(box.y0)), height))
        y1 = max(0, min(int(round(box.y1)), height))
        if x1 <= x0 or y1 <= y0:
            continue
        mask = np.zeros((height, width), dtype=bool)
        mask[y0:y1, x0:x1] = True
        ix0, ix1 = x0 + w, x1 - w
        iy0, iy1 = y0 + w, y1 - w
        if ix1 > ix0 and iy1 > iy0:
            mask[iy0:iy1, ix0:ix1] = False
        arr[mask] = (255, 0, 0)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def evidence_block(contents) -> str:
    """Numbered evidence lines: E1: <content> ..."""
    if not contents:
        return "(none)"
    return "\n".join(f"E{j + 1}: {c}" for j, c in enumerate(contents))


def generate_answer(
    provider: ProviderConfig,
    question: str,
    annotated_image: bytes | None,
    full_text: str,
    retrieved_contents,
    prompts_dir: str | None = None,
) -> str:
    """One answer-model call; empty replies become empty-string answers."""
    template = load_prompt("answer", prompts_dir)
    user_text = render_prompt(
        template,
        full_text=full_text,
        evidence_block=evidence_block(retrieved_contents),
        question=question,
    )
    parts: list = []
    if annotated_image is not None:
        parts.append(
            ImagePart(media_type="image/png", data_b64=base64.b64encode(annotated_image).decode("ascii"))
        )
    parts.append(TextPart(user_text))
    reply = complete(
        provider,
        [
            ChatMessage.text("system", ANSWER_SYSTEM_INSTRUCTION),
            ChatMessage(role="user", parts=tuple(parts)),
        ],
        temperature=ANSWER_TEMPERATURE,
    )
    for line in reply.text.splitlines():
        line = line.strip()
        if line:
            return line
    return ""


def question_hash(question: str) -> str:
    return hashlib.sha1(question.encode("utf-8")).hexdigest()[:12]


def _write_annotated(
    artifacts_dir, doc_id: str, question: str, t: int, image_bytes: bytes
) -> str:
    """Write one iteration's annotated page; the returned ref is relative
    to the storage root (the artifacts dir's parent) so artifact files stay
    byte-identical across storage locations."""
    if artifacts_dir is None:
        return ""
    out_dir = Path(artifacts_dir) / "annotated" / doc_id / question_hash(question)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"t{t}.png"
    out_path.write_bytes(image_bytes)
    try:
        return str(out_path.relative_to(Path(artifacts_dir).parent))
    except ValueError:
        return str(out_path)


def _safe_annotate(doc: ParsedDocument, boxes) -> bytes | None:
    image_path = Path(doc.image_ref)
    if not image_path.exists():
        logger.warning("%s: page image missing; answering text-only", doc.doc_id)
        return None
    return annotate_image(image_path, boxes)


def run_loop(
    question: str,
    doc: ParsedDocument,
    model: ScoringModel | None,
    config: LoopConfig,
    providers: dict[str, ProviderConfig],
    artifacts_dir=None,
    scorer=None,
) -> InferenceTrace:
    """Iterative retrieval-generation over one document.

    scorer(question, answer, doc) -> logits overrides the trained model
    (used for the served-retriever adapter).
    """
    if not doc.entities:
        raise ValueError("document has no entities")
    provider = providers[config.answerer_provider]
    score = scorer if scorer is not None else (
        lambda q, a, d: predict(model, q, a, d)
    )
    iterations: list[IterationRecord] = []

    def partial() -> InferenceTrace:
        return InferenceTrace(
            question=question,
            doc_id=doc.doc_id,
            iterations=tuple(iterations),
            final_answer=iterations[-1].answer if iterations else "",
            stop_reason="aborted",
            strategy=config.retriever,
        )

    try:
        answer = generate_answer(
            provider, question, _safe_annotate(doc, []), doc.full_text, []
        )
        stop_reason = "max_iterations"
        for t in range(1, config.max_iterations + 1):
            logits = score(question, answer, doc)
            topk = top_k(np.asarray(logits, dtype=np.float64), config.k)
            retrieved = tuple(doc.entities[i].content for i in topk)
            image_bytes = _safe_annotate(doc, [doc.entities[i].bbox for i in topk])
            ref = _write_annotated(artifacts_dir, doc.doc_id, question, t, image_bytes) if image_bytes else ""
            new_answer = generate_answer(
                provider, question, image_bytes, doc.full_text, retrieved
            )
            iterations.append(
                IterationRecord(
                    t=t,
                    topk_indices=tuple(topk),
                    retrieved_contents=retrieved,
                    annotated_image_ref=ref,
                    answer=new_answer,
                )
            )
            stable = (
                config.stop_on_stable_answer
                and normalize_answer(new_answer) == normalize_answer(answer)
            )
            answer = new_answer
            if stable and t < config.max_iterations:
                stop_reason = "stable_answer"
                break
    except (ProviderError, ModelError) as exc:
        raise InferenceAborted(
            f"loop aborted at iteration {len(iterations) + 1}: {exc}", partial()
        ) from exc

    return InferenceTrace(
        question=question,
        doc_id=doc.doc_id,
        iterations=tuple(iterations),
        final_answer=iterations[-1].answer,
        stop_reason=stop_reason,
        strategy=config.retriever,
    )


def rag_baseline(
    question: str,
    doc: ParsedDocument,
    k: int,
    providers: dict[str, ProviderConfig],
    answerer_provider: str = "answerer",
    artifacts_dir=None,
) -> InferenceTrace:
    """Single-pass retrieval by question-entity embedding similarity."""
    if not doc.entities:
        raise ValueError("document has no entities")
    provider = providers[answerer_provider]
    q_vec = embed_text(question)
    logits = np.array(
        [float(np.dot(q_vec, embed_text(e.content))) for e in doc.entities]
    )
    topk = top_k(logits, k)
    retrieved = tuple(doc.entities[i].content for i in topk)
    image_bytes = _safe_annotate(doc, [doc.entities[i].bbox for i in topk])
    ref = _write_annotated(artifacts_dir, doc.doc_id, question, 1, image_bytes) if image_bytes else ""
    answer = generate_answer(provider, question, image_bytes, doc.full_text, retrieved)
    record = IterationRecord(
        t=1,
        topk_indices=tuple(topk),
        retrieved_contents=retrieved,
        annotated_image_ref=ref,
        answer=answer,
    )
    return InferenceTrace(
        question=question,
        doc_id=doc.doc_id,
        iterations=(record,),
        final_answer=answer,
        stop_reason="max_iterations",
        strategy="rag-baseline",
    )


def save_traces_jsonl(traces, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_json_dict(), ensure_ascii=False) + "\n")


def append_trace_jsonl(trace: InferenceTrace, path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(trace.to_json_dict(), ensure_ascii=False) + "\n")


def load_traces_jsonl(path) -> list[InferenceTrace]:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                traces.append(InferenceTrace.from_json_dict(json.loads(line)))
    return traces
