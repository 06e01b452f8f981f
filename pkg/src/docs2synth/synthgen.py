"""Synthetic QA generation, MLLM verification, and the review lifecycle.

For each candidate entity the generator asks for a question whose exact
answer is the entity content; a verifier model then judges relevance,
clarity, and answer validity. Only verifier-passed pairs are kept, and
unparseable verifier output fails closed.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from .agents import ChatMessage, ImagePart, MalformedResponse, ProviderConfig, TextPart, complete, complete_json
from .docmodel import Entity, ParsedDocument

logger = logging.getLogger(__name__)

GENERATION_TEMPERATURE = 0.7
VERIFICATION_TEMPERATURE = 0.0

REVIEW_STATUSES = ("pending", "approved", "rejected", "edited")
_LEGAL_TRANSITIONS = {
    ("pending", "approve"): "approved",
    ("pending", "reject"): "rejected",
    ("pending", "edit"): "edited",
    ("edited", "approve"): "approved",
    ("edited", "reject"): "rejected",
}


class GenerationFailed(RuntimeError):
    """The generator returned an empty reply for an entity."""


class IllegalTransition(ValueError):
    """Review action not allowed from the pair's current status."""


class EditAnswerNotFound(ValueError):
    """Edited answer matches no entity content in the document."""


@dataclass(frozen=True)
class VerifierVerdict:
    relevant_and_clear: bool
    answer_valid: bool
    rationale: str

    @property
    def passed(self) -> bool:
        return self.relevant_and_clear and self.answer_valid

    def to_json_dict(self) -> dict:
        return {
            "relevant_and_clear": self.relevant_and_clear,
            "answer_valid": self.answer_valid,
            "rationale": self.rationale,
            "passed": self.passed,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "VerifierVerdict":
        return cls(
            relevant_and_clear=bool(raw["relevant_and_clear"]),
            answer_valid=bool(raw["answer_valid"]),
            rationale=str(raw.get("rationale", "")),
        )


@dataclass(frozen=True)
class QAPair:
    qa_id: str
    doc_id: str
    question: str
    answer: str
    gold_entity_index: int
    verifier: VerifierVerdict
    review_status: str = "pending"
    edit_history: tuple = ()  # (timestamp, field, old, new) tuples

    def to_json_dict(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "doc_id": self.doc_id,
            "question": self.question,
            "answer": self.answer,
            "gold_entity_index": self.gold_entity_index,
            "verifier": self.verifier.to_json_dict(),
            "review_status": self.review_status,
            "edit_history": [list(entry) for entry in self.edit_history],
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "QAPair":
        return cls(
            qa_id=raw["qa_id"],
            doc_id=raw["doc_id"],
            question=raw["question"],
            answer=raw["answer"],
            gold_entity_index=int(raw["gold_entity_index"]),
            verifier=VerifierVerdict.from_json_dict(raw["verifier"]),
            review_status=raw.get("review_status", "pending"),
            edit_history=tuple(tuple(entry) for entry in raw.get("edit_history", [])),
        )


@dataclass(frozen=True)
class ReviewAction:
    kind: str  # approve | reject | edit
    field: str | None = None
    new_value: str | None = None

    @classmethod
    def approve(cls) -> "ReviewAction":
        return cls("approve")

    @classmethod
    def reject(cls) -> "ReviewAction":
        return cls("reject")

    @classmethod
    def edit(cls, field: str, new_value: str) -> "ReviewAction":
        return cls("edit", field=field, new_value=new_value)


@dataclass(frozen=True)
class GenerationConfig:
    qa_per_document: int = 10
    entity_sampling: str = "all"  # all | random | longest-first
    min_answer_chars: int = 2
    generator_provider: str = "generator"
    verifier_provider: str = "verifier"
    seed: int = 0
    prompts_dir: str | None = None

    def __post_init__(self) -> None:
        if self.qa_per_document < 1:
            raise ValueError("qa_per_document must be >= 1")
        if self.min_answer_chars < 0:
            raise ValueError("min_answer_chars must be >= 0")
        if self.entity_sampling not in ("all", "random", "longest-first"):
            raise ValueError(f"unknown entity_sampling {self.entity_sampling!r}")


def load_prompt(name: str, override_dir: str | None = None) -> str:
    """Prompt template by name, preferring an override directory."""
    if override_dir:
        candidate = Path(override_dir) / f"{name}.txt"
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    return resources.files("docs2synth.prompts").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


def render_prompt(template: str, **fields: str) -> str:
    """Fill {placeholders} by plain replacement, so templates may contain
    literal braces (e.g. JSON examples) without escaping."""
    out = template
    for key, value in fields.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def _image_part(doc: ParsedDocument) -> ImagePart | None:
    path = Path(doc.image_ref)
    if not path.exists():
        logger.warning("%s: page image %s not found; prompting text-only", doc.doc_id, path)
        return None
    media = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
    return ImagePart(media_type=media, data_b64=base64.b64encode(path.read_bytes()).decode("ascii"))


def _first_line(text: str) -> str:
    for line in text.splitlines():
        line = line.strip()
        if line:
            return line
    return ""


def make_qa_id(doc_id: str, gold_entity_index: int, question: str) -> str:
    digest = hashlib.sha1(
        f"{doc_id}\n{gold_entity_index}\n{question}".encode("utf-8")
    ).hexdigest()
    return digest[:16]


def generate_question(
    provider: ProviderConfig,
    doc: ParsedDocument,
    entity: Entity,
    prompts_dir: str | None = None,
) -> str:
    """One question whose intended answer is exactly entity.content."""
    if entity not in doc.entities:
        raise ValueError(f"entity {entity.index} does not belong to {doc.doc_id}")
    template = load_prompt("generation", prompts_dir)
    prompt = render_prompt(
        template,
        full_text=doc.full_text,
        content=entity.content,
        bbox=entity.bbox.as_list(),
    )
    parts: list = []
    image = _image_part(doc)
    if image is not None:
        parts.append(image)
    parts.append(TextPart(prompt))
    reply = complete(
        provider,
        [ChatMessage(role="user", parts=tuple(parts))],
        temperature=GENERATION_TEMPERATURE,
    )
    question = _first_line(reply.text)
    if not question:
        raise GenerationFailed(f"{doc.doc_id}: empty question for entity {entity.index}")
    return question


def verify_pair(
    provider: ProviderConfig,
    doc: ParsedDocument,
    question: str,
    answer: str,
    prompts_dir: str | None = None,
) -> VerifierVerdict:
    """Verifier checks (1) relevance/clarity and (2) answer validity.

    Unparseable verifier output fails closed.
    """
    template = load_prompt("verification", prompts_dir)
    prompt = render_prompt(
        template, question=question, answer=answer, full_text=doc.full_text
    )
    parts: list = []
    image = _image_part(doc)
    if image is not None:
        parts.append(image)
    parts.append(TextPart(prompt))
    try:
        value = complete_json(
            provider,
            [ChatMessage(role="user", parts=tuple(parts))],
            schema_hint='{"relevant_and_clear": bool, "answer_valid": bool, "rationale": string}',
            temperature=VERIFICATION_TEMPERATURE,
        )
    except MalformedResponse:
        return VerifierVerdict(
            relevant_and_clear=False,
            answer_valid=False,
            rationale="verifier output unparseable",
        )
    if not isinstance(value, dict):
        return VerifierVerdict(False, False, "verifier output unparseable")
    return VerifierVerdict(
        relevant_and_clear=bool(value.get("relevant_and_clear", False)),
        answer_valid=bool(value.get("answer_valid", False)),
        rationale=str(value.get("rationale", "")),
    )


def _candidate_entities(doc: ParsedDocument, config: GenerationConfig) -> list[Entity]:
    candidates = [
        e for e in doc.entities if len(e.content) >= config.min_answer_chars
    ]
    if config.entity_sampling == "longest-first":
        return sorted(candidates, key=lambda e: (-len(e.content), e.index))
    if config.entity_sampling == "random":
        rng = random.Random(f"{config.seed}:{doc.doc_id}")
        shuffled = list(candidates)
        rng.shuffle(shuffled)
        return shuffled
    return candidates


def generate_for_document(
    doc: ParsedDocument,
    config: GenerationConfig,
    providers: dict[str, ProviderConfig],
) -> list[QAPair]:
    """Generate then verify QA pairs; keep verifier-passed ones, up to m."""
    generator = providers[config.generator_provider]
    verifier = providers[config.verifier_provider]
    pairs: list[QAPair] = []
    for entity in _candidate_entities(doc, config):
        if len(pairs) >= config.qa_per_document:
            break
        try:
            question = generate_question(generator, doc, entity, config.prompts_dir)
        except GenerationFailed as exc:
            logger.warning("generation failed, skipping entity: %s", exc)
            continue
        verdict = verify_pair(verifier, doc, question, entity.content, config.prompts_dir)
        if not verdict.passed:
            logger.info(
                "%s entity %d: verifier rejected (%s)", doc.doc_id, entity.index, verdict.rationale
            )
            continue
        pairs.append(
            QAPair(
                qa_id=make_qa_id(doc.doc_id, entity.index, question),
                doc_id=doc.doc_id,
                question=question,
                answer=entity.content,
                gold_entity_index=entity.index,
                verifier=verdict,
            )
        )
    if not pairs:
        logger.warning("%s: no verifier-passed QA pairs", doc.doc_id)
    return pairs


def apply_review(
    pair: QAPair,
    action: ReviewAction,
    reviewer: str,
    doc: ParsedDocument | None = None,
    now: datetime | None = None,
) -> QAPair:
    """Apply one review action, enforcing the status state machine.

    Editing the answer re-derives the gold entity index by exact-content
    match in reading order; doc is required for answer edits.
    """
    target = _LEGAL_TRANSITIONS.get((pair.review_status, action.kind))
    if target is None:
        raise IllegalTransition(
            f"{pair.qa_id}: cannot {action.kind} from status {pair.review_status!r}"
        )
    if action.kind in ("approve", "reject"):
        logger.info("%s: %s by %s", pair.qa_id, target, reviewer)
        return replace(pair, review_status=target)

    if action.field not in ("question", "answer"):
        raise ValueError(f"editable fields are question/answer, got {action.field!r}")
    if action.new_value is None or not action.new_value.strip():
        raise ValueError("edit needs a non-empty new_value")
    timestamp = (now or datetime.now(timezone.utc)).isoformat()
    old = getattr(pair, action.field)
    entry = (timestamp, action.field, old, action.new_value)
    updated = replace(
        pair,
        review_status="edited",
        edit_history=pair.edit_history + (entry,),
        **{action.field: action.new_value},
    )
    if action.field == "answer":
        if doc is None:
            raise ValueError("editing the answer requires the source document")
        match = next(
            (e for e in doc.entities if e.content == action.new_value), None
        )
        if match is None:
            raise EditAnswerNotFound(
                f"{pair.qa_id}: no entity content equals {action.new_value!r}"
            )
        updated = replace(updated, gold_entity_index=match.index)
    logger.info("%s: edited %s by %s", pair.qa_id, action.field, reviewer)
    return updated


def save_qa_jsonl(pairs: list[QAPair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_json_dict(), ensure_ascii=False) + "\n")


def load_qa_jsonl(path) -> list[QAPair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(QAPair.from_json_dict(json.loads(line)))
    return pairs
