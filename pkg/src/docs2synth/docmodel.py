"""Core domain types: entities, parsed documents, and collections.

A document page is an ordered list of entities, each a (text content,
bounding box) pair. The aggregated page text joins entity contents with
single newlines, in reading order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


class EmptyDocument(ValueError):
    """Raised when an operation needs at least one entity and got none."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image pixel space, origin top-left, y down."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def violations(self) -> list[str]:
        """Invariant violations as human-readable strings; empty if valid."""
        out = []
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(c) for c in coords):
            out.append("bbox has non-finite coordinate")
        else:
            if any(c < 0 for c in coords):
                out.append("bbox has negative coordinate")
            if self.x0 >= self.x1:
                out.append("bbox x0 >= x1")
            if self.y0 >= self.y1:
                out.append("bbox y0 >= y1")
        return out

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, raw: list[float]) -> "BoundingBox":
        if len(raw) != 4:
            raise ValueError(f"bbox needs 4 values, got {len(raw)}")
        return cls(float(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]))


@dataclass(frozen=True)
class Entity:
    """One semantic OCR unit: text content plus its box on the page."""

    index: int
    content: str
    bbox: BoundingBox


@dataclass(frozen=True)
class ParsedDocument:
    """A single page: ordered entities, aggregated text, box list."""

    doc_id: str
    image_ref: str
    width: float
    height: float
    entities: tuple[Entity, ...]
    full_text: str
    bbox_list: tuple[BoundingBox, ...]

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @classmethod
    def from_entities(
        cls,
        doc_id: str,
        image_ref: str,
        width: float,
        height: float,
        entities: list[Entity] | tuple[Entity, ...],
    ) -> "ParsedDocument":
        """Build a document, deriving full_text and bbox_list."""
        full_text, bbox_list = aggregate_text(list(entities))
        return cls(
            doc_id=doc_id,
            image_ref=image_ref,
            width=float(width),
            height=float(height),
            entities=tuple(entities),
            full_text=full_text,
            bbox_list=tuple(bbox_list),
        )

    def to_json_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "image_ref": self.image_ref,
            "width": self.width,
            "height": self.height,
            "entities": [
                {"index": e.index, "content": e.content, "bbox": e.bbox.as_list()}
                for e in self.entities
            ],
            "full_text": self.full_text,
            "bbox_list": [b.as_list() for b in self.bbox_list],
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ParsedDocument":
        entities = tuple(
            Entity(
                index=int(e["index"]),
                content=e["content"],
                bbox=BoundingBox.from_list(e["bbox"]),
            )
            for e in raw["entities"]
        )
        return cls(
            doc_id=raw["doc_id"],
            image_ref=raw["image_ref"],
            width=float(raw["width"]),
            height=float(raw["height"]),
            entities=entities,
            full_text=raw["full_text"],
            bbox_list=tuple(BoundingBox.from_list(b) for b in raw["bbox_list"]),
        )

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict(), ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> "ParsedDocument":
        return cls.from_json_dict(json.loads(line))


@dataclass(frozen=True)
class DocumentCollection:
    """A set of parsed documents with unique doc_ids."""

    collection_id: str
    documents: tuple[ParsedDocument, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        ids = [d.doc_id for d in self.documents]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate doc_id in collection: {dupes}")

    def get(self, doc_id: str) -> ParsedDocument:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)


def aggregate_text(entities: list[Entity]) -> tuple[str, list[BoundingBox]]:
    """Join entity contents with newlines, in order; return the box list.

    Raises EmptyDocument on an empty entity list.
    """
    if not entities:
        raise EmptyDocument("cannot aggregate an empty entity list")
    full_text = "\n".join(e.content for e in entities)
    bbox_list = [e.bbox for e in entities]
    return full_text, bbox_list


def validate_document(doc: ParsedDocument) -> list[str]:
    """Check every ParsedDocument invariant; violations are data, not errors."""
    violations: list[str] = []
    n = len(doc.entities)
    if n < 1:
        violations.append("document: no entities")
    if len(doc.bbox_list) != n:
        violations.append(
            f"document: |entities|={n} != |bbox_list|={len(doc.bbox_list)}"
        )
    seen_indices: set[int] = set()
    for pos, entity in enumerate(doc.entities):
        label = f"entity {pos}"
        if not entity.content.strip():
            violations.append(f"{label}: content empty after trimming")
        if entity.index in seen_indices:
            violations.append(f"{label}: duplicate index {entity.index}")
        seen_indices.add(entity.index)
        for v in entity.bbox.violations():
            violations.append(f"{label}: {v}")
        if not entity.bbox.violations():
            if (
                entity.bbox.x0 < 0
                or entity.bbox.y0 < 0
                or entity.bbox.x1 > doc.width
                or entity.bbox.y1 > doc.height
            ):
                violations.append(f"{label}: bbox outside page bounds")
    for pos in range(min(n, len(doc.bbox_list))):
        if doc.bbox_list[pos] != doc.entities[pos].bbox:
            violations.append(f"bbox_list[{pos}]: differs from entity bbox")
    if n >= 1:
        expected_text = "\n".join(e.content for e in doc.entities)
        if doc.full_text != expected_text:
            violations.append("full_text: not the newline join of entity contents")
    return violations


def save_documents_jsonl(docs: list[ParsedDocument] | tuple[ParsedDocument, ...], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(doc.to_json_line() + "\n")


def load_documents_jsonl(path) -> list[ParsedDocument]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                docs.append(ParsedDocument.from_json_line(line))
    return docs
