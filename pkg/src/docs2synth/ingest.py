"""OCR output normalization and XY-cut reading-order recovery.

Adapters turn PaddleOCR, Docling, or generic-jsonl files into RawOcrItems;
recursive XY-cut linearizes them into reading order before entity indices
are assigned.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .docmodel import (
    BoundingBox,
    DocumentCollection,
    EmptyDocument,
    Entity,
    ParsedDocument,
)

logger = logging.getLogger(__name__)

OCR_FORMATS = ("paddleocr", "docling", "generic-jsonl")
_OCR_EXTENSIONS = (".jsonl", ".json", ".txt")
_IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class FormatError(ValueError):
    """Malformed OCR payload; message names the offending record."""


class UnsupportedFormat(ValueError):
    """Unknown OCR format name."""


class EmptyCollection(ValueError):
    """No (image, OCR) pair produced a document."""


@dataclass(frozen=True)
class RawOcrItem:
    """One textual region from an OCR backend, box already axis-aligned."""

    text: str
    box: BoundingBox
    confidence: float | None = None


@dataclass(frozen=True)
class XYCutParams:
    """Knobs for the recursive XY-cut.

    min_gap_ratio is the gap threshold as a fraction of the median box
    height of the group being cut.
    """

    min_gap_ratio: float = 0.5
    max_depth: int = 12
    axis_order: str = "y-first"  # or "x-first"

    def __post_init__(self) -> None:
        if not 0 < self.min_gap_ratio <= 5:
            raise ValueError(f"min_gap_ratio must be in (0, 5], got {self.min_gap_ratio}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.axis_order not in ("y-first", "x-first"):
            raise ValueError(f"axis_order must be y-first or x-first, got {self.axis_order!r}")


@dataclass(frozen=True)
class IngestConfig:
    collection_id: str = "collection"
    ocr_format: str = "generic-jsonl"
    xycut: XYCutParams = field(default_factory=XYCutParams)
    max_workers: int = 4


def _polygon_to_box(points, where: str) -> BoundingBox:
    """Axis-aligned bounding rectangle of a point list."""
    try:
        xs = [float(p[0]) for p in points]
        ys = [float(p[1]) for p in points]
    except (TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"{where}: polygon points not numeric pairs") from exc
    if not xs:
        raise FormatError(f"{where}: empty polygon")
    box = BoundingBox(min(xs), min(ys), max(xs), max(ys))
    if box.violations():
        raise FormatError(f"{where}: degenerate box {box.as_list()}")
    return box


def _checked_box(raw, where: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise FormatError(f"{where}: box must be [x0, y0, x1, y1]")
    try:
        box = BoundingBox(float(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: box coordinates not numeric") from exc
    if box.violations():
        raise FormatError(f"{where}: invalid box {box.as_list()}: {box.violations()[0]}")
    return box


def _parse_generic_jsonl(payload: bytes) -> list[RawOcrItem]:
    items: list[RawOcrItem] = []
    offset = 0
    for lineno, raw_line in enumerate(payload.split(b"\n"), start=1):
        line = raw_line.strip()
        where = f"line {lineno} (byte offset {offset})"
        offset += len(raw_line) + 1
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{where}: invalid JSON: {exc.msg}") from exc
        if not isinstance(record, dict) or "text" not in record:
            raise FormatError(f"{where}: expected object with 'text' and 'box'")
        text = str(record["text"])
        if not text.strip():
            continue
        if "box" in record:
            box = _checked_box(record["box"], where)
        elif "polygon" in record:
            box = _polygon_to_box(record["polygon"], where)
        else:
            raise FormatError(f"{where}: expected object with 'text' and 'box'")
        conf = record.get("confidence")
        items.append(RawOcrItem(text, box, None if conf is None else float(conf)))
    return items


def _parse_paddleocr(payload: bytes) -> list[RawOcrItem]:
    """PaddleOCR results: predict-style dict, label-style records, or the
    classic nested [[points], (text, score)] list."""
    try:
        data = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"paddleocr payload is not valid JSON: {exc}") from exc

    items: list[RawOcrItem] = []

    def add(text, points, score, where):
        if not str(text).strip():
            return
        box = _polygon_to_box(points, where)
        items.append(RawOcrItem(str(text), box, None if score is None else float(score)))

    if isinstance(data, dict) and "rec_texts" in data:
        texts = data.get("rec_texts") or []
        polys = data.get("rec_polys") or data.get("rec_boxes") or []
        scores = data.get("rec_scores") or [None] * len(texts)
        if len(texts) != len(polys):
            raise FormatError(
                f"paddleocr: rec_texts ({len(texts)}) and rec_polys ({len(polys)}) differ in length"
            )
        for i, (text, poly) in enumerate(zip(texts, polys)):
            # rec_boxes may be flat [x0, y0, x1, y1]
            pts = poly if poly and isinstance(poly[0], (list, tuple)) else [poly[:2], poly[2:]]
            add(text, pts, scores[i] if i < len(scores) else None, f"record {i}")
        return items

    def looks_like_classic_record(x) -> bool:
        # [[x, y] * >=3 points, "text" | ["text", score]]
        if not isinstance(x, (list, tuple)) or len(x) != 2:
            return False
        points, tail = x
        if not isinstance(points, (list, tuple)) or len(points) < 3:
            return False
        if not all(isinstance(p, (list, tuple)) and len(p) == 2 for p in points):
            return False
        return isinstance(tail, str) or (
            isinstance(tail, (list, tuple)) and tail and isinstance(tail[0], str)
        )

    if isinstance(data, list):
        records = data
        # classic ocr() output nests records per page; take the first page
        if data and isinstance(data[0], list) and data[0] and looks_like_classic_record(data[0][0]):
            records = data[0]
        for i, rec in enumerate(records):
            where = f"record {i}"
            if isinstance(rec, dict):
                text = rec.get("transcription", rec.get("text"))
                points = rec.get("points", rec.get("text_region"))
                if text is None or points is None:
                    raise FormatError(f"{where}: expected 'transcription' and 'points'")
                add(text, points, rec.get("score", rec.get("confidence")), where)
            elif isinstance(rec, (list, tuple)) and len(rec) == 2:
                points, payload_part = rec
                if isinstance(payload_part, (list, tuple)) and payload_part:
                    text = payload_part[0]
                    score = payload_part[1] if len(payload_part) > 1 else None
                else:
                    text, score = payload_part, None
                add(text, points, score, where)
            else:
                raise FormatError(f"{where}: unrecognized paddleocr record shape")
        return items

    raise FormatError("paddleocr: unrecognized top-level payload shape")


def _parse_docling(payload: bytes) -> list[RawOcrItem]:
    """DoclingDocument JSON export; first page only, y flipped when the
    coordinate origin is BOTTOMLEFT."""
    try:
        data = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"docling payload is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "texts" not in data:
        raise FormatError("docling: expected object with a 'texts' array")

    page_heights: dict[int, float] = {}
    for key, page in (data.get("pages") or {}).items():
        size = (page or {}).get("size") or {}
        if "height" in size:
            page_heights[int(key)] = float(size["height"])

    items: list[RawOcrItem] = []
    for i, tx in enumerate(data["texts"]):
        where = f"texts[{i}]"
        text = tx.get("text", "")
        if not str(text).strip():
            continue
        provs = tx.get("prov") or []
        if not provs:
            continue
        prov = provs[0]
        page_no = int(prov.get("page_no", 1))
        if page_no != 1 and 1 in page_heights:
            continue
        raw = prov.get("bbox")
        if not isinstance(raw, dict):
            raise FormatError(f"{where}: missing bbox")
        try:
            l, t, r, b = (float(raw[k]) for k in ("l", "t", "r", "b"))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{where}: bbox needs numeric l/t/r/b") from exc
        if str(raw.get("coord_origin", "TOPLEFT")).upper() == "BOTTOMLEFT":
            height = page_heights.get(page_no)
            if height is None:
                raise FormatError(f"{where}: BOTTOMLEFT bbox but no page size")
            t, b = height - t, height - b
        box = BoundingBox(min(l, r), min(t, b), max(l, r), max(t, b))
        if box.violations():
            raise FormatError(f"{where}: degenerate box {box.as_list()}")
        conf = tx.get("confidence")
        items.append(RawOcrItem(str(text), box, None if conf is None else float(conf)))
    return items


def parse_ocr_output(payload: bytes, format: str) -> list[RawOcrItem]:
    """Normalize one OCR result file into RawOcrItems.

    Empty-text regions are dropped; polygons are reduced to their
    axis-aligned bounding rectangle.
    """
    if format == "generic-jsonl":
        return _parse_generic_jsonl(payload)
    if format == "paddleocr":
        return _parse_paddleocr(payload)
    if format == "docling":
        return _parse_docling(payload)
    raise UnsupportedFormat(f"unknown OCR format {format!r}; expected one of {OCR_FORMATS}")


def _axis_gaps(boxes: list[BoundingBox], axis: int) -> list[tuple[float, float]]:
    """Maximal empty intervals between merged box projections on an axis.

    axis 0 projects onto x, axis 1 onto y. Returned as (start, width).
    """
    if axis == 0:
        intervals = sorted((b.x0, b.x1) for b in boxes)
    else:
        intervals = sorted((b.y0, b.y1) for b in boxes)
    merged: list[tuple[float, float]] = []
    cur_start, cur_end = intervals[0]
    for start, end in intervals[1:]:
        if start <= cur_end:
            cur_end = max(cur_end, end)
        else:
            merged.append((cur_start, cur_end))
            cur_start, cur_end = start, end
    merged.append((cur_start, cur_end))
    return [
        (merged[i][1], merged[i + 1][0] - merged[i][1])
        for i in range(len(merged) - 1)
    ]


def _widest_gap(boxes: list[BoundingBox], axis: int, threshold: float) -> float | None:
    """Split coordinate of the widest qualifying gap, or None.

    Ties go to the gap with the smallest start coordinate.
    """
    best: tuple[float, float] | None = None  # (width, start)
    for start, width in _axis_gaps(boxes, axis):
        if width > threshold and (best is None or width > best[0]):
            best = (width, start)
    if best is None:
        return None
    return best[1]


def xy_cut_order(items: list[RawOcrItem], params: XYCutParams | None = None) -> list[int]:
    """Reading order of items as a permutation of 0..len-1.

    Recursively cuts at the widest empty gap wider than
    min_gap_ratio * median(box heights of the group), preferring the
    configured first axis but falling back to the other, alternating as
    it descends. Leaves are ordered by (y0, x0, original index).
    """
    if not items:
        raise EmptyDocument("xy_cut_order needs at least one item")
    params = params or XYCutParams()
    first_axis = 1 if params.axis_order == "y-first" else 0

    def order_group(indices: list[int], axis: int, depth: int) -> list[int]:
        if len(indices) <= 1:
            return indices
        boxes = [items[i].box for i in indices]
        if depth < params.max_depth:
            threshold = params.min_gap_ratio * float(
                np.median([b.height for b in boxes])
            )
            for try_axis in (axis, 1 - axis):
                split_at = _widest_gap(boxes, try_axis, threshold)
                if split_at is None:
                    continue
                near, far = [], []
                for i in indices:
                    end = items[i].box.x1 if try_axis == 0 else items[i].box.y1
                    (near if end <= split_at else far).append(i)
                child_axis = 1 - try_axis
                return order_group(near, child_axis, depth + 1) + order_group(
                    far, child_axis, depth + 1
                )
        return sorted(indices, key=lambda i: (items[i].box.y0, items[i].box.x0, i))

    return order_group(list(range(len(items))), first_axis, 0)


def build_document(
    doc_id: str,
    image_ref: str,
    width: float,
    height: float,
    items: list[RawOcrItem],
    params: XYCutParams | None = None,
) -> ParsedDocument:
    """Order items by XY-cut and assemble a ParsedDocument.

    Boxes exceeding the page bounds are clamped, one warning per box.
    """
    order = xy_cut_order(items, params)
    entities = []
    for new_index, item_index in enumerate(order):
        item = items[item_index]
        box = item.box
        clamped = BoundingBox(
            min(max(box.x0, 0.0), float(width)),
            min(max(box.y0, 0.0), float(height)),
            min(max(box.x1, 0.0), float(width)),
            min(max(box.y1, 0.0), float(height)),
        )
        if clamped != box:
            logger.warning(
                "%s: box %s clamped to page bounds %sx%s", doc_id, box.as_list(), width, height
            )
            box = clamped
        entities.append(Entity(index=new_index, content=item.text, bbox=box))
    return ParsedDocument.from_entities(doc_id, image_ref, width, height, entities)


def _find_pairs(input_dir: Path) -> tuple[list[tuple[Path, Path]], list[Path]]:
    images = sorted(
        p for p in input_dir.iterdir() if p.suffix.lower() in _IMAGE_EXTENSIONS
    )
    pairs, unpaired = [], []
    for image in images:
        ocr_path = next(
            (image.with_suffix(ext) for ext in _OCR_EXTENSIONS if image.with_suffix(ext).exists()),
            None,
        )
        if ocr_path is None:
            unpaired.append(image)
        else:
            pairs.append((image, ocr_path))
    return pairs, unpaired


def ingest_collection(input_dir, config: IngestConfig | None = None) -> DocumentCollection:
    """Build one ParsedDocument per (image, OCR file) pair in a directory.

    Pairing is by basename; images without an OCR file are skipped with a
    warning. Documents come back sorted by doc_id.
    """
    config = config or IngestConfig()
    if config.ocr_format not in OCR_FORMATS:
        raise UnsupportedFormat(
            f"unknown OCR format {config.ocr_format!r}; expected one of {OCR_FORMATS}"
        )
    input_dir = Path(input_dir)
    pairs, unpaired = _find_pairs(input_dir)
    for image in unpaired:
        logger.warning("no OCR file for image %s; skipped", image.name)

    def ingest_one(pair: tuple[Path, Path]) -> ParsedDocument | None:
        image_path, ocr_path = pair
        items = parse_ocr_output(ocr_path.read_bytes(), config.ocr_format)
        if not items:
            logger.warning("%s: OCR file has no usable items; skipped", ocr_path.name)
            return None
        with Image.open(image_path) as im:
            width, height = im.size
        return build_document(
            doc_id=image_path.stem,
            image_ref=str(image_path),
            width=width,
            height=height,
            items=items,
            params=config.xycut,
        )

    with ThreadPoolExecutor(max_workers=max(1, config.max_workers)) as pool:
        docs = [d for d in pool.map(ingest_one, pairs) if d is not None]
    docs.sort(key=lambda d: d.doc_id)
    if not docs:
        raise EmptyCollection(f"no (image, OCR) pairs found under {input_dir}")
    return DocumentCollection(collection_id=config.collection_id, documents=tuple(docs))
