#!/usr/bin/env python3
"""Generate the bundled 5-document toy corpus under data/toy/.

Pages are synthetic form-style documents: a title plus labeled fields.
OCR files are generic-jsonl with boxes given in scrambled order so the
pipeline's reading-order recovery actually does something. The mock
provider fixtures script a generator (question per target content), a
verifier that passes everything, and an answerer that answers correctly
exactly when the gold entity appears in the evidence block.

Deterministic: re-running reproduces identical bytes.
"""

import json
import random
import re
import sys
from pathlib import Path

from PIL import Image, ImageDraw

REPO_ROOT = Path(__file__).resolve().parents[1]
OUT_DIR = REPO_ROOT / "data" / "toy"

PAGE_W, PAGE_H = 420, 540

DOCS = {
    "form-a": [
        ("Form 603", None),
        ("Holder", "Acme Holdings Pty Ltd"),
        ("Shares", "Ordinary Shares"),
        ("Votes", "75,000"),
        ("Date", "2024-03-05"),
        ("Reference", "ACM-603-17"),
    ],
    "form-b": [
        ("Form 604", None),
        ("Holder", "Beacon Capital Group"),
        ("Shares", "Preference Shares"),
        ("Votes", "12,500"),
        ("Date", "2024-04-18"),
        ("Reference", "BCG-604-02"),
    ],
    "receipt-c": [
        ("Corner Cafe", None),
        ("Item", "flat white"),
        ("Qty", "2 cups"),
        ("Total", "$9.40"),
        ("Paid", "visa credit"),
        ("Receipt", "RC-2291"),
    ],
    "receipt-d": [
        ("Mart Express", None),
        ("Item", "rice 5kg"),
        ("Qty", "1 bag"),
        ("Total", "$18.95"),
        ("Paid", "cash payment"),
        ("Receipt", "MX-8841"),
    ],
    "exam-e": [
        ("Midterm Exam", None),
        ("Student", "Lin Haoran"),
        ("Class", "Grade 9 Section B"),
        ("Score", "87 points"),
        ("Subject", "Mathematics"),
        ("Teacher", "Ms Deng"),
    ],
}


def entity_rows(fields):
    rows = []
    y = 36
    for label, value in fields:
        text = label if value is None else f"{label}: {value}"
        rows.append((text, (30.0, float(y), 30.0 + 8.6 * len(text) + 18, float(y + 26))))
        y += 78
    return rows


def draw_page(rows, path):
    image = Image.new("RGB", (PAGE_W, PAGE_H), (252, 252, 250))
    draw = ImageDraw.Draw(image)
    draw.rectangle([8, 8, PAGE_W - 9, PAGE_H - 9], outline=(120, 120, 130))
    for text, (x0, y0, x1, y1) in rows:
        draw.rectangle([x0 - 4, y0 - 4, x1 + 4, y1 + 4], outline=(190, 190, 200))
        draw.text((x0 + 4, y0 + 7), text, fill=(20, 20, 30))
    image.save(path)


def write_ocr(rows, path, rng):
    scrambled = list(rows)
    rng.shuffle(scrambled)
    with open(path, "w", encoding="utf-8") as fh:
        for text, box in scrambled:
            fh.write(json.dumps({"text": text, "box": list(box)}) + "\n")


def answer_rules():
    """Answer correctly iff the gold entity line is in the evidence block."""
    rules = []
    for fields in DOCS.values():
        for label, value in fields:
            content = label if value is None else f"{label}: {value}"
            escaped = re.escape(content)
            rules.append(
                {
                    "match": rf"(?s)E\d+: {escaped}\n(?s:.*)Question: Which entry on this page reads {escaped}\?",
                    "regex": True,
                    "response": content,
                }
            )
    rules.append({"default": "unknown"})
    return rules


def main() -> int:
    pages_dir = OUT_DIR / "pages"
    fixtures_dir = OUT_DIR / "fixtures"
    pages_dir.mkdir(parents=True, exist_ok=True)
    fixtures_dir.mkdir(parents=True, exist_ok=True)

    rng = random.Random(20240305)
    for doc_id, fields in DOCS.items():
        rows = entity_rows(fields)
        draw_page(rows, pages_dir / f"{doc_id}.png")
        write_ocr(rows, pages_dir / f"{doc_id}.jsonl", rng)

    generator_rules = [
        {
            "match": r'exact answer is:\n"([^"]+)"',
            "regex": True,
            "response": r"Which entry on this page reads \1?",
        },
        {"default": ""},
    ]
    verifier_rules = [
        {
            "match": "relevant_and_clear",
            "response": '{"relevant_and_clear": true, "answer_valid": true, "rationale": "scripted pass"}',
        },
        {"default": "?"},
    ]
    for name, rules in (
        ("generator", generator_rules),
        ("verifier", verifier_rules),
        ("answerer", answer_rules()),
    ):
        with open(fixtures_dir / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for rule in rules:
                fh.write(json.dumps(rule) + "\n")

    config = f"""\
# Toy pipeline config: 5 synthetic pages, mock providers, hermetic end to end.
seed: 7

collection:
  input_dir: data/toy/pages
  ocr_format: generic-jsonl
  collection_id: toy

providers:
  generator:
    kind: mock
    base_url: data/toy/fixtures/generator.jsonl
  verifier:
    kind: mock
    base_url: data/toy/fixtures/verifier.jsonl
  answerer:
    kind: mock
    base_url: data/toy/fixtures/answerer.jsonl

generation:
  qa_per_document: 6
  entity_sampling: all
  min_answer_chars: 2

training:
  epochs: 10

inference:
  k: 3
  max_iterations: 2

review:
  auto_approve: true

storage:
  root_dir: runs/toy
"""
    (OUT_DIR / "config.yml").write_text(config, encoding="utf-8")
    print(f"toy corpus written to {OUT_DIR}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
