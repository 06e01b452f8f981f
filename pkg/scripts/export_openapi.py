#!/usr/bin/env python3
"""Regenerate the shipped OpenAPI description of the review API."""

import json
import sys
from pathlib import Path

from docs2synth.config import (
    CollectionSection,
    InferenceSection,
    PipelineConfig,
    ReviewSection,
    StorageSection,
)
from docs2synth.retriever.training import TrainConfig
from docs2synth.review_server import create_app
from docs2synth.synthgen import GenerationConfig

REPO_ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    config = PipelineConfig(
        collection=CollectionSection(input_dir="data/toy/pages"),
        providers={},
        generation=GenerationConfig(),
        training=TrainConfig(),
        inference=InferenceSection(),
        review=ReviewSection(),
        storage=StorageSection(root_dir="runs/schema-export"),
    )
    app = create_app(config)
    out = REPO_ROOT / "openapi.json"
    out.write_text(json.dumps(app.openapi(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
