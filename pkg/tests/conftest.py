from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
TOY_DIR = REPO_ROOT / "data" / "toy"


def toy_config_text(
    storage_root,
    auto_approve=True,
    epochs=4,
    retriever="trained",
    qa_per_document=6,
    seed=7,
    extra="",
):
    """Config pointing at the bundled toy corpus with a throwaway storage root."""
    fixtures = TOY_DIR / "fixtures"
    return f"""\
seed: {seed}
collection:
  input_dir: {TOY_DIR / 'pages'}
  ocr_format: generic-jsonl
  collection_id: toy
providers:
  generator:
    kind: mock
    base_url: {fixtures / 'generator.jsonl'}
  verifier:
    kind: mock
    base_url: {fixtures / 'verifier.jsonl'}
  answerer:
    kind: mock
    base_url: {fixtures / 'answerer.jsonl'}
generation:
  qa_per_document: {qa_per_document}
  entity_sampling: all
  min_answer_chars: 2
training:
  epochs: {epochs}
inference:
  k: 3
  max_iterations: 2
  retriever: {retriever}
review:
  auto_approve: {'true' if auto_approve else 'false'}
storage:
  root_dir: {storage_root}
{extra}"""


@pytest.fixture
def toy_config_path(tmp_path):
    """A ready toy config with storage under tmp_path/run."""
    path = tmp_path / "config.yml"
    path.write_text(toy_config_text(tmp_path / "run"))
    return path
