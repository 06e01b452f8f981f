import pytest
import yaml

from docs2synth.config import (
    ConfigParseError,
    ConfigValidationError,
    load_config,
)

MINIMAL = """\
collection:
  input_dir: data/pages
providers:
  llm:
    kind: mock
    base_url: fixtures/llm.jsonl
"""


def write(tmp_path, text, name="config.yml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadConfig:
    def test_minimal_config_fills_defaults(self, tmp_path):
        config = load_config(write(tmp_path, MINIMAL))
        assert config.inference.k == 3
        assert config.generation.qa_per_document == 10
        assert config.training.batch_size == 16
        assert config.training.learning_rate == 2e-5
        assert config.training.weight_decay == 0.01
        assert config.inference.max_iterations == 2
        # single provider plays every role
        assert config.generation.generator_provider == "llm"
        assert config.generation.verifier_provider == "llm"
        assert config.inference.answerer_provider == "llm"

    def test_unknown_top_level_key(self, tmp_path):
        path = write(tmp_path, MINIMAL + "generaton:\n  qa_per_document: 5\n")
        with pytest.raises(ConfigValidationError, match="generaton"):
            load_config(path)

    def test_unknown_nested_key_names_path(self, tmp_path):
        path = write(tmp_path, MINIMAL + "generation:\n  qa_per_documnt: 5\n")
        with pytest.raises(ConfigValidationError, match="generation.qa_per_documnt"):
            load_config(path)

    def test_missing_provider_reference(self, tmp_path):
        text = MINIMAL + (
            "  other:\n    kind: mock\n    base_url: fixtures/other.jsonl\n"
            "generation:\n  generator_provider: nope\n"
        )
        with pytest.raises(ConfigValidationError, match="nope"):
            load_config(write(tmp_path, text))

    def test_parse_error_names_position(self, tmp_path):
        path = write(tmp_path, "collection: [unclosed\n")
        with pytest.raises(ConfigParseError, match="line"):
            load_config(path)

    def test_bad_ocr_format(self, tmp_path):
        text = MINIMAL.replace("input_dir: data/pages", "input_dir: data/pages\n  ocr_format: exotic")
        with pytest.raises(ConfigValidationError, match="ocr_format"):
            load_config(write(tmp_path, text))

    def test_served_requires_url(self, tmp_path):
        text = MINIMAL + "inference:\n  retriever: served\n"
        with pytest.raises(ConfigValidationError, match="served_url"):
            load_config(write(tmp_path, text))

    def test_seed_threaded_to_sections(self, tmp_path):
        config = load_config(write(tmp_path, "seed: 41\n" + MINIMAL))
        assert config.seed == 41
        assert config.generation.seed == 41
        assert config.training.seed == 41

    def test_provider_values_parsed(self, tmp_path):
        text = MINIMAL + (
            "  remote:\n"
            "    kind: openai-compatible\n"
            "    base_url: http://llm.internal/v1\n"
            "    api_key_env: LLM_KEY\n"
            "    model: big-model\n"
            "    temperature: 0.3\n"
            "    max_retries: 4\n"
            "generation:\n  generator_provider: remote\n  verifier_provider: remote\n"
            "inference:\n  answerer_provider: remote\n"
        )
        config = load_config(write(tmp_path, text))
        remote = config.providers["remote"]
        assert remote.name == "remote"
        assert remote.model == "big-model"
        assert remote.max_retries == 4

    def test_round_trip_equal(self, tmp_path):
        first = load_config(write(tmp_path, MINIMAL + "seed: 3\n"))
        dumped = yaml.safe_dump(first.to_yaml_dict())
        second = load_config(write(tmp_path, dumped, name="again.yml"))
        assert first == second

    def test_invalid_section_value(self, tmp_path):
        text = MINIMAL + "inference:\n  k: 0\n"
        with pytest.raises(ConfigValidationError, match="inference"):
            load_config(write(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.yml")
