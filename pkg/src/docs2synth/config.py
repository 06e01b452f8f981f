"""Pipeline configuration: one config.yml drives every stage.

Loading fills defaults, rejects unknown keys with their full path, and
validates cross-references (provider names, served-retriever URL).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .agents import ProviderConfig
from .inference import LoopConfig
from .ingest import OCR_FORMATS, XYCutParams
from .retriever.training import TrainConfig
from .synthgen import GenerationConfig


class ConfigParseError(ValueError):
    """YAML syntax error; message carries line/column when available."""


class ConfigValidationError(ValueError):
    """Schema violation; message names the offending key path."""


@dataclass(frozen=True)
class CollectionSection:
    input_dir: str = ""
    ocr_format: str = "generic-jsonl"
    collection_id: str = "collection"
    xycut: XYCutParams = field(default_factory=XYCutParams)


@dataclass(frozen=True)
class ServerSection:
    host: str = "127.0.0.1"
    port: int = 8765


@dataclass(frozen=True)
class ReviewSection:
    auto_approve: bool = False
    bearer_token_env: str = ""
    server: ServerSection = field(default_factory=ServerSection)


@dataclass(frozen=True)
class StorageSection:
    root_dir: str = "runs/default"


@dataclass(frozen=True)
class InferenceSection:
    k: int = 3
    max_iterations: int = 2
    stop_on_stable_answer: bool = True
    answerer_provider: str = "answerer"
    retriever: str = "trained"
    served_url: str = ""

    def loop_config(self) -> LoopConfig:
        return LoopConfig(
            k=self.k,
            max_iterations=self.max_iterations,
            stop_on_stable_answer=self.stop_on_stable_answer,
            answerer_provider=self.answerer_provider,
            retriever=self.retriever,
        )


@dataclass(frozen=True)
class PipelineConfig:
    collection: CollectionSection
    providers: dict[str, ProviderConfig]
    generation: GenerationConfig
    training: TrainConfig
    inference: InferenceSection
    review: ReviewSection
    storage: StorageSection
    seed: int = 0

    def to_yaml_dict(self) -> dict:
        def plain(obj):
            if dataclasses.is_dataclass(obj):
                return {
                    f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                }
            if isinstance(obj, dict):
                return {k: plain(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            return obj

        out = plain(self)
        # provider names live as map keys, not values
        out["providers"] = {
            name: {k: v for k, v in plain(cfg).items() if k != "name"}
            for name, cfg in self.providers.items()
        }
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_yaml_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _require_mapping(raw, path: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigValidationError(f"{path}: expected a mapping, got {type(raw).__name__}")
    return raw


def _build_dataclass(cls, raw: dict, path: str, defaults: dict | None = None):
    """Construct a dataclass from a mapping, rejecting unknown keys."""
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = dict(defaults or {})
    for key, value in raw.items():
        if key not in known:
            raise ConfigValidationError(f"{path}.{key}: unknown key")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(f"{path}: {exc}") from exc


TOP_LEVEL_KEYS = (
    "collection",
    "providers",
    "generation",
    "training",
    "inference",
    "review",
    "storage",
    "seed",
)


def load_config(path) -> PipelineConfig:
    """Parse, default, and validate a config.yml."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigParseError(f"{path}: {exc.problem}{where}") from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    raw = _require_mapping(raw, "config")

    for key in raw:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigValidationError(f"{key}: unknown key")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigValidationError("seed: expected an integer")

    collection_raw = _require_mapping(raw.get("collection"), "collection")
    xycut_raw = _require_mapping(collection_raw.pop("xycut", None), "collection.xycut")
    xycut = _build_dataclass(XYCutParams, xycut_raw, "collection.xycut")
    collection = _build_dataclass(
        CollectionSection, collection_raw, "collection", defaults={"xycut": xycut}
    )
    if collection.ocr_format not in OCR_FORMATS:
        raise ConfigValidationError(
            f"collection.ocr_format: {collection.ocr_format!r} not one of {OCR_FORMATS}"
        )

    providers_raw = _require_mapping(raw.get("providers"), "providers")
    providers: dict[str, ProviderConfig] = {}
    for name, body in providers_raw.items():
        body = _require_mapping(body, f"providers.{name}")
        providers[name] = _build_dataclass(
            ProviderConfig, body, f"providers.{name}", defaults={"name": name}
        )

    generation = _build_dataclass(
        GenerationConfig,
        _require_mapping(raw.get("generation"), "generation"),
        "generation",
        defaults={"seed": seed},
    )
    training = _build_dataclass(
        TrainConfig,
        _require_mapping(raw.get("training"), "training"),
        "training",
        defaults={"seed": seed},
    )
    inference = _build_dataclass(
        InferenceSection,
        _require_mapping(raw.get("inference"), "inference"),
        "inference",
    )
    review_raw = _require_mapping(raw.get("review"), "review")
    server_raw = _require_mapping(review_raw.pop("server", None), "review.server")
    server = _build_dataclass(ServerSection, server_raw, "review.server")
    review = _build_dataclass(
        ReviewSection, review_raw, "review", defaults={"server": server}
    )
    storage = _build_dataclass(
        StorageSection, _require_mapping(raw.get("storage"), "storage"), "storage"
    )

    # a single configured provider may play every role
    if len(providers) == 1:
        only = next(iter(providers))
        if generation.generator_provider not in providers:
            generation = dataclasses.replace(generation, generator_provider=only)
        if generation.verifier_provider not in providers:
            generation = dataclasses.replace(generation, verifier_provider=only)
        if inference.answerer_provider not in providers:
            inference = dataclasses.replace(inference, answerer_provider=only)

    config = PipelineConfig(
        collection=collection,
        providers=providers,
        generation=generation,
        training=training,
        inference=inference,
        review=review,
        storage=storage,
        seed=seed,
    )
    _validate_references(config)
    return config


def _validate_references(config: PipelineConfig) -> None:
    refs = {
        "generation.generator_provider": config.generation.generator_provider,
        "generation.verifier_provider": config.generation.verifier_provider,
        "inference.answerer_provider": config.inference.answerer_provider,
    }
    for where, name in refs.items():
        if name not in config.providers:
            raise ConfigValidationError(
                f"{where}: provider {name!r} not defined under providers"
            )
    if config.inference.retriever == "served" and not config.inference.served_url:
        raise ConfigValidationError(
            "inference.served_url: required when inference.retriever is 'served'"
        )
    try:
        config.inference.loop_config()
    except ValueError as exc:
        raise ConfigValidationError(f"inference: {exc}") from exc
