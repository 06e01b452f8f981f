"""Stage orchestration: ingest -> synth -> review -> train -> infer -> eval.

Stages are memoized on a content hash of their inputs plus their config
subsection, so re-runs never repeat LLM calls for unchanged inputs. The
manifest is written atomically after every stage transition.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import docmodel
from .config import PipelineConfig
from .evalharness import evaluate, save_eval_json
from .inference import load_traces_jsonl, rag_baseline, run_loop, save_traces_jsonl
from .ingest import IngestConfig, ingest_collection
from .retriever.features import FeatureConfig
from .retriever.model import PHI_FEATURE_NAMES, load_checkpoint, save_checkpoint
from .retriever.served import ServedRetriever
from .retriever.training import TrainingSample, save_training_samples, train
from .store import JsonlStore, latest_by_key
from .synthgen import QAPair, ReviewAction, apply_review, generate_for_document, load_prompt

logger = logging.getLogger(__name__)

STAGES = ("ingest", "synth", "review", "train", "infer", "eval")

# per-document generation and per-question inference fan out over this many
# workers; results are merged in input order so artifacts stay deterministic
STAGE_WORKERS = 4


class StageFailed(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ReviewPending(RuntimeError):
    """Human review required before later stages may run."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class StageState:
    status: str = "pending"  # pending | running | done | failed
    input_hash: str = ""
    artifacts: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    error: str = ""


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    created_at: str
    stages: dict[str, StageState] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "created_at": self.created_at,
            "stages": {name: vars(state) for name, state in self.stages.items()},
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "RunManifest":
        manifest = cls(
            run_id=raw["run_id"],
            config_hash=raw["config_hash"],
            created_at=raw["created_at"],
        )
        for name, state in raw.get("stages", {}).items():
            manifest.stages[name] = StageState(**state)
        return manifest


def manifest_path(root: Path) -> Path:
    return root / "manifest.json"


def save_manifest(manifest: RunManifest, root: Path) -> None:
    path = manifest_path(root)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(
        json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    os.replace(tmp, path)


def load_manifest(root: Path) -> RunManifest | None:
    path = manifest_path(root)
    if not path.exists():
        return None
    return RunManifest.from_json_dict(json.loads(path.read_text(encoding="utf-8")))


def _hash_parts(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(part)
        else:
            h.update(str(part).encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def _file_bytes(path: Path) -> bytes:
    return path.read_bytes() if path.exists() else b"<absent>"


def _section_json(obj) -> str:
    import dataclasses

    def plain(o):
        if dataclasses.is_dataclass(o):
            return {f.name: plain(getattr(o, f.name)) for f in dataclasses.fields(o)}
        if isinstance(o, (list, tuple)):
            return [plain(v) for v in o]
        if isinstance(o, dict):
            return {k: plain(v) for k, v in o.items()}
        return o

    return json.dumps(plain(obj), sort_keys=True)


def _provider_fixture_bytes(config: PipelineConfig, names) -> bytes:
    chunks = []
    for name in sorted(set(names)):
        provider = config.providers.get(name)
        if provider is not None and provider.kind == "mock":
            chunks.append(_file_bytes(Path(provider.base_url)))
    return b"\x00".join(chunks)


def _input_dir_digest(input_dir: Path) -> str:
    h = hashlib.sha256()
    if input_dir.is_dir():
        for path in sorted(input_dir.iterdir()):
            if path.is_file():
                h.update(path.name.encode("utf-8"))
                h.update(path.read_bytes())
    return h.hexdigest()


def compute_input_hash(stage: str, config: PipelineConfig, root: Path) -> str:
    if stage == "ingest":
        return _hash_parts(
            _input_dir_digest(Path(config.collection.input_dir)),
            _section_json(config.collection),
        )
    if stage == "synth":
        return _hash_parts(
            _file_bytes(root / "documents.jsonl"),
            _section_json(config.generation),
            load_prompt("generation", config.generation.prompts_dir),
            load_prompt("verification", config.generation.prompts_dir),
            _provider_fixture_bytes(
                config,
                [config.generation.generator_provider, config.generation.verifier_provider],
            ),
        )
    if stage == "review":
        return _hash_parts(
            _file_bytes(root / "qa.jsonl"), _section_json(config.review)
        )
    if stage == "train":
        return _hash_parts(
            _file_bytes(root / "qa.jsonl"),
            _file_bytes(root / "initial_answers.jsonl"),
            _section_json(config.training),
        )
    if stage == "infer":
        return _hash_parts(
            _file_bytes(root / "checkpoints" / "retriever.ckpt"),
            _file_bytes(root / "qa.jsonl"),
            _section_json(config.inference),
            _provider_fixture_bytes(config, [config.inference.answerer_provider]),
        )
    if stage == "eval":
        return _hash_parts(
            _file_bytes(root / "traces.jsonl"), _file_bytes(root / "qa.jsonl")
        )
    raise ValueError(f"unknown stage {stage!r}")


def _load_documents(root: Path) -> dict[str, docmodel.ParsedDocument]:
    docs = docmodel.load_documents_jsonl(root / "documents.jsonl")
    return {d.doc_id: d for d in docs}


def _latest_pairs(root: Path) -> list[QAPair]:
    store = JsonlStore(root)
    records = latest_by_key(store.scan("qa"), "qa_id")
    return [QAPair.from_json_dict(r) for r in records]


def _approved_pairs(root: Path) -> list[QAPair]:
    pairs = [
        p for p in _latest_pairs(root) if p.review_status == "approved" and p.verifier.passed
    ]
    return sorted(pairs, key=lambda p: p.qa_id)


def stage_ingest(config: PipelineConfig, root: Path) -> list[str]:
    collection = ingest_collection(
        config.collection.input_dir,
        IngestConfig(
            collection_id=config.collection.collection_id,
            ocr_format=config.collection.ocr_format,
            xycut=config.collection.xycut,
        ),
    )
    out = root / "documents.jsonl"
    docmodel.save_documents_jsonl(collection.documents, out)
    return [str(out)]


def stage_synth(config: PipelineConfig, root: Path) -> list[str]:
    docs = _load_documents(root)
    out = root / "qa.jsonl"
    out.unlink(missing_ok=True)
    store = JsonlStore(root)
    with ThreadPoolExecutor(max_workers=STAGE_WORKERS) as pool:
        per_doc = pool.map(
            lambda doc_id: generate_for_document(
                docs[doc_id], config.generation, config.providers
            ),
            sorted(docs),
        )
        pairs: list[QAPair] = [pair for doc_pairs in per_doc for pair in doc_pairs]
    store.append("qa", pairs)
    return [str(out)]


def stage_review(config: PipelineConfig, root: Path) -> list[str]:
    pairs = _latest_pairs(root)
    pending = [p for p in pairs if p.review_status == "pending"]
    out = root / "qa.jsonl"
    if not pending:
        return [str(out)]
    if not config.review.auto_approve:
        raise ReviewPending(
            f"{len(pending)} QA pair(s) pending review; run `docs2synth review-server` "
            f"or set review.auto_approve: true"
        )
    store = JsonlStore(root)
    approved = [apply_review(p, ReviewAction.approve(), "auto-approve") for p in pending]
    store.append("qa", approved)
    return [str(out)]


def _load_initial_answers(root: Path) -> dict[str, str]:
    path = root / "initial_answers.jsonl"
    answers: dict[str, str] = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                record = json.loads(line)
                answers[record["qa_id"]] = record.get("answer", "")
    return answers


def export_training_samples(pairs: list[QAPair], initial_answers: dict[str, str]) -> list[TrainingSample]:
    """Approved, verifier-passed pairs as training samples; cached MLLM
    answers fill initial_answer, empty string otherwise."""
    return [
        TrainingSample(
            question=p.question,
            initial_answer=initial_answers.get(p.qa_id, ""),
            doc_id=p.doc_id,
            gold_index=p.gold_entity_index,
        )
        for p in pairs
    ]


def stage_train(config: PipelineConfig, root: Path) -> list[str]:
    pairs = _approved_pairs(root)
    samples = export_training_samples(pairs, _load_initial_answers(root))
    train_path = root / "train.jsonl"
    save_training_samples(samples, train_path)
    docs = _load_documents(root)
    model, report = train(
        samples, docs, config.training, FeatureConfig(feature_names=PHI_FEATURE_NAMES)
    )
    ckpt_dir = root / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    ckpt_path = ckpt_dir / "retriever.ckpt"
    save_checkpoint(model, ckpt_path)
    report_path = root / "training_report.json"
    report_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return [str(train_path), str(ckpt_path), str(report_path)]


def stage_infer(config: PipelineConfig, root: Path) -> list[str]:
    pairs = _approved_pairs(root)
    docs = _load_documents(root)
    loop_config = config.inference.loop_config()
    artifacts_dir = root / "artifacts"
    strategy = config.inference.retriever
    model = None
    scorer = None
    if strategy == "trained":
        model = load_checkpoint(root / "checkpoints" / "retriever.ckpt")
    elif strategy == "served":
        scorer = ServedRetriever(config.inference.served_url).score
    def infer_one(pair):
        doc = docs[pair.doc_id]
        if strategy == "rag-baseline":
            return rag_baseline(
                pair.question,
                doc,
                loop_config.k,
                config.providers,
                answerer_provider=loop_config.answerer_provider,
                artifacts_dir=artifacts_dir,
            )
        return run_loop(
            pair.question,
            doc,
            model,
            loop_config,
            config.providers,
            artifacts_dir=artifacts_dir,
            scorer=scorer,
        )

    with ThreadPoolExecutor(max_workers=STAGE_WORKERS) as pool:
        traces = list(pool.map(infer_one, pairs))
    out = root / "traces.jsonl"
    save_traces_jsonl(traces, out)
    return [str(out)]


def stage_eval(config: PipelineConfig, root: Path) -> list[str]:
    traces = load_traces_jsonl(root / "traces.jsonl")
    pairs = _approved_pairs(root)
    result = evaluate(traces, pairs, k=config.inference.k)
    out = root / "eval.json"
    save_eval_json(result, out)
    return [str(out)]


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "synth": stage_synth,
    "review": stage_review,
    "train": stage_train,
    "infer": stage_infer,
    "eval": stage_eval,
}


def run_stages(config: PipelineConfig, stages=STAGES, force: bool = False) -> RunManifest:
    """Run the named stages in pipeline order with memoization."""
    root = Path(config.storage.root_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        from .config import ConfigValidationError

        raise ConfigValidationError(f"storage.root_dir: not writable: {exc}") from exc
    config_hash = config.config_hash()
    manifest = load_manifest(root)
    if manifest is None:
        manifest = RunManifest(
            run_id=f"{datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%S')}-{config_hash[:8]}",
            config_hash=config_hash,
            created_at=_now(),
        )
    manifest.config_hash = config_hash
    for name in STAGES:
        manifest.stages.setdefault(name, StageState())

    for name in STAGES:
        if name not in stages:
            continue
        state = manifest.stages[name]
        input_hash = compute_input_hash(name, config, root)
        artifacts_present = state.artifacts and all(Path(a).exists() for a in state.artifacts)
        if (
            not force
            and state.status == "done"
            and state.input_hash == input_hash
            and artifacts_present
        ):
            logger.info("stage %s: inputs unchanged, skipped", name)
            continue
        state.status = "running"
        state.started_at = _now()
        state.error = ""
        save_manifest(manifest, root)
        try:
            artifacts = STAGE_FUNCS[name](config, root)
        except ReviewPending as exc:
            state.status = "pending"
            state.finished_at = _now()
            save_manifest(manifest, root)
            logger.warning("stage review: %s", exc)
            return manifest
        except Exception as exc:
            state.status = "failed"
            state.error = str(exc)
            state.finished_at = _now()
            save_manifest(manifest, root)
            raise StageFailed(name, exc) from exc
        state.status = "done"
        state.input_hash = input_hash
        state.artifacts = artifacts
        state.finished_at = _now()
        save_manifest(manifest, root)
        logger.info("stage %s: done (%s)", name, ", ".join(artifacts))
    return manifest


def run_all(config: PipelineConfig, force: bool = False) -> RunManifest:
    return run_stages(config, STAGES, force=force)
