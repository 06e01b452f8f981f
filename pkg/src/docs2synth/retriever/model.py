"""Entity scoring model: pairwise features, forward pass, top-k, checkpoints.

The scorer shares its weights across entities, so documents with any
number of candidates are handled by scoring each entity independently
and ranking the logits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..docmodel import ParsedDocument
from .features import (
    DEFAULT_DT,
    DEFAULT_HASH_SEED,
    FeatureBundle,
    FeatureConfig,
    char_trigrams,
    cosine,
    embed_text,
    extract_features,
    word_tokens,
)

CHECKPOINT_MAGIC = b"D2SCKPT1"
CHECKPOINT_VERSION = "1"

PHI_FEATURE_NAMES = (
    "cos_question_text",
    "cos_answer_text",
    "jaccard_question_tokens",
    "jaccard_answer_tokens",
    "trigram_overlap_answer",
    "geom_x0",
    "geom_y0",
    "geom_x1",
    "geom_y1",
    "geom_width",
    "geom_height",
    "geom_area",
    "geom_log_aspect",
    "position",
    "content_length_norm",
    "bias",
)
N_PHI = len(PHI_FEATURE_NAMES)


class ModelError(ValueError):
    """Weight/feature dimension mismatch or malformed model input."""


class VersionMismatch(ValueError):
    """Checkpoint written by an incompatible version."""


class CorruptCheckpoint(ValueError):
    """Checkpoint failed structural validation (magic, header, length)."""


@dataclass(frozen=True)
class PairAggregates:
    """String-derived context for scoring one entity against one QA pair."""

    question_tokens: frozenset[str]
    answer_tokens: frozenset[str]
    answer_trigrams: frozenset[str]
    content_tokens: frozenset[str]
    content_trigrams: frozenset[str]
    content_len_norm: float


def _set_jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 0.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def n_weights(hidden_width: int, n_features: int = N_PHI) -> int:
    if hidden_width <= 0:
        return n_features
    return hidden_width * n_features + hidden_width + hidden_width + 1


@dataclass
class ScoringModel:
    """Linear (or one-hidden-layer tanh) scorer over the pairwise features."""

    feature_config: FeatureConfig
    weights: np.ndarray
    hidden_width: int = 0
    version: str = CHECKPOINT_VERSION
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = n_weights(self.hidden_width)
        if self.weights.shape != (expected,):
            raise ModelError(
                f"expected {expected} weights for hidden_width={self.hidden_width}, "
                f"got shape {self.weights.shape}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ModelError("model weights contain non-finite values")

    @classmethod
    def initial(
        cls,
        feature_config: FeatureConfig | None = None,
        hidden_width: int = 0,
        seed: int = 0,
    ) -> "ScoringModel":
        """Fresh model: zero weights when linear, small seeded noise for the MLP."""
        config = feature_config or FeatureConfig(feature_names=PHI_FEATURE_NAMES)
        count = n_weights(hidden_width)
        if hidden_width <= 0:
            weights = np.zeros(count, dtype=np.float64)
        else:
            rng = np.random.default_rng(seed)
            weights = rng.normal(0.0, 0.1, size=count)
        return cls(feature_config=config, weights=weights, hidden_width=hidden_width)

    def unpack_mlp(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        h, f = self.hidden_width, N_PHI
        w = self.weights
        w1 = w[: h * f].reshape(h, f)
        b1 = w[h * f : h * f + h]
        w2 = w[h * f + h : h * f + 2 * h]
        b2 = float(w[-1])
        return w1, b1, w2, b2

    def forward(self, phi: np.ndarray) -> np.ndarray:
        """Logits for a (n, N_PHI) feature matrix (or a single row)."""
        phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
        if phi.shape[1] != N_PHI:
            raise ModelError(f"phi has {phi.shape[1]} features, expected {N_PHI}")
        if self.hidden_width <= 0:
            return phi @ self.weights
        w1, b1, w2, b2 = self.unpack_mlp()
        hidden = np.tanh(phi @ w1.T + b1)
        return hidden @ w2 + b2


def build_phi_row(
    q_vec: np.ndarray,
    a_vec: np.ndarray,
    bundle: FeatureBundle,
    aggregates: PairAggregates,
) -> np.ndarray:
    pair = np.array(
        [
            cosine(q_vec, bundle.text_vec),
            cosine(a_vec, bundle.text_vec),
            _set_jaccard(aggregates.question_tokens, aggregates.content_tokens),
            _set_jaccard(aggregates.answer_tokens, aggregates.content_tokens),
            _set_jaccard(aggregates.answer_trigrams, aggregates.content_trigrams),
        ],
        dtype=np.float64,
    )
    tail = np.array(
        [bundle.position, aggregates.content_len_norm, 1.0], dtype=np.float64
    )
    return np.concatenate([pair, bundle.geom_vec, tail])


def score_entity(
    model: ScoringModel,
    q_vec: np.ndarray,
    a_vec: np.ndarray,
    bundle: FeatureBundle,
    aggregates: PairAggregates,
) -> float:
    """Logit for one entity candidate."""
    if q_vec.shape != (model.feature_config.d_t,) or a_vec.shape != (model.feature_config.d_t,):
        raise ModelError(
            f"query vectors must have dimension {model.feature_config.d_t}"
        )
    phi = build_phi_row(q_vec, a_vec, bundle, aggregates)
    return float(model.forward(phi)[0])


def build_phi_matrix(
    question: str,
    initial_answer: str,
    doc: ParsedDocument,
    d_t: int = DEFAULT_DT,
    seed: int = DEFAULT_HASH_SEED,
    bundles: list[FeatureBundle] | None = None,
) -> np.ndarray:
    """(n, N_PHI) feature matrix for every entity of a document."""
    bundles = bundles if bundles is not None else extract_features(doc, d_t, seed)
    q_vec = embed_text(question, d_t, seed)
    a_vec = embed_text(initial_answer, d_t, seed)
    q_tokens = word_tokens(question)
    a_tokens = word_tokens(initial_answer)
    a_trigrams = frozenset(char_trigrams(initial_answer))
    max_len = max(len(e.content) for e in doc.entities)
    rows = []
    for entity, bundle in zip(doc.entities, bundles):
        aggregates = PairAggregates(
            question_tokens=q_tokens,
            answer_tokens=a_tokens,
            answer_trigrams=a_trigrams,
            content_tokens=word_tokens(entity.content),
            content_trigrams=frozenset(char_trigrams(entity.content)),
            content_len_norm=len(entity.content) / max_len if max_len else 0.0,
        )
        rows.append(build_phi_row(q_vec, a_vec, bundle, aggregates))
    return np.stack(rows)


def predict(
    model: ScoringModel,
    question: str,
    initial_answer: str,
    doc: ParsedDocument,
    bundles: list[FeatureBundle] | None = None,
) -> np.ndarray:
    """Per-entity logits; argmax is the predicted answer entity index."""
    if not doc.entities:
        raise ModelError("cannot predict on a document with no entities")
    phi = build_phi_matrix(
        question,
        initial_answer,
        doc,
        d_t=model.feature_config.d_t,
        seed=model.feature_config.hash_seed,
        bundles=bundles,
    )
    return model.forward(phi)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax, stable for logits far from zero."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def top_k(logits, k: int) -> list[int]:
    """Indices of the k highest logits, descending, ties to the lower index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("logits must be non-empty")
    order = np.argsort(-logits, kind="stable")
    return [int(i) for i in order[: min(k, logits.size)]]


def save_checkpoint(model: ScoringModel, path) -> None:
    """Self-describing container: magic, JSON header, LE float64 weights."""
    header = {
        "version": model.version,
        "feature_config": model.feature_config.to_json_dict(),
        "hidden_width": model.hidden_width,
        "n_weights": int(model.weights.size),
        "metadata": model.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(model.weights.astype("<f8").tobytes())


def load_checkpoint(path) -> ScoringModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpoint(f"{path}: bad magic or truncated file")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if len(blob) < offset + header_len:
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header: {exc}") from exc
    offset += header_len
    version = str(header.get("version"))
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: checkpoint version {version!r}, supported {CHECKPOINT_VERSION!r}"
        )
    count = int(header["n_weights"])
    expected_bytes = count * 8
    weight_blob = blob[offset:]
    if len(weight_blob) != expected_bytes:
        raise CorruptCheckpoint(
            f"{path}: expected {expected_bytes} weight bytes, found {len(weight_blob)}"
        )
    weights = np.frombuffer(weight_blob, dtype="<f8").astype(np.float64)
    return ScoringModel(
        feature_config=FeatureConfig.from_json_dict(header["feature_config"]),
        weights=weights,
        hidden_width=int(header.get("hidden_width", 0)),
        version=version,
        metadata=header.get("metadata", {}),
    )
