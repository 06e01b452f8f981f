"""Cross-entropy training of the entity scorer with decoupled weight decay.

The update path is single-threaded and iteration order is fixed, so a
given (seed, data) pair always produces bit-identical final weights.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..docmodel import ParsedDocument
from .features import FeatureConfig, extract_features
from .model import (
    N_PHI,
    PHI_FEATURE_NAMES,
    ScoringModel,
    build_phi_matrix,
    softmax,
    top_k,
)

logger = logging.getLogger(__name__)


class InsufficientData(ValueError):
    """Fewer samples/documents than the trainer can split."""


class NonFiniteLoss(ArithmeticError):
    """Loss or gradient left the finite range; training aborted."""


@dataclass(frozen=True)
class TrainingSample:
    """One supervision item: question, MLLM answer hypothesis, gold entity."""

    question: str
    initial_answer: str
    doc_id: str
    gold_index: int

    def to_json_dict(self) -> dict:
        return {
            "question": self.question,
            "initial_answer": self.initial_answer,
            "doc_id": self.doc_id,
            "gold_index": self.gold_index,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "TrainingSample":
        return cls(
            question=raw["question"],
            initial_answer=raw.get("initial_answer", ""),
            doc_id=raw["doc_id"],
            gold_index=int(raw["gold_index"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 20
    seed: int = 0
    val_fraction: float = 0.1
    hidden_width: int = 0
    eval_top_k: int = 3

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


class AdamW:
    """AdamW over a flat weight vector, weight decay decoupled from the moments."""

    def __init__(
        self,
        lr: float = 2e-5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, weights: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(weights)
            self.v = np.zeros_like(weights)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return weights * (1 - self.lr * self.weight_decay) - self.lr * m_hat / (
            np.sqrt(v_hat) + self.eps
        )


def cross_entropy_loss(logits: np.ndarray, gold_index: int) -> float:
    """-log softmax(logits)[gold], computed with max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    return float(log_z - shifted[gold_index])


def loss_and_grad(
    model: ScoringModel, phi: np.ndarray, gold_index: int
) -> tuple[float, np.ndarray]:
    """Per-sample loss and its analytic gradient w.r.t. the flat weights."""
    phi = np.asarray(phi, dtype=np.float64)
    logits = model.forward(phi)
    loss = cross_entropy_loss(logits, gold_index)
    dlogits = softmax(logits)
    dlogits[gold_index] -= 1.0
    if model.hidden_width <= 0:
        return loss, phi.T @ dlogits
    w1, b1, w2, _ = model.unpack_mlp()
    z1 = phi @ w1.T + b1
    h1 = np.tanh(z1)
    dw2 = h1.T @ dlogits
    db2 = dlogits.sum()
    dh1 = np.outer(dlogits, w2)
    dz1 = dh1 * (1.0 - h1 * h1)
    dw1 = dz1.T @ phi
    db1 = dz1.sum(axis=0)
    return loss, np.concatenate([dw1.ravel(), db1, dw2, [db2]])


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_top1: float
    val_topk: float


@dataclass
class TrainingReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    n_train: int = 0
    n_val: int = 0
    val_doc_ids: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "epochs": [vars(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "val_doc_ids": self.val_doc_ids,
        }


def split_by_document(
    samples: list[TrainingSample], doc_ids: list[str], val_fraction: float, seed: int
) -> tuple[list[TrainingSample], list[TrainingSample], list[str]]:
    """Hold out whole documents for validation; QA pairs from one page are
    correlated, so a sample-level split would leak."""
    unique_ids = sorted(set(doc_ids))
    if len(unique_ids) < 2:
        return list(samples), list(samples), unique_ids
    rng = np.random.default_rng(seed)
    shuffled = [unique_ids[i] for i in rng.permutation(len(unique_ids))]
    n_val = max(1, int(round(val_fraction * len(unique_ids))))
    n_val = min(n_val, len(unique_ids) - 1)
    val_ids = set(shuffled[:n_val])
    train = [s for s in samples if s.doc_id not in val_ids]
    val = [s for s in samples if s.doc_id in val_ids]
    return train, val, sorted(val_ids)


def _evaluate(
    model: ScoringModel,
    phis: list[np.ndarray],
    samples: list[TrainingSample],
    k: int,
) -> tuple[float, float, float]:
    losses, top1_hits, topk_hits = [], [], []
    for phi, sample in zip(phis, samples):
        logits = model.forward(phi)
        losses.append(cross_entropy_loss(logits, sample.gold_index))
        ranked = top_k(logits, k)
        top1_hits.append(1.0 if ranked[0] == sample.gold_index else 0.0)
        topk_hits.append(1.0 if sample.gold_index in ranked else 0.0)
    return (
        float(np.mean(losses)),
        float(np.mean(top1_hits)),
        float(np.mean(topk_hits)),
    )


def train(
    samples: list[TrainingSample],
    docs: dict[str, ParsedDocument],
    config: TrainConfig | None = None,
    feature_config: FeatureConfig | None = None,
) -> tuple[ScoringModel, TrainingReport]:
    """Mini-batch cross-entropy training; returns the best-validation model."""
    config = config or TrainConfig()
    feature_config = feature_config or FeatureConfig(feature_names=PHI_FEATURE_NAMES)
    if len(samples) < 2:
        raise InsufficientData(f"need >= 2 training samples, got {len(samples)}")
    missing = sorted({s.doc_id for s in samples} - set(docs))
    if missing:
        raise InsufficientData(f"samples reference unknown documents: {missing}")
    for s in samples:
        n = len(docs[s.doc_id].entities)
        if not 0 <= s.gold_index < n:
            raise InsufficientData(
                f"gold_index {s.gold_index} out of range for {s.doc_id} (n={n})"
            )

    train_samples, val_samples, val_doc_ids = split_by_document(
        samples, [s.doc_id for s in samples], config.val_fraction, config.seed
    )

    bundle_cache = {
        doc_id: extract_features(docs[doc_id], feature_config.d_t, feature_config.hash_seed)
        for doc_id in sorted({s.doc_id for s in samples})
    }

    def phi_for(sample: TrainingSample) -> np.ndarray:
        return build_phi_matrix(
            sample.question,
            sample.initial_answer,
            docs[sample.doc_id],
            d_t=feature_config.d_t,
            seed=feature_config.hash_seed,
            bundles=bundle_cache[sample.doc_id],
        )

    train_phis = [phi_for(s) for s in train_samples]
    val_phis = [phi_for(s) for s in val_samples]

    model = ScoringModel.initial(
        feature_config, hidden_width=config.hidden_width, seed=config.seed
    )
    optimizer = AdamW(
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    rng = np.random.default_rng(config.seed)
    report = TrainingReport(
        n_train=len(train_samples), n_val=len(val_samples), val_doc_ids=val_doc_ids
    )
    best_val_loss = np.inf
    best_weights = model.weights.copy()
    best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_samples))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros_like(model.weights)
            batch_loss = 0.0
            for i in batch:
                loss, g = loss_and_grad(model, train_phis[i], train_samples[i].gold_index)
                batch_loss += loss
                grad += g
            batch_loss /= len(batch)
            grad /= len(batch)
            if not np.isfinite(batch_loss) or not np.all(np.isfinite(grad)):
                raise NonFiniteLoss(
                    f"non-finite loss/gradient at epoch {epoch}, batch start {start}: "
                    f"loss={batch_loss}, |grad|_max={np.abs(grad).max() if grad.size else 0}"
                )
            model.weights = optimizer.step(model.weights, grad)
            epoch_losses.append(batch_loss)
        val_loss, val_top1, val_topk = _evaluate(
            model, val_phis, val_samples, config.eval_top_k
        )
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(epoch_losses)),
            val_loss=val_loss,
            val_top1=val_top1,
            val_topk=val_topk,
        )
        report.epochs.append(stats)
        logger.info(
            "epoch %d: train_loss=%.6f val_loss=%.6f val_top1=%.3f val_top%d=%.3f",
            epoch, stats.train_loss, val_loss, val_top1, config.eval_top_k, val_topk,
        )
        if val_loss < best_val_loss:
            best_val_loss = val_loss
            best_weights = model.weights.copy()
            best_epoch = epoch

    report.best_epoch = best_epoch
    best_model = ScoringModel(
        feature_config=feature_config,
        weights=best_weights,
        hidden_width=config.hidden_width,
        metadata={
            "best_epoch": best_epoch,
            "n_train": len(train_samples),
            "n_val": len(val_samples),
            "train_config": {
                "batch_size": config.batch_size,
                "learning_rate": config.learning_rate,
                "epochs": config.epochs,
                "seed": config.seed,
                "weight_decay": config.weight_decay,
                "hidden_width": config.hidden_width,
            },
        },
    )
    return best_model, report


def load_training_samples(path) -> list[TrainingSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(TrainingSample.from_json_dict(json.loads(line)))
    return samples


def save_training_samples(samples: list[TrainingSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json_dict(), ensure_ascii=False) + "\n")
