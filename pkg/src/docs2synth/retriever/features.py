"""Lightweight entity features: hashed text embeddings and box geometry.

Text goes through a signed character-trigram hashing embedding; geometry
is normalized to page-relative coordinates. Both are deterministic given
(d_t, hash seed), so feature extraction is reproducible across processes.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ..docmodel import ParsedDocument

DEFAULT_DT = 1024
DEFAULT_HASH_SEED = 0x5EED

_WORD_RE = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class FeatureConfig:
    d_t: int = DEFAULT_DT
    hash_seed: int = DEFAULT_HASH_SEED
    feature_names: tuple[str, ...] = field(default_factory=tuple)

    def to_json_dict(self) -> dict:
        return {
            "d_t": self.d_t,
            "hash_seed": self.hash_seed,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "FeatureConfig":
        return cls(
            d_t=int(raw["d_t"]),
            hash_seed=int(raw["hash_seed"]),
            feature_names=tuple(raw.get("feature_names", ())),
        )


@dataclass
class FeatureBundle:
    """Per-entity features: hashed text vector, geometry, reading position."""

    text_vec: np.ndarray
    geom_vec: np.ndarray
    position: float


def _normalize_text(s: str) -> str:
    return " ".join(s.lower().split())


def word_tokens(s: str) -> frozenset[str]:
    return frozenset(_WORD_RE.findall(s.lower()))


def char_trigrams(s: str) -> list[str]:
    """Sliding character trigrams of the normalized string.

    Non-empty strings shorter than three characters yield themselves as a
    single token so no non-empty content embeds to the zero vector.
    """
    norm = _normalize_text(s)
    if not norm:
        return []
    if len(norm) < 3:
        return [norm]
    return [norm[i : i + 3] for i in range(len(norm) - 2)]


def _hash_token(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    return int.from_bytes(digest, "little")


def embed_text(s: str, d_t: int = DEFAULT_DT, seed: int = DEFAULT_HASH_SEED) -> np.ndarray:
    """Signed hashed trigram embedding, L2-normalized when nonzero."""
    vec = np.zeros(d_t, dtype=np.float64)
    for token in char_trigrams(s):
        h = _hash_token(token, seed)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[h % d_t] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    vec.setflags(write=False)
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of already-normalized vectors; 0 when either is zero."""
    return float(np.dot(a, b))


def geometry_features(bbox, page_width: float, page_height: float) -> np.ndarray:
    w = bbox.width
    h = bbox.height
    geom = np.array(
        [
            bbox.x0 / page_width,
            bbox.y0 / page_height,
            bbox.x1 / page_width,
            bbox.y1 / page_height,
            w / page_width,
            h / page_height,
            bbox.area / (page_width * page_height),
            math.log(w / h),
        ],
        dtype=np.float64,
    )
    geom.setflags(write=False)
    return geom


def extract_features(
    doc: ParsedDocument, d_t: int = DEFAULT_DT, seed: int = DEFAULT_HASH_SEED
) -> list[FeatureBundle]:
    """One FeatureBundle per entity, in entity order."""
    n = len(doc.entities)
    bundles = []
    for entity in doc.entities:
        bundles.append(
            FeatureBundle(
                text_vec=embed_text(entity.content, d_t, seed),
                geom_vec=geometry_features(entity.bbox, doc.width, doc.height),
                position=entity.index / n,
            )
        )
    return bundles
