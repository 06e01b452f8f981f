"""Adapter for an externally served retriever.

Lets a transformer-scale scoring model run out of process behind the
same interface as the built-in scorer: POST /score with the question,
answer hypothesis, and serialized document; the response carries one
logit per entity.
"""

from __future__ import annotations

import numpy as np
import requests

from ..docmodel import ParsedDocument
from .model import ModelError


class ServedRetriever:
    def __init__(self, base_url: str, timeout_s: int = 60):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def score(self, question: str, answer: str, doc: ParsedDocument) -> np.ndarray:
        """Per-entity logits from the remote scorer."""
        try:
            response = requests.post(
                f"{self.base_url}/score",
                json={
                    "question": question,
                    "answer": answer,
                    "doc": doc.to_json_dict(),
                },
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ModelError(f"served retriever unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ModelError(
                f"served retriever returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            logits = np.asarray(response.json()["logits"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ModelError(f"served retriever response malformed: {exc}") from exc
        if logits.shape != (len(doc.entities),):
            raise ModelError(
                f"served retriever returned {logits.shape[0] if logits.ndim else 0} logits "
                f"for {len(doc.entities)} entities"
            )
        return logits
