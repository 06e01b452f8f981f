"""Docs2Synth: annotation-free document understanding.

Ingests scanned-document OCR output, recovers reading order, synthesizes
and verifies QA pairs with LLM agents, trains a lightweight entity
retriever on the synthetic corpus, and serves retrieval-guided iterative
inference.
"""

__version__ = "0.1.0"
