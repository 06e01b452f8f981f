"""Answer metrics and strategy comparison over inference traces.

Exact match, ANLS (normalized Levenshtein with a 0.5 threshold), and
retriever hit@k, aggregated as plain means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

_PUNCTUATION = ".,;:!?\"'"


class UnmatchedTrace(ValueError):
    """A trace's (doc_id, question) maps to no known QA pair."""


class QuestionSetMismatch(ValueError):
    """Compared results do not cover the same question set."""


@dataclass(frozen=True)
class QuestionScore:
    qa_id: str
    em: float
    nls: float
    hit: float


@dataclass(frozen=True)
class EvalResult:
    exact_match: float
    anls: float
    retriever_hit_at_k: float
    per_question: tuple[QuestionScore, ...]
    k: int = 0

    def to_json_dict(self) -> dict:
        return {
            "exact_match": self.exact_match,
            "anls": self.anls,
            "retriever_hit_at_k": self.retriever_hit_at_k,
            "k": self.k,
            "per_question": [vars(q) for q in self.per_question],
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "EvalResult":
        return cls(
            exact_match=float(raw["exact_match"]),
            anls=float(raw["anls"]),
            retriever_hit_at_k=float(raw["retriever_hit_at_k"]),
            per_question=tuple(QuestionScore(**q) for q in raw["per_question"]),
            k=int(raw.get("k", 0)),
        )


def normalize_answer(s: str) -> str:
    """Lowercase, drop . , ; : ! ? \" ' and collapse whitespace."""
    lowered = s.lower()
    cleaned = "".join(ch for ch in lowered if ch not in _PUNCTUATION)
    return " ".join(cleaned.split())


def levenshtein(a: str, b: str) -> int:
    """Edit distance, iterative two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def anls_score(pred: str, gold: str, threshold: float = 0.5) -> float:
    """Normalized Levenshtein similarity, zeroed below the threshold."""
    p = normalize_answer(pred)
    g = normalize_answer(gold)
    if not p and not g:
        return 1.0
    longest = max(len(p), len(g))
    nls = 1.0 - levenshtein(p, g) / longest
    return nls if nls >= threshold else 0.0


def evaluate(traces, qa_pairs, k: int = 3) -> EvalResult:
    """Score traces against their QA pairs (matched on doc_id + question)."""
    by_key = {(p.doc_id, p.question): p for p in qa_pairs}
    scores = []
    for trace in traces:
        pair = by_key.get((trace.doc_id, trace.question))
        if pair is None:
            raise UnmatchedTrace(
                f"no QA pair for doc {trace.doc_id!r} question {trace.question!r}"
            )
        em = 1.0 if normalize_answer(trace.final_answer) == normalize_answer(pair.answer) else 0.0
        nls = anls_score(trace.final_answer, pair.answer)
        last = trace.iterations[-1]
        hit = 1.0 if pair.gold_entity_index in last.topk_indices else 0.0
        scores.append(QuestionScore(qa_id=pair.qa_id, em=em, nls=nls, hit=hit))
    n = len(scores)
    if n == 0:
        return EvalResult(0.0, 0.0, 0.0, (), k=k)
    return EvalResult(
        exact_match=sum(s.em for s in scores) / n,
        anls=sum(s.nls for s in scores) / n,
        retriever_hit_at_k=sum(s.hit for s in scores) / n,
        per_question=tuple(scores),
        k=k,
    )


@dataclass(frozen=True)
class Comparison:
    names: tuple[str, ...]
    metrics: dict
    per_question: tuple[dict, ...]
    table: str

    def to_json_dict(self) -> dict:
        return {
            "names": list(self.names),
            "metrics": self.metrics,
            "per_question": [dict(q) for q in self.per_question],
        }


def compare_strategies(results: dict[str, EvalResult]) -> Comparison:
    """Side-by-side metric table plus per-question win/loss, same question set."""
    if len(results) < 2:
        raise ValueError("need at least two named results to compare")
    names = tuple(sorted(results))
    reference = {q.qa_id for q in results[names[0]].per_question}
    for name in names[1:]:
        other = {q.qa_id for q in results[name].per_question}
        if other != reference:
            raise QuestionSetMismatch(
                f"{names[0]} and {name} evaluate different question sets"
            )

    metric_names = ("exact_match", "anls", "retriever_hit_at_k")
    metrics = {
        m: {name: getattr(results[name], m) for name in names} for m in metric_names
    }
    baseline = names[0]
    for m in metric_names:
        metrics[m]["delta_vs_" + baseline] = {
            name: metrics[m][name] - metrics[m][baseline] for name in names[1:]
        }

    scores_by_name = {
        name: {q.qa_id: q for q in results[name].per_question} for name in names
    }
    per_question = []
    for qa_id in sorted(reference):
        row = {"qa_id": qa_id}
        best_value, best_names = None, []
        for name in names:
            q = scores_by_name[name][qa_id]
            row[name] = {"em": q.em, "nls": q.nls, "hit": q.hit}
            value = (q.em, q.nls)
            if best_value is None or value > best_value:
                best_value, best_names = value, [name]
            elif value == best_value:
                best_names.append(name)
        row["winner"] = best_names[0] if len(best_names) == 1 else "tie"
        per_question.append(row)

    header = "| metric | " + " | ".join(names) + " |"
    divider = "|---" * (len(names) + 1) + "|"
    lines = [header, divider]
    for m in metric_names:
        cells = " | ".join(f"{metrics[m][name]:.4f}" for name in names)
        lines.append(f"| {m} | {cells} |")
    wins = {name: sum(1 for r in per_question if r["winner"] == name) for name in names}
    ties = sum(1 for r in per_question if r["winner"] == "tie")
    lines.append("")
    lines.append(
        "wins: "
        + ", ".join(f"{name}={wins[name]}" for name in names)
        + f", ties={ties} (of {len(per_question)})"
    )
    return Comparison(
        names=names,
        metrics=metrics,
        per_question=tuple(per_question),
        table="\n".join(lines),
    )


def save_eval_json(result: EvalResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_eval_json(path) -> EvalResult:
    with open(path, "r", encoding="utf-8") as fh:
        return EvalResult.from_json_dict(json.load(fh))
