"""Ranking metrics over TREC-style qrels/run data, plus the contrastive
ranking loss used as a value-level dataset diagnostic.

Gain is the exponential 2^rel - 1 variant. Queries without any positive
judgment are excluded from means (and surfaced via `skipped`), matching
standard trec-eval behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, NoJudgedQueries
from .vectorspace import Embedding, EmbeddingProvider


@dataclass
class Qrels:
    """Relevance judgments: (query_id, doc_id) -> non-negative grade."""

    judgments: dict[tuple[str, str], int]

    def grades_for(self, qid: str) -> dict[str, int]:
        return {d: g for (q, d), g in self.judgments.items() if q == qid}

    def judged_queries(self) -> list[str]:
        """Queries holding at least one positive-grade judgment, sorted."""
        positive = {q for (q, _d), g in self.judgments.items() if g > 0}
        return sorted(positive)

    def skipped_queries(self) -> list[str]:
        """Queries present in the judgments but with no positive grade."""
        all_q = {q for (q, _d) in self.judgments}
        return sorted(all_q - set(self.judged_queries()))


@dataclass
class RunRanking:
    """Per-query ranked (doc_id, score) lists, scores non-increasing."""

    rankings: dict[str, list[tuple[str, float]]]

    @classmethod
    def from_scored(cls, scored: Mapping[str, Iterable[tuple[str, float]]]) -> "RunRanking":
        """Sort by descending score; score ties resolved by doc_id ascending."""
        rankings = {}
        for qid, docs in scored.items():
            docs = list(docs)
            seen = set()
            for d, _s in docs:
                if d in seen:
                    raise ValueError(f"duplicate doc_id {d!r} for query {qid!r}")
                seen.add(d)
            rankings[qid] = sorted(docs, key=lambda t: (-t[1], t[0]))
        return cls(rankings=rankings)


def _dcg(gains: Sequence[int], k: int) -> float:
    return sum((2**rel - 1) / math.log2(i + 1)
               for i, rel in enumerate(gains[:k], start=1))


def _per_query_scores(run: RunRanking, qrels: Qrels, k: int, metric: str) -> dict[str, float]:
    judged = qrels.judged_queries()
    if not judged:
        raise NoJudgedQueries("every query lacks a positive judgment")
    scores = {}
    for qid in judged:
        grades = qrels.grades_for(qid)
        ranking = run.rankings.get(qid, [])
        if metric == "ndcg":
            ideal = _dcg(sorted(grades.values(), reverse=True), k)
            got = _dcg([grades.get(d, 0) for d, _s in ranking], k)
            scores[qid] = got / ideal
        else:
            scores[qid] = float(any(grades.get(d, 0) >= 1 for d, _s in ranking[:k]))
    return scores


def ndcg_at_k(run: RunRanking, qrels: Qrels, k: int) -> float:
    """Mean nDCG@k over queries with positive judgments.

    Per query: DCG@k = sum_{i=1..k} (2^rel_i - 1) / log2(i + 1), divided by
    the ideal DCG@k from the qrels grades. Judged queries absent from the
    run score 0.
    """
    scores = _per_query_scores(run, qrels, k, "ndcg")
    return sum(scores.values()) / len(scores)


def success_at_k(run: RunRanking, qrels: Qrels, k: int) -> float:
    """Fraction of judged queries with a grade >= 1 doc in the top k."""
    scores = _per_query_scores(run, qrels, k, "success")
    return sum(scores.values()) / len(scores)


@dataclass
class LossInputs:
    q: Embedding
    d_pos: Embedding
    d_negs: list[Embedding]


def mnr_loss(inputs: LossInputs) -> float:
    """-log( exp(q.d+) / (exp(q.d+) + sum_i exp(q.d_i-)) ).

    Computed with a max shift; the shift cancels, so the value is exact.
    """
    if not inputs.d_negs:
        raise ValueError("at least one negative required")
    q = np.asarray(inputs.q.values, dtype=np.float64)
    docs = [inputs.d_pos] + list(inputs.d_negs)
    for d in docs:
        if d.values.shape != inputs.q.values.shape:
            raise DimensionMismatch(
                f"dimension {d.values.shape[0]} != query {q.shape[0]}")
    logits = np.array([float(np.dot(q, np.asarray(d.values, np.float64)))
                       for d in docs])
    shift = logits.max()
    log_denominator = shift + math.log(np.exp(logits - shift).sum())
    return float(log_denominator - logits[0])


def triplet_accuracy(triplets, provider: EmbeddingProvider) -> float:
    """Fraction of triplets where the query scores its positive strictly
    above every negative; score ties count as failures."""
    total = hits = 0
    for t in triplets:
        embs = provider.embed_batch([t.query, t.positive, *t.negatives])
        q = np.asarray(embs[0].values, dtype=np.float64)
        pos_sim = float(np.dot(q, embs[1].values.astype(np.float64)))
        neg_sims = [float(np.dot(q, e.values.astype(np.float64))) for e in embs[2:]]
        total += 1
        if pos_sim > max(neg_sims):
            hits += 1
    return hits / total if total else 0.0


# ---------------------------------------------------------------------------
# TREC-style file formats
# ---------------------------------------------------------------------------

def load_qrels(path) -> Qrels:
    """Whitespace-separated "query_id 0 doc_id grade" lines."""
    judgments: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            qid, _ignored, did, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise ValueError(f"line {lineno}: grade {grade!r} is not an integer")
            if g < 0:
                raise ValueError(f"line {lineno}: negative grade")
            judgments[(qid, did)] = g
    return Qrels(judgments=judgments)


def load_run(path) -> RunRanking:
    """Whitespace-separated "query_id Q0 doc_id rank score tag" lines.

    The stored rank field is ignored; ordering is recomputed from scores
    with doc_id-ascending tie-breaks so results are deterministic.
    """
    scored: dict[str, list[tuple[str, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
            qid, _q0, did, _rank, score, _tag = parts
            try:
                s = float(score)
            except ValueError:
                raise ValueError(f"line {lineno}: score {score!r} is not a number")
            scored.setdefault(qid, []).append((did, s))
    try:
        return RunRanking.from_scored(scored)
    except ValueError as exc:
        raise ValueError(str(exc))
