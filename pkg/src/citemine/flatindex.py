"""Exact flat inner-product index with top-k search and a latency benchmark.

Vectors are stored verbatim (float32, no quantization); search is
exhaustive and exact, using bounded selection instead of a full sort.
The benchmark times the encoding and retrieval phases separately per
iteration with a monotonic clock; whatever the supplied encoder callable
does is attributed to the encoding phase.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyPool

DEFAULT_BATCH_SIZES = (1, 10, 2000)
DEFAULT_ITERATIONS = {1: 100, 10: 100, 2000: 10}


@dataclass
class FlatIndex:
    vectors: np.ndarray  # n x d, float32
    doc_ids: list
    _id_rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # rank of each doc_id in ascending id order, for O(1) tie-breaks
        order = sorted(range(len(self.doc_ids)), key=lambda i: self.doc_ids[i])
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        self._id_rank = rank

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build(vectors, doc_ids: Sequence) -> FlatIndex:
    """Store vectors verbatim. Raises on empty or ragged input."""
    if isinstance(vectors, np.ndarray):
        if vectors.ndim != 2:
            raise DimensionMismatch("expected a 2-D array of vectors")
        mat = vectors.astype(np.float32)
    else:
        rows = [np.asarray(v, dtype=np.float32) for v in vectors]
        if not rows:
            raise EmptyPool("cannot build an empty index")
        dim = rows[0].shape[0]
        for r in rows:
            if r.shape != (dim,):
                raise DimensionMismatch("vectors have mixed dimensions")
        mat = np.stack(rows)
    if mat.shape[0] == 0:
        raise EmptyPool("cannot build an empty index")
    if mat.shape[0] != len(doc_ids):
        raise ValueError("doc_ids length must match vector count")
    return FlatIndex(vectors=mat, doc_ids=list(doc_ids))


def search(index: FlatIndex, queries, k: int) -> list[list[tuple]]:
    """Exact top-min(k, n) by inner product per query, descending score,
    score ties broken by ascending doc_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != index.dim:
        raise DimensionMismatch(
            f"query dimension {q.shape[1]} != index dimension {index.dim}")
    scores = q @ index.vectors.astype(np.float64).T  # m x n
    n = index.size
    k_eff = min(k, n)
    if k_eff < n:
        part = np.argpartition(-scores, k_eff - 1, axis=1)[:, :k_eff]
    results = []
    for m, row in enumerate(scores):
        if k_eff < n:
            # bounded selection, then widen to cover boundary score ties so
            # the doc_id tie-break stays exact
            kth_score = row[part[m]].min()
            candidates = np.nonzero(row >= kth_score)[0]
        else:
            candidates = np.arange(n)
        # lexsort: primary key is the last one (negated score), then id rank
        order = np.lexsort((index._id_rank[candidates], -row[candidates]))
        ranked = candidates[order[:k_eff]]
        ids = index.doc_ids
        results.append(list(zip((ids[i] for i in ranked), row[ranked].tolist())))
    return results


def percentile_nearest_rank(samples: Sequence[float], p: float) -> float:
    """Order statistic at ceil(p * (N - 1)), zero-based (no interpolation)."""
    if not samples:
        raise ValueError("no samples")
    ordered = sorted(samples)
    rank = math.ceil(p * (len(ordered) - 1))
    return ordered[rank]


@dataclass
class PhaseStats:
    avg_ms: float
    p99_ms: float
    samples_ms: list[float] = field(repr=False, default_factory=list)

    @classmethod
    def from_samples(cls, samples_ms: list[float]) -> "PhaseStats":
        return cls(
            avg_ms=sum(samples_ms) / len(samples_ms),
            p99_ms=percentile_nearest_rank(samples_ms, 0.99),
            samples_ms=samples_ms,
        )


@dataclass
class BatchReport:
    batch_size: int
    iterations: int
    encoding: PhaseStats
    retrieval: PhaseStats
    total: PhaseStats


@dataclass
class LatencyReport:
    batches: dict[int, BatchReport]
    k: int
    index_size: int
    hardware_note: str = ""

    def to_json(self) -> dict:
        def cell(stats: PhaseStats) -> dict:
            return {"avg": round(stats.avg_ms, 3), "p99": round(stats.p99_ms, 3)}

        return {
            "k": self.k,
            "index_size": self.index_size,
            "hardware_note": self.hardware_note,
            "batch_sizes": {
                str(b): {
                    "iterations": r.iterations,
                    "encoding_ms": cell(r.encoding),
                    "retrieval_ms": cell(r.retrieval),
                    "total_ms": cell(r.total),
                }
                for b, r in sorted(self.batches.items())
            },
        }


def iterations_for(batch_size: int) -> int:
    if batch_size in DEFAULT_ITERATIONS:
        return DEFAULT_ITERATIONS[batch_size]
    return 100 if batch_size < 1000 else 10


def bench(
    index: FlatIndex,
    encoder: Callable[[int], np.ndarray],
    batch_sizes: Sequence[int] = DEFAULT_BATCH_SIZES,
    k: int = 1000,
    iterations: int | None = None,
    hardware_note: str = "",
    clock: Callable[[], float] = time.perf_counter,
) -> LatencyReport:
    """Per batch size: time encoder(batch_size) and search() separately
    each iteration; report avg and p99 per phase and for their sum."""
    batches = {}
    for b in batch_sizes:
        n_iter = iterations if iterations is not None else iterations_for(b)
        enc_ms, ret_ms, tot_ms = [], [], []
        for _ in range(n_iter):
            t0 = clock()
            queries = encoder(b)
            t1 = clock()
            search(index, queries, k)
            t2 = clock()
            enc_ms.append((t1 - t0) * 1000.0)
            ret_ms.append((t2 - t1) * 1000.0)
            tot_ms.append(enc_ms[-1] + ret_ms[-1])
        batches[b] = BatchReport(
            batch_size=b,
            iterations=n_iter,
            encoding=PhaseStats.from_samples(enc_ms),
            retrieval=PhaseStats.from_samples(ret_ms),
            total=PhaseStats.from_samples(tot_ms),
        )
    return LatencyReport(batches=batches, k=k, index_size=index.size,
                         hardware_note=hardware_note)


class StubEncoder:
    """Deterministic stand-in encoder: seeded pseudo-random query batches.

    Keeps the benchmark runnable (and its timing shape testable) with no
    model server in the loop.
    """

    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self._rng = np.random.default_rng(seed)

    def __call__(self, batch_size: int) -> np.ndarray:
        raw = self._rng.standard_normal((batch_size, self.dim))
        return (raw / np.linalg.norm(raw, axis=1, keepdims=True)).astype(np.float32)


class FileQueryEncoder:
    """Cycles pre-encoded query vectors to the requested batch size;
    near-zero encode time, representing an offline-encoded workload."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float32)
        self._pos = 0

    def __call__(self, batch_size: int) -> np.ndarray:
        n = self.matrix.shape[0]
        idx = [(self._pos + i) % n for i in range(batch_size)]
        self._pos = (self._pos + batch_size) % n
        return self.matrix[idx]
