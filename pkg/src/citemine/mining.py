"""Hard-negative mining via diverse stochastic traversal of the semantic graph.

For each record: embed the candidate pool (1-hop docs first, then 2-hop),
build the pairwise cosine graph, start one traversal from each of the
n_paths 1-hop documents most similar to the query, and walk each path up
to l_path nodes. Every step samples the next node from the k_sample most
similar unvisited neighbors, with probability proportional to similarity
(floored at 1e-6; uniform when no candidate similarity is positive). A
single visited set is shared by all paths, and one uniformly random
unvisited document is appended at the end for robustness.

Each record gets its own RNG derived from the global seed and its PMID,
so emission order and parallelism never change the output.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol, Sequence

import numpy as np

from .errors import EmptyPool, ProviderError, SchemaError
from .neighborhood import CitationRecord
from .pubmed import Pmid, canonical_pmid
from .vectorspace import (
    Embedding,
    EmbeddingProvider,
    SimilarityGraph,
    build_similarity_graph,
    query_similarities,
)


@dataclass(frozen=True)
class MiningConfig:
    n_paths: int = 3
    l_path: int = 3
    k_sample: int = 5
    seed: int = 0
    add_random_negative: bool = True

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.l_path < 1:
            raise ValueError("l_path must be >= 1")
        if self.k_sample < 1:
            raise ValueError("k_sample must be >= 1")

    def max_negatives(self) -> int:
        return self.n_paths * self.l_path + (1 if self.add_random_negative else 0)


@dataclass
class TrainingTriplet:
    query: str
    positive: str
    negatives: list[str]
    positive_pmid: Pmid
    negative_pmids: list[Pmid]

    def check(self, cfg: MiningConfig | None = None) -> None:
        if not self.negatives:
            raise ValueError("negatives is empty")
        if len(set(self.negative_pmids)) != len(self.negative_pmids):
            raise ValueError("duplicate negatives")
        if self.positive_pmid in self.negative_pmids:
            raise ValueError("positive appears among negatives")
        if cfg is not None and len(self.negatives) > cfg.max_negatives():
            raise ValueError("too many negatives")


class QueryProvider(Protocol):
    """Supplies the synthetic query for a record's positive abstract."""

    def query_for(self, pmid: Pmid, abstract: str) -> str: ...


class FileQueryProvider:
    """TSV file "pmid<TAB>query", one line per record."""

    def __init__(self, path):
        self._table: dict[int, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t", 1)
                if len(parts) != 2 or not parts[0].strip().isdigit():
                    raise ValueError(f"line {lineno}: expected 'pmid<TAB>query'")
                self._table[int(parts[0])] = parts[1]

    def query_for(self, pmid: Pmid, abstract: str) -> str:
        if pmid not in self._table:
            raise KeyError(f"no query stored for pmid {pmid}")
        return self._table[pmid]


class HTTPQueryProvider:
    """Client for the sidecar /generate_query contract."""

    def __init__(self, base_url: str, timeout: float = 120.0, session=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def query_for(self, pmid: Pmid, abstract: str) -> str:
        resp = self._session.post(
            self.base_url + "/generate_query", json={"text": abstract},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["query"]


def record_rng(seed: int, pmid: Pmid) -> np.random.Generator:
    """Per-record generator: global seed XOR a stable 64-bit hash of the PMID."""
    digest = hashlib.blake2b(canonical_pmid(pmid).encode(), digest_size=8).digest()
    return np.random.default_rng((seed ^ int.from_bytes(digest, "little")) & (2**64 - 1))


def find_top_n_starts(query_sims: np.ndarray, one_hop_count: int, n: int) -> list[int]:
    """The min(n, one_hop_count) 1-hop indices most similar to the query,
    descending similarity, ties broken by ascending index."""
    if one_hop_count < 1:
        raise EmptyPool("no 1-hop documents to start from")
    order = sorted(range(one_hop_count), key=lambda i: (-float(query_sims[i]), i))
    return order[: min(n, one_hop_count)]


def sample_next(
    current: int,
    graph: SimilarityGraph,
    visited: set[int],
    k: int,
    rng: np.random.Generator,
) -> int | None:
    """Draw the next node from the top-k unvisited neighbors of `current`.

    Candidates are ordered by (similarity desc, index asc); one is drawn
    with probability proportional to max(similarity, 1e-6), or uniformly
    when every candidate similarity is <= 0. Returns None when no
    unvisited node remains.
    """
    row = graph.matrix[current]
    unvisited = [j for j in range(graph.size)
                 if j != current and j not in visited]
    if not unvisited:
        return None
    unvisited.sort(key=lambda j: (-float(row[j]), j))
    candidates = unvisited[: min(k, len(unvisited))]
    sims = np.array([float(row[j]) for j in candidates])
    if sims.max() <= 0.0:
        weights = np.ones(len(candidates))
    else:
        weights = np.maximum(sims, 1e-6)
    # inverse-CDF on a single uniform draw keeps results platform-independent
    cumulative = np.cumsum(weights)
    u = rng.random() * cumulative[-1]
    pick = min(int(np.searchsorted(cumulative, u, side="right")), len(candidates) - 1)
    return candidates[pick]


def traverse(
    query_sims: np.ndarray,
    graph: SimilarityGraph,
    cfg: MiningConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Run the full traversal; returns the visit order over pool indices."""
    order: list[int] = []
    visited: set[int] = set()
    for start in find_top_n_starts(query_sims, graph.one_hop_count, cfg.n_paths):
        current = start
        for step in range(cfg.l_path):
            if current in visited:
                break
            order.append(current)
            visited.add(current)
            if step == cfg.l_path - 1:
                break
            nxt = sample_next(current, graph, visited, cfg.k_sample, rng)
            if nxt is None:
                break
            current = nxt
    if cfg.add_random_negative:
        remaining = [j for j in range(graph.size) if j not in visited]
        if remaining:
            order.append(remaining[int(rng.integers(len(remaining)))])
    return order


def mine_hard_negatives(
    record: CitationRecord,
    query: str,
    query_embedding: Embedding,
    pool_embeddings: Sequence[Embedding],
    cfg: MiningConfig,
    rng: np.random.Generator | None = None,
) -> TrainingTriplet:
    """Mine one record into a training triplet.

    `pool_embeddings` must follow the pool ordering contract: one_hop
    documents first in record order, then two_hop.
    """
    docs = list(record.one_hop) + list(record.two_hop)
    if not docs:
        raise EmptyPool(f"record {record.positive_pmid} has no candidates")
    if len(pool_embeddings) != len(docs):
        raise ValueError("pool_embeddings length must match the candidate pool")
    if not query:
        raise ValueError("query is empty")
    if rng is None:
        rng = record_rng(cfg.seed, record.positive_pmid)
    graph = build_similarity_graph(pool_embeddings, one_hop_count=len(record.one_hop))
    sims = query_similarities(query_embedding, pool_embeddings)
    # the visited set makes revisits impossible; dedup is belt and braces
    order = list(dict.fromkeys(traverse(sims, graph, cfg, rng)))
    triplet = TrainingTriplet(
        query=query,
        positive=record.positive_abstract,
        negatives=[docs[i][1] for i in order],
        positive_pmid=record.positive_pmid,
        negative_pmids=[docs[i][0] for i in order],
    )
    triplet.check(cfg)
    return triplet


# ---------------------------------------------------------------------------
# Corpus-level emission
# ---------------------------------------------------------------------------

@dataclass
class MiningStats:
    records: int
    mean_negatives: float | None

    def to_json(self) -> dict:
        out: dict = {"records": self.records}
        if self.mean_negatives is not None:
            out["mean_negatives"] = self.mean_negatives
        return out


def triplet_to_json(t: TrainingTriplet) -> dict:
    return {
        "query": t.query,
        "positive_pmid": t.positive_pmid,
        "positive": t.positive,
        "negative_pmids": list(t.negative_pmids),
        "negatives": list(t.negatives),
    }


def triplet_from_json(obj: dict, line: int = 0) -> TrainingTriplet:
    required = ("query", "positive_pmid", "positive", "negative_pmids", "negatives")
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError(f"missing field {missing[0]!r}", line=line)
    return TrainingTriplet(
        query=str(obj["query"]),
        positive=str(obj["positive"]),
        negatives=[str(x) for x in obj["negatives"]],
        positive_pmid=int(obj["positive_pmid"]),
        negative_pmids=[int(x) for x in obj["negative_pmids"]],
    )


def read_triplets(path) -> Iterator[TrainingTriplet]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno)
            yield triplet_from_json(obj, line=lineno)


def mine_record(
    record: CitationRecord,
    embedder: EmbeddingProvider,
    queries: QueryProvider,
    cfg: MiningConfig,
) -> TrainingTriplet:
    """Resolve providers for one record and mine it."""
    pmid = record.positive_pmid
    try:
        query = queries.query_for(pmid, record.positive_abstract)
    except Exception as exc:
        raise ProviderError(f"query provider failed: {exc}", pmid=pmid) from exc
    texts = [a for _, a in record.one_hop] + [a for _, a in record.two_hop]
    try:
        embeddings = embedder.embed_batch(texts)
        query_embedding = embedder.embed_batch([query])[0]
    except Exception as exc:
        raise ProviderError(f"embedding provider failed: {exc}", pmid=pmid) from exc
    return mine_hard_negatives(record, query, query_embedding, embeddings, cfg)


def emit_triplets(
    corpus: Iterable[CitationRecord],
    embedder: EmbeddingProvider,
    queries: QueryProvider,
    cfg: MiningConfig,
    out_path,
    workers: int = 1,
) -> MiningStats:
    """Mine every record and write triplet JSONL in corpus order.

    Per-record RNG derivation makes the output independent of worker
    count; writing happens in input order, so reruns are byte-identical.
    """
    records = list(corpus)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            triplets = list(pool.map(
                lambda r: mine_record(r, embedder, queries, cfg), records))
    else:
        triplets = [mine_record(r, embedder, queries, cfg) for r in records]
    total_negatives = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps(triplet_to_json(t), ensure_ascii=False) + "\n")
            total_negatives += len(t.negatives)
    if not triplets:
        return MiningStats(records=0, mean_negatives=None)
    return MiningStats(records=len(triplets),
                       mean_negatives=total_negatives / len(triplets))
