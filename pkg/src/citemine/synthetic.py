"""Synthetic corpora with controlled embedding geometry.

Generates citation records whose candidate pools form mutually orthogonal
clusters of unit vectors: one 1-hop document per cluster, in-cluster
similarity ~alpha^2, cross-cluster similarity exactly 0. With the default
mining settings every record yields the full negative budget, which makes
these corpora useful for calibration tests, parameter sweeps and benchmark
input without any model in the loop.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .neighborhood import CitationRecord, write_corpus
from .vectorspace import Embedding, normalize, text_key, write_vector_file


def _doc_text(pmid: int) -> str:
    return f"synthetic abstract for record {pmid}"


def _query_text(pmid: int) -> str:
    return f"synthetic query targeting record {pmid}"


def clustered_vectors(n_clusters: int, cluster_size: int, extras: int,
                      alpha: float = 0.99) -> np.ndarray:
    """Unit vectors in orthogonal clusters; extras are isolated axes."""
    n = n_clusters * cluster_size + extras
    dim = n_clusters + n
    beta = float(np.sqrt(1.0 - alpha * alpha))
    vectors = np.zeros((n, dim), dtype=np.float64)
    for i in range(n):
        if i < n_clusters * cluster_size:
            vectors[i, i % n_clusters] = alpha
            vectors[i, n_clusters + i] = beta
        else:
            vectors[i, n_clusters + i] = 1.0
    return vectors


def synthetic_dataset(
    n_records: int,
    n_clusters: int = 3,
    cluster_size: int = 6,
    extras: int = 2,
    start_pmid: int = 1000,
):
    """Build records plus matching queries and embeddings.

    Returns (records, queries, vector_table) where queries maps pmid to
    query text and vector_table maps every text (abstracts and queries)
    to its unit vector. The first n_clusters docs of each record are its
    1-hop documents, one per cluster; the query leans on the clusters in
    descending order so the 1-hop prefix ranks 0, 1, 2, ... by similarity.
    """
    pool = clustered_vectors(n_clusters, cluster_size, extras)
    n_docs, dim = pool.shape
    query_vec = np.zeros(dim)
    query_vec[:n_clusters] = np.arange(n_clusters, 0, -1, dtype=np.float64)
    query_vec = normalize(query_vec)

    records: list[CitationRecord] = []
    queries: dict[int, str] = {}
    vector_table: dict[str, np.ndarray] = {}
    for r in range(n_records):
        pmid = start_pmid + r * (n_docs + 1)
        doc_pmids = [pmid + 1 + j for j in range(n_docs)]
        texts = [_doc_text(p) for p in doc_pmids]
        one_hop = [(doc_pmids[j], texts[j]) for j in range(n_clusters)]
        two_hop = [(doc_pmids[j], texts[j]) for j in range(n_clusters, n_docs)]
        record = CitationRecord(
            positive_pmid=pmid,
            positive_abstract=_doc_text(pmid),
            one_hop=one_hop,
            two_hop=two_hop,
        )
        record.check()
        records.append(record)
        queries[pmid] = _query_text(pmid)
        for text, vec in zip(texts, pool):
            vector_table[text] = vec.astype(np.float32)
        vector_table[_query_text(pmid)] = np.asarray(query_vec)
        vector_table[record.positive_abstract] = np.asarray(query_vec)
    return records, queries, vector_table


class TableEmbeddingProvider:
    """Provider over an in-memory {text: unit vector} table."""

    def __init__(self, table: dict, provider_id: str = "synthetic"):
        self.table = {k: np.asarray(v, dtype=np.float32) for k, v in table.items()}
        self.provider_id = provider_id
        self.dimension = len(next(iter(self.table.values())))

    def embed_batch(self, texts):
        return [Embedding(doc_id=text_key(t), values=self.table[t]) for t in texts]


class TableQueryProvider:
    def __init__(self, queries: dict):
        self.queries = dict(queries)

    def query_for(self, pmid: int, abstract: str) -> str:
        return self.queries[pmid]


def write_synthetic_dataset(directory, n_records: int, **kwargs) -> dict[str, Path]:
    """Materialize a synthetic dataset as corpus/queries/vectors files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records, queries, table = synthetic_dataset(n_records, **kwargs)
    paths = {
        "corpus": directory / "corpus.jsonl",
        "queries": directory / "queries.tsv",
        "vectors": directory / "vectors.txt",
    }
    write_corpus(records, paths["corpus"])
    with open(paths["queries"], "w", encoding="utf-8") as fh:
        for pmid, query in queries.items():
            fh.write(f"{pmid}\t{query}\n")
    ids = [text_key(t) for t in table]
    matrix = np.stack([table[t] for t in table]).astype(np.float32)
    write_vector_file(paths["vectors"], ids, matrix, provider_id="synthetic")
    return paths
