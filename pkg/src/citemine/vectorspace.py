"""Embedding providers and the dense semantic-graph math.

Unit-normalized float32 vectors, query-to-pool similarities, and the
complete pairwise cosine matrix the miner traverses. Dot products are
accumulated in float64 and stored in float32.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyPool, ZeroVector


@dataclass(frozen=True)
class Embedding:
    """A unit-norm float32 vector tagged with an opaque document id."""

    doc_id: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float32))


@dataclass
class SimilarityGraph:
    """Dense pairwise cosine matrix over a candidate pool.

    The first ``one_hop_count`` pool entries are the 1-hop documents;
    traversal start selection depends on that ordering contract.
    """

    matrix: np.ndarray
    pool_ids: list[str]
    one_hop_count: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def validate(self, atol: float = 1e-6) -> None:
        """Raise if any structural invariant is violated."""
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if m.shape[0] != len(self.pool_ids):
            raise ValueError("pool_ids length must match matrix size")
        if not 0 <= self.one_hop_count <= m.shape[0]:
            raise ValueError("one_hop_count out of range")
        if not np.allclose(m, m.T, atol=atol):
            raise ValueError("matrix not symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=atol):
            raise ValueError("diagonal not unit")
        if m.min() < -1 - atol or m.max() > 1 + atol:
            raise ValueError("entries outside [-1, 1]")


class EmbeddingProvider(Protocol):
    """Maps texts to unit-norm vectors; deterministic unless declared otherwise."""

    provider_id: str
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]: ...


def normalize(raw: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm, float32 output.

    Raises ZeroVector for all-zero input.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("vector contains NaN or Inf")
    scale = float(np.abs(arr).max()) if arr.size else 0.0
    if scale == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    # pre-scale by the max magnitude so tiny components cannot underflow
    scaled = arr / scale
    return (scaled / float(np.linalg.norm(scaled))).astype(np.float32)


def _pool_matrix(pool: Sequence[Embedding]) -> np.ndarray:
    if not pool:
        raise EmptyPool("embedding pool is empty")
    dim = pool[0].values.shape[0]
    for e in pool:
        if e.values.shape[0] != dim:
            raise DimensionMismatch(
                f"pool mixes dimensions {dim} and {e.values.shape[0]}"
            )
    return np.stack([e.values for e in pool]).astype(np.float64)


def build_similarity_graph(
    pool: Sequence[Embedding], one_hop_count: int
) -> SimilarityGraph:
    """Complete pairwise cosine matrix over a unit-normalized pool.

    matrix[i][j] = dot(pool[i], pool[j]); symmetrized in float64 before
    the float32 downcast so the matrix is exactly symmetric.
    """
    mat = _pool_matrix(pool)
    if not 0 <= one_hop_count <= mat.shape[0]:
        raise ValueError("one_hop_count out of range")
    sims = mat @ mat.T
    sims = (sims + sims.T) / 2.0
    return SimilarityGraph(
        matrix=sims.astype(np.float32),
        pool_ids=[e.doc_id for e in pool],
        one_hop_count=one_hop_count,
    )


def query_similarities(query: Embedding, pool: Sequence[Embedding]) -> np.ndarray:
    """Dot product of the query against every pool entry, float64."""
    mat = _pool_matrix(pool)
    q = np.asarray(query.values, dtype=np.float64)
    if q.shape[0] != mat.shape[1]:
        raise DimensionMismatch(
            f"query dimension {q.shape[0]} != pool dimension {mat.shape[1]}"
        )
    return mat @ q


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

def text_key(text: str) -> str:
    """Stable opaque id for a text, used to key file-backed vectors."""
    return "sha1:" + hashlib.sha1(text.encode("utf-8")).hexdigest()


@dataclass
class HashingEmbeddingProvider:
    """Deterministic synthetic embedder: text -> seeded pseudo-random unit vector.

    Stands in for a real encoder in tests, fixtures and benchmark stubs.
    Same text always maps to the same vector.
    """

    dimension: int = 64
    seed: int = 0
    provider_id: str = field(default="", repr=False)

    def __post_init__(self):
        if not self.provider_id:
            self.provider_id = f"hash-d{self.dimension}-s{self.seed}"

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        out = []
        for text in texts:
            digest = hashlib.blake2b(
                text.encode("utf-8"), digest_size=8, key=str(self.seed).encode()
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            raw = rng.standard_normal(self.dimension)
            out.append(Embedding(doc_id=text_key(text), values=normalize(raw)))
        return out


class FileEmbeddingProvider:
    """Embedding lookup backed by a vector file keyed on text_key(text)."""

    def __init__(self, path):
        ids, matrix, provider_id = read_vector_file(path)
        self.provider_id = provider_id
        self.dimension = matrix.shape[1]
        self._table = {doc_id: matrix[i] for i, doc_id in enumerate(ids)}

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        out = []
        for text in texts:
            key = text_key(text)
            if key not in self._table:
                raise KeyError(f"no vector stored for text key {key}")
            out.append(Embedding(doc_id=key, values=self._table[key]))
        return out


class HTTPEmbeddingProvider:
    """Client for the sidecar /embed contract.

    POST {"texts": [...]} -> {"dim": d, "vectors": [[...], ...]}.
    Vectors are normalized client-side regardless of server behavior.
    """

    def __init__(self, base_url: str, timeout: float = 60.0, session=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.provider_id = f"http:{self.base_url}"
        self._session = session or requests.Session()
        self.dimension = -1  # discovered on first call

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        resp = self._session.post(
            self.base_url + "/embed", json={"texts": list(texts)}, timeout=self.timeout
        )
        resp.raise_for_status()
        body = resp.json()
        vectors = body["vectors"]
        if len(vectors) != len(texts):
            raise ValueError(
                f"server returned {len(vectors)} vectors for {len(texts)} texts"
            )
        self.dimension = int(body["dim"])
        return [
            Embedding(doc_id=text_key(t), values=normalize(v))
            for t, v in zip(texts, vectors)
        ]


# ---------------------------------------------------------------------------
# Vector file format
# ---------------------------------------------------------------------------
# Header "dim=<d> count=<n> provider=<id>", then n lines "<doc_id> <v1> ... <vd>".

def write_vector_file(path, ids: Sequence[str], matrix: np.ndarray, provider_id: str) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError("matrix must be 2-D with one row per id")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={matrix.shape[1]} count={matrix.shape[0]} provider={provider_id}\n")
        for doc_id, row in zip(ids, matrix):
            if any(ch.isspace() for ch in doc_id):
                raise ValueError(f"doc_id may not contain whitespace: {doc_id!r}")
            fh.write(doc_id + " " + " ".join(f"{float(v):.9g}" for v in row) + "\n")


def read_vector_file(path) -> tuple[list[str], np.ndarray, str]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = dict(part.split("=", 1) for part in header.split(" ") if "=" in part)
        try:
            dim = int(fields["dim"])
            count = int(fields["count"])
            provider_id = fields.get("provider", "")
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad vector file header: {header!r}") from exc
        ids: list[str] = []
        rows = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            line = fh.readline()
            if not line:
                raise ValueError(f"vector file truncated: expected {count} rows, got {i}")
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValueError(
                    f"row {i}: expected {dim} components, got {len(parts) - 1}"
                )
            ids.append(parts[0])
            rows[i] = np.array([float(x) for x in parts[1:]], dtype=np.float32)
        if fh.readline().strip():
            raise ValueError(f"vector file has more than {count} rows")
    return ids, rows, provider_id


def write_text_vectors(path, texts: Sequence[str], provider: EmbeddingProvider) -> None:
    """Embed texts and persist them keyed by text_key, for FileEmbeddingProvider."""
    seen: dict[str, np.ndarray] = {}
    for text, emb in zip(texts, provider.embed_batch(list(texts))):
        seen[text_key(text)] = emb.values
    ids = list(seen)
    matrix = np.stack([seen[i] for i in ids]) if ids else np.empty((0, provider.dimension), np.float32)
    write_vector_file(path, ids, matrix, provider.provider_id)
