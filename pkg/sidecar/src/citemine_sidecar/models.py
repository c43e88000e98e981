"""Model loading for the sidecar.

Two families behind one interface:
  - "builtin:" ids resolve to small deterministic models that run anywhere
    (CI, CPU-only boxes) with no downloads: a hash-projection embedder, a
    trainable bag-of-words embedder, and a rule-based query generator.
  - anything else is treated as a checkpoint id for sentence-transformers /
    transformers, loaded in eval mode with greedy decoding.

Embedders expose encode(texts) -> float32 array (n, dim) of unit vectors
plus a `dim` attribute; query generators expose generate(text) -> str and
are deterministic.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


def _hash64(text: str, salt: str = "") -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8,
                             key=salt.encode() or b"0").digest()
    return int.from_bytes(digest, "little")


class HashProjectionEmbedder:
    """Deterministic text -> pseudo-random unit vector. Not trainable."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def encode(self, texts) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            rng = np.random.default_rng(_hash64(text, str(self.seed)))
            raw = rng.standard_normal(self.dim)
            out[i] = (raw / np.linalg.norm(raw)).astype(np.float32)
        return out


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class BagOfWordsEncoder(nn.Module):
    """Trainable hashed bag-of-words embedder with mean pooling.

    Small enough to fine-tune on CPU in seconds, which is all the
    fine-tuning script needs to exercise the full training contract.
    """

    def __init__(self, dim: int = 64, buckets: int = 4096, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        weight = torch.randn(buckets, dim, generator=generator) * 0.1
        self.bag = nn.EmbeddingBag(buckets, dim, mode="mean", _weight=weight)
        self.dim = dim
        self.buckets = buckets

    def _bucket_ids(self, texts) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            offsets.append(len(flat))
            tokens = tokenize(text) or ["<empty>"]
            flat.extend(_hash64(t, "bucket") % self.buckets for t in tokens)
        return torch.tensor(flat, dtype=torch.long), \
            torch.tensor(offsets, dtype=torch.long)

    def forward(self, texts) -> torch.Tensor:
        ids, offsets = self._bucket_ids(texts)
        return F.normalize(self.bag(ids, offsets), dim=-1, eps=1e-12)

    @torch.no_grad()
    def encode(self, texts) -> np.ndarray:
        self.eval()
        return self.forward(texts).cpu().numpy().astype(np.float32)


class RuleQueryGenerator:
    """Deterministic keyword query from an abstract: the first few distinct
    informative words, longest-first among the opening sentence."""

    STOPWORDS = frozenset(
        "a an the of and or for with from into to in on by is are was were be "
        "been this that these those we our it its as at".split())

    def __init__(self, max_terms: int = 6):
        self.max_terms = max_terms

    def generate(self, text: str) -> str:
        if not text.strip():
            raise ValueError("cannot generate a query from empty text")
        first_sentence = re.split(r"(?<=[.!?])\s", text.strip(), maxsplit=1)[0]
        terms = []
        for token in tokenize(first_sentence):
            if token in self.STOPWORDS or token in terms or len(token) < 3:
                continue
            terms.append(token)
            if len(terms) >= self.max_terms:
                break
        if not terms:
            terms = tokenize(text)[: self.max_terms] or ["query"]
        return " ".join(terms)


class TransformerQueryGenerator:
    """doc2query-style generation with greedy decoding (deterministic)."""

    def __init__(self, model_id: str, max_new_tokens: int = 32):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(model_id).eval()
        self.max_new_tokens = max_new_tokens

    @torch.no_grad()
    def generate(self, text: str) -> str:
        inputs = self.tokenizer(text, return_tensors="pt", truncation=True,
                                max_length=512)
        out = self.model.generate(**inputs, do_sample=False, num_beams=1,
                                  max_new_tokens=self.max_new_tokens)
        return self.tokenizer.decode(out[0], skip_special_tokens=True)


class SentenceTransformerEmbedder:
    def __init__(self, model_id: str):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_id)
        self.model.eval()
        self.dim = self.model.get_sentence_embedding_dimension()

    def encode(self, texts) -> np.ndarray:
        vectors = self.model.encode(list(texts), convert_to_numpy=True,
                                    normalize_embeddings=True,
                                    show_progress_bar=False)
        return vectors.astype(np.float32)


def _parse_builtin(model_id: str) -> list[str]:
    return model_id.split(":")


def load_embedder(model_id: str):
    if model_id.startswith("builtin:"):
        parts = _parse_builtin(model_id)
        kind = parts[1]
        dim = int(parts[2]) if len(parts) > 2 else 64
        seed = int(parts[3]) if len(parts) > 3 else 0
        if kind == "hash":
            return HashProjectionEmbedder(dim=dim, seed=seed)
        if kind == "bow":
            return BagOfWordsEncoder(dim=dim, seed=seed)
        raise ValueError(f"unknown builtin embedder {model_id!r}")
    return SentenceTransformerEmbedder(model_id)


def load_query_generator(model_id: str):
    if model_id.startswith("builtin:"):
        kind = _parse_builtin(model_id)[1]
        if kind == "rule":
            return RuleQueryGenerator()
        raise ValueError(f"unknown builtin query generator {model_id!r}")
    return TransformerQueryGenerator(model_id)
