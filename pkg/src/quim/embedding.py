"""Embedding providers and cosine similarity over unit-norm vectors."""

from __future__ import annotations

import hashlib
import os
import re
from typing import Iterable, Protocol, runtime_checkable

import numpy as np

from .errors import DimMismatch, EmptyText, ProviderError

NORM_TOLERANCE = 1e-6


@runtime_checkable
class EmbedderProvider(Protocol):
    dim: int
    embedder_id: str

    def embed(self, texts: list[str]) -> list[np.ndarray]: ...


def normalize(values) -> np.ndarray:
    """L2-normalize to a float64 unit vector; rejects NaN/Inf and zero vectors."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / norm


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"dim {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def embed_text(text: str, provider: EmbedderProvider) -> np.ndarray:
    """Embed a single text; result is unit-norm with the provider's dimension."""
    if not text or not text.strip():
        raise EmptyText("cannot embed empty text")
    vec = provider.embed([text])[0]
    if vec.shape != (provider.dim,):
        raise ProviderError(f"provider returned dim {vec.shape}, expected {provider.dim}")
    return vec


class HashingEmbedder:
    """Deterministic offline embedder: signed feature hashing of word tokens.

    Lowercases, splits on non-alphanumerics, hashes each token into one of
    ``dim`` signed buckets, then L2-normalizes. Bag-of-words by construction,
    fully determined by (dim, seed).
    """

    _token_re = re.compile(r"[a-z0-9]+")

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed
        self.embedder_id = f"hashing-{dim}-{seed}"

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            token.encode("utf-8"), key=str(self.seed).encode("utf-8"), digest_size=8
        ).digest()
        value = int.from_bytes(digest, "little")
        return value % self.dim, 1.0 if (value >> 63) & 1 == 0 else -1.0

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            v = np.zeros(self.dim, dtype=np.float64)
            tokens = self._token_re.findall(text.lower())
            if not tokens:
                # Degenerate input with no word characters: hash the raw text
                # so every non-empty input still gets a valid unit vector.
                tokens = [text]
            for token in tokens:
                bucket, sign = self._bucket(token)
                v[bucket] += sign
            norm = np.linalg.norm(v)
            if norm == 0.0:
                v[self._bucket(" ".join(tokens))[0]] = 1.0
                norm = 1.0
            out.append(v / norm)
        return out


def test_embedder(dim: int = 64, seed: int = 0) -> HashingEmbedder:
    """Deterministic offline stand-in for a hosted embedding model."""
    return HashingEmbedder(dim=dim, seed=seed)


class HttpEmbedder:
    """Embedding provider backed by a JSON-over-HTTP endpoint.

    Wire format: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
    Endpoint and key come from QUIM_EMBED_ENDPOINT / QUIM_EMBED_API_KEY
    unless given explicitly. Vectors are normalized on receipt.
    """

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 dim: int = 0, batch_size: int = 64, embedder_id: str = "http"):
        self.endpoint = endpoint or os.environ.get("QUIM_EMBED_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("QUIM_EMBED_API_KEY", "")
        if not self.endpoint:
            raise ProviderError("no embedding endpoint configured (QUIM_EMBED_ENDPOINT)")
        self.dim = dim
        self.batch_size = batch_size
        self.embedder_id = embedder_id

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = texts[start:start + self.batch_size]
            try:
                resp = requests.post(self.endpoint, json={"texts": batch},
                                     headers=headers, timeout=120)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
            except Exception as exc:
                raise ProviderError(f"embedding request failed: {exc}") from exc
            if len(vectors) != len(batch):
                raise ProviderError("embedding response length mismatch")
            for raw in vectors:
                vec = normalize(raw)
                if self.dim == 0:
                    self.dim = vec.size
                elif vec.size != self.dim:
                    raise ProviderError("inconsistent embedding dimensions in response")
                out.append(vec)
        return out


def embed_batch(texts: Iterable[str], provider: EmbedderProvider) -> np.ndarray:
    """Embed many texts into a (n, dim) matrix of unit rows."""
    texts = list(texts)
    vectors = provider.embed(texts)
    if len(vectors) != len(texts):
        raise ProviderError("provider returned wrong number of vectors")
    return np.vstack(vectors) if vectors else np.zeros((0, provider.dim))
