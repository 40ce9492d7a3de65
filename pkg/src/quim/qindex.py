"""The inverted index: prototype buckets of (question embedding, chunk) postings."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Chunk
from .embedding import EmbedderProvider, embed_batch
from .errors import ChecksumError, ReferentialIntegrity, UnknownPrototype, VersionMismatch
from .quantizer import PrototypeSet, learn_prototypes, quantize_batch
from .questions import GeneratedQuestion

INDEX_FORMAT = "quim-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Posting:
    question_id: str
    chunk_id: str
    vector: np.ndarray


@dataclass
class InvertedIndex:
    header: dict
    prototypes: PrototypeSet
    postings: dict[int, list[Posting]] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.prototypes.dim

    @property
    def k_p(self) -> int:
        return self.prototypes.k_p

    @property
    def n_postings(self) -> int:
        return sum(len(b) for b in self.postings.values())

    def all_postings(self) -> list[Posting]:
        out = []
        for proto_id in range(self.k_p):
            out.extend(self.postings.get(proto_id, []))
        return out


def _round_f32(X: np.ndarray) -> np.ndarray:
    # Vectors are persisted as float32; rounding once at build time keeps
    # in-memory values identical to what a load will produce.
    return X.astype(np.float32).astype(np.float64)


def default_k_p(n_questions: int) -> int:
    return max(1, math.ceil(math.sqrt(n_questions)))


def build_index(chunks: Iterable[Chunk], questions: Iterable[GeneratedQuestion],
                provider: EmbedderProvider, ps: PrototypeSet | None = None,
                k_p: int | None = None, seed: int = 42,
                max_iters: int = 50) -> InvertedIndex:
    """Embed every question, quantize it, and file it under its prototype.

    With ``ps=None`` prototypes are learned from the question embeddings
    first (spherical k-means, k_p defaulting to ceil(sqrt(n))).
    """
    chunks = list(chunks)
    questions = sorted(questions, key=lambda q: q.question_id)
    chunk_ids = {c.chunk_id for c in chunks}
    for q in questions:
        if q.chunk_id not in chunk_ids:
            raise ReferentialIntegrity(
                f"question {q.question_id} references missing chunk {q.chunk_id}")
    if not questions:
        raise ReferentialIntegrity("cannot build an index from zero questions")

    X = _round_f32(embed_batch([q.text for q in questions], provider))
    if ps is None:
        k = k_p if k_p is not None else default_k_p(len(questions))
        ps = learn_prototypes(X, k, seed=seed, max_iters=max_iters,
                              embedder_id=provider.embedder_id)
    ps = PrototypeSet(vectors=_round_f32(ps.vectors),
                      embedder_id=ps.embedder_id or provider.embedder_id, seed=ps.seed)

    assignments = quantize_batch(X, ps)
    postings: dict[int, list[Posting]] = {i: [] for i in range(ps.k_p)}
    for q, vec, proto_id in zip(questions, X, assignments):
        postings[int(proto_id)].append(Posting(q.question_id, q.chunk_id, vec))
    for bucket in postings.values():
        bucket.sort(key=lambda p: p.question_id)

    header = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "dim": ps.dim,
        "k_p": ps.k_p,
        "embedder_id": ps.embedder_id,
        "seed": ps.seed,
        "n_postings": len(questions),
        "built_at": datetime.now(timezone.utc).isoformat(),
    }
    return InvertedIndex(header=header, prototypes=ps, postings=postings)


def lookup(index: InvertedIndex, proto_id: int) -> list[Posting]:
    """Postings filed under one prototype; the stored list is not copied."""
    if not 0 <= proto_id < index.k_p:
        raise UnknownPrototype(f"proto_id {proto_id} outside 0..{index.k_p - 1}")
    return index.postings.get(proto_id, [])


# --- on-disk format ------------------------------------------------------
#
#   header JSON line
#   k_p * dim float32 LE prototype block
#   n * dim float32 LE posting-vector block
#   directory JSON line (posting ids, storage order)
#   sha256:<hex> trailer over everything above

def save_index(index: InvertedIndex, path) -> None:
    """Write the index atomically (temp file + rename)."""
    path = Path(path)
    flat = index.all_postings()
    directory = {
        "postings": [
            {"question_id": p.question_id, "chunk_id": p.chunk_id,
             "proto_id": proto_id}
            for proto_id in range(index.k_p)
            for p in index.postings.get(proto_id, [])
        ],
    }
    blob = bytearray()
    blob += json.dumps(index.header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += b"\n"
    blob += np.ascontiguousarray(index.prototypes.vectors, dtype="<f4").tobytes()
    for p in flat:
        blob += np.ascontiguousarray(p.vector, dtype="<f4").tobytes()
    blob += b"\n"
    blob += json.dumps(directory, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += b"\n"
    digest = hashlib.sha256(bytes(blob)).hexdigest()
    blob += f"sha256:{digest}\n".encode("ascii")

    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(bytes(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_index(path) -> InvertedIndex:
    path = Path(path)
    data = path.read_bytes()
    try:
        header_end = data.index(b"\n")
        header = json.loads(data[:header_end])
    except (ValueError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"unreadable index header: {exc}")
    if header.get("format") != INDEX_FORMAT:
        raise VersionMismatch(f"not a {INDEX_FORMAT} file")
    if header.get("version") != INDEX_VERSION:
        raise VersionMismatch(
            f"index version {header.get('version')} != supported {INDEX_VERSION}")

    dim = header["dim"]
    k_p = header["k_p"]
    n = header["n_postings"]
    offset = header_end + 1
    proto_bytes = 4 * k_p * dim
    post_bytes = 4 * n * dim
    tail_start = offset + proto_bytes + post_bytes
    try:
        if data[tail_start:tail_start + 1] != b"\n":
            raise ChecksumError("binary block boundary not found (truncated file?)")
        dir_end = data.index(b"\n", tail_start + 1)
        trailer = data[dir_end + 1:].decode("ascii").strip()
        if not trailer.startswith("sha256:"):
            raise ChecksumError("missing checksum trailer")
    except (ValueError, IndexError):
        raise ChecksumError("truncated index file")
    expected = trailer[len("sha256:"):]
    actual = hashlib.sha256(data[:dir_end + 1]).hexdigest()
    if actual != expected:
        raise ChecksumError("index checksum mismatch")

    protos = np.frombuffer(data, dtype="<f4", count=k_p * dim, offset=offset)
    protos = protos.reshape(k_p, dim).astype(np.float64)
    vectors = np.frombuffer(data, dtype="<f4", count=n * dim, offset=offset + proto_bytes)
    vectors = vectors.reshape(n, dim).astype(np.float64)
    directory = json.loads(data[tail_start + 1:dir_end])

    ps = PrototypeSet(vectors=protos, embedder_id=header["embedder_id"],
                      seed=header.get("seed", 0))
    postings: dict[int, list[Posting]] = {i: [] for i in range(k_p)}
    for row, entry in zip(vectors, directory["postings"]):
        postings[entry["proto_id"]].append(
            Posting(entry["question_id"], entry["chunk_id"], row))
    return InvertedIndex(header=header, prototypes=ps, postings=postings)
