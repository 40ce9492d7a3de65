"""Query matching: prototype-probed question search and the Retrieve-Read baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Chunk
from .embedding import EmbedderProvider, embed_batch, embed_text
from .errors import EmbedderMismatch, EmptyIndex, ReferentialIntegrity
from .qindex import InvertedIndex, lookup
from .quantizer import nearest_prototypes
from .questions import GeneratedQuestion


@dataclass(frozen=True)
class Query:
    text: str
    top_k: int = 3
    n_probe: int = 1
    min_score: float = 0.0  # matches must score strictly above this

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.n_probe < 1:
            raise ValueError("n_probe must be >= 1")


@dataclass(frozen=True)
class MatchedQuestion:
    question_id: str
    question_text: str
    chunk_id: str
    score: float


@dataclass(frozen=True)
class ChunkRef:
    chunk_id: str
    text: str
    source_url: str


@dataclass(frozen=True)
class ContextBundle:
    matches: list[MatchedQuestion] = field(default_factory=list)
    chunks: list[ChunkRef] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.matches

    def to_dict(self) -> dict:
        return {
            "matches": [
                {"question_id": m.question_id, "question_text": m.question_text,
                 "chunk_id": m.chunk_id, "score": m.score}
                for m in self.matches
            ],
            "chunks": [
                {"chunk_id": c.chunk_id, "text": c.text, "source_url": c.source_url}
                for c in self.chunks
            ],
        }


def _chunk_map(chunks) -> Mapping[str, Chunk]:
    if isinstance(chunks, Mapping):
        return chunks
    return {c.chunk_id: c for c in chunks}


def _question_text_map(questions) -> Mapping[str, str]:
    if questions is None:
        return {}
    if isinstance(questions, Mapping):
        return questions
    return {q.question_id: q.text for q in questions}


def _bundle_chunks(matches: Sequence[MatchedQuestion], chunk_map) -> list[ChunkRef]:
    """Deduplicate chunks keeping best-match order."""
    seen: set[str] = set()
    refs = []
    for m in matches:
        if m.chunk_id in seen:
            continue
        seen.add(m.chunk_id)
        chunk = chunk_map.get(m.chunk_id)
        if chunk is None:
            raise ReferentialIntegrity(f"match references missing chunk {m.chunk_id}")
        refs.append(ChunkRef(chunk.chunk_id, chunk.text, chunk.source_url))
    return refs


def match_query(query: Query, index: InvertedIndex, provider: EmbedderProvider,
                chunks, questions=None) -> ContextBundle:
    """Question-to-question retrieval through the inverted index.

    Embeds the query, probes the ``n_probe`` nearest prototype buckets,
    ranks the pooled postings by cosine similarity (ties by question_id),
    and assembles the deduplicated chunk context for the top_k matches.
    """
    if provider.embedder_id != index.header.get("embedder_id"):
        raise EmbedderMismatch(
            f"query embedder {provider.embedder_id!r} != index embedder "
            f"{index.header.get('embedder_id')!r}")
    if index.n_postings == 0:
        raise EmptyIndex("index has no postings")

    v = embed_text(query.text, provider)
    probe_ids = nearest_prototypes(v, index.prototypes, query.n_probe)
    pooled = [p for proto_id in probe_ids for p in lookup(index, proto_id)]
    return _rank(query, v, pooled, _chunk_map(chunks), _question_text_map(questions))


def _rank(query: Query, v: np.ndarray, postings, chunk_map, qtext_map) -> ContextBundle:
    if not postings:
        return ContextBundle()
    scores = np.array([float(np.dot(v, p.vector)) for p in postings])
    order = sorted(range(len(postings)),
                   key=lambda i: (-scores[i], postings[i].question_id))
    matches = []
    for i in order:
        if query.min_score is not None and scores[i] <= query.min_score:
            continue
        p = postings[i]
        matches.append(MatchedQuestion(
            question_id=p.question_id,
            question_text=qtext_map.get(p.question_id, ""),
            chunk_id=p.chunk_id,
            score=float(scores[i]),
        ))
        if len(matches) >= query.top_k:
            break
    return ContextBundle(matches=matches, chunks=_bundle_chunks(matches, chunk_map))


def exhaustive_match(query: Query, index: InvertedIndex, provider: EmbedderProvider,
                     chunks, questions=None) -> ContextBundle:
    """Brute-force scan over every posting, bypassing the prototype buckets."""
    if index.n_postings == 0:
        raise EmptyIndex("index has no postings")
    v = embed_text(query.text, provider)
    return _rank(query, v, index.all_postings(), _chunk_map(chunks),
                 _question_text_map(questions))


class BaselineRetriever:
    """Traditional Retrieve-Read ranking: query against chunk embeddings."""

    def __init__(self, chunks: Iterable[Chunk], provider: EmbedderProvider):
        self.chunks = list(chunks)
        self.provider = provider
        self._matrix = embed_batch([c.text for c in self.chunks], provider)

    def retrieve(self, query: Query) -> ContextBundle:
        v = embed_text(query.text, self.provider)
        scores = self._matrix @ v
        order = sorted(range(len(self.chunks)),
                       key=lambda i: (-scores[i], self.chunks[i].chunk_id))
        matches = []
        refs = []
        for i in order:
            if query.min_score is not None and scores[i] <= query.min_score:
                continue
            c = self.chunks[i]
            # baseline has no question side; the chunk itself is the match
            matches.append(MatchedQuestion(question_id="", question_text="",
                                           chunk_id=c.chunk_id, score=float(scores[i])))
            refs.append(ChunkRef(c.chunk_id, c.text, c.source_url))
            if len(matches) >= query.top_k:
                break
        return ContextBundle(matches=matches, chunks=refs)


def baseline_retrieve(query: Query, chunks: Iterable[Chunk],
                      provider: EmbedderProvider) -> ContextBundle:
    """One-shot baseline retrieval (embeds the chunks on every call)."""
    return BaselineRetriever(chunks, provider).retrieve(query)
