"""HTTP API binding retrieval and generation together for the chat UI."""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import corpus as corpus_mod
from . import questions as questions_mod
from .embedding import HashingEmbedder, HttpEmbedder
from .errors import ProviderError, QuimError
from .generation import HttpLlm, MockLlm, RagPrompt, generate_answer
from .qindex import load_index
from .retrieval import BaselineRetriever, Query, match_query


@dataclass
class ServiceConfig:
    index_path: str = "index.qidx"
    corpus_path: str = "chunks.jsonl"
    questions_path: str = ""
    port: int = 8080
    top_k: int = 3
    n_probe: int = 1
    embedder: str = "hash"          # hash | http
    embed_dim: int = 64
    embed_seed: int = 0
    llm: str = "mock"               # mock | http
    cors_allowed_origins: list[str] = field(default_factory=list)
    reload_token: str = ""

    @classmethod
    def from_toml(cls, path) -> "ServiceConfig":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class Snapshot:
    """Immutable view of one loaded index generation."""

    index: object
    chunks: dict
    question_texts: dict
    baseline: BaselineRetriever | None = None


class Engine:
    """Owns the current snapshot; reloads swap it atomically."""

    def __init__(self, config: ServiceConfig, embedder=None, llm=None):
        self.config = config
        self.embedder = embedder or self._make_embedder(config)
        self.llm = llm or self._make_llm(config)
        self.prompt = RagPrompt()
        self._lock = threading.Lock()
        self._snapshot: Snapshot | None = None

    @staticmethod
    def _make_embedder(config: ServiceConfig):
        if config.embedder == "hash":
            return HashingEmbedder(dim=config.embed_dim, seed=config.embed_seed)
        return HttpEmbedder()

    @staticmethod
    def _make_llm(config: ServiceConfig):
        return MockLlm() if config.llm == "mock" else HttpLlm()

    @property
    def snapshot(self) -> Snapshot | None:
        return self._snapshot

    def reload(self) -> Snapshot:
        """Load index + corpus from disk and swap the snapshot in one step."""
        index = load_index(self.config.index_path)
        if index.header.get("embedder_id") != self.embedder.embedder_id:
            raise ProviderError(
                f"index built with embedder {index.header.get('embedder_id')!r}, "
                f"service configured with {self.embedder.embedder_id!r}")
        _, chunks = corpus_mod.read_corpus(self.config.corpus_path)
        question_texts = {}
        if self.config.questions_path and Path(self.config.questions_path).exists():
            question_texts = {q.question_id: q.text
                              for q in questions_mod.read_questions(self.config.questions_path)}
        snapshot = Snapshot(index=index, chunks={c.chunk_id: c for c in chunks},
                            question_texts=question_texts)
        with self._lock:
            self._snapshot = snapshot
        return snapshot

    def baseline_for(self, snapshot: Snapshot) -> BaselineRetriever:
        # built lazily; cached on the snapshot so a reload discards it
        if snapshot.baseline is None:
            snapshot.baseline = BaselineRetriever(list(snapshot.chunks.values()),
                                                  self.embedder)
        return snapshot.baseline


class QueryRequest(BaseModel):
    question: str
    k: int | None = None
    n_probe: int | None = None
    baseline: bool = False


def create_app(config: ServiceConfig, embedder=None, llm=None,
               preload: bool = True) -> FastAPI:
    engine = Engine(config, embedder=embedder, llm=llm)
    app = FastAPI(title="quim")
    app.state.engine = engine
    if config.cors_allowed_origins:
        app.add_middleware(CORSMiddleware, allow_origins=config.cors_allowed_origins,
                           allow_methods=["*"], allow_headers=["*"])
    if preload:
        engine.reload()

    def _snapshot() -> Snapshot:
        snap = engine.snapshot
        if snap is None:
            raise HTTPException(status_code=503, detail="index not loaded")
        return snap

    @app.post("/v1/query")
    def query(req: QueryRequest):
        if not req.question.strip():
            raise HTTPException(status_code=400, detail="empty question")
        snap = _snapshot()
        q = Query(text=req.question,
                  top_k=req.k or engine.config.top_k,
                  n_probe=req.n_probe or engine.config.n_probe)
        try:
            if req.baseline:
                bundle = engine.baseline_for(snap).retrieve(q)
            else:
                bundle = match_query(q, snap.index, engine.embedder, snap.chunks,
                                     snap.question_texts)
            answer = generate_answer(bundle, req.question, engine.llm,
                                     prompt=engine.prompt)
        except ProviderError as exc:
            raise HTTPException(status_code=502,
                                detail={"error": type(exc).__name__, "message": str(exc)})
        return {
            "answer": answer.text,
            "refused": answer.refused,
            "sources": answer.sources,
            "matched_questions": [
                {"text": m.question_text, "score": m.score, "chunk_id": m.chunk_id}
                for m in bundle.matches
            ],
            "chunks": [
                {"chunk_id": c.chunk_id, "text": c.text, "source_url": c.source_url}
                for c in bundle.chunks
            ],
        }

    @app.get("/v1/health")
    def health():
        snap = _snapshot()
        return {
            "status": "ok",
            "index_version": snap.index.header.get("version"),
            "embedder_id": snap.index.header.get("embedder_id"),
            "questions_indexed": snap.index.n_postings,
        }

    @app.get("/v1/chunks/{chunk_id}")
    def get_chunk(chunk_id: str):
        snap = _snapshot()
        chunk = snap.chunks.get(chunk_id)
        if chunk is None:
            raise HTTPException(status_code=404, detail=f"unknown chunk {chunk_id}")
        return {"chunk_id": chunk.chunk_id, "doc_id": chunk.doc_id, "seq": chunk.seq,
                "text": chunk.text, "source_url": chunk.source_url}

    @app.post("/v1/admin/reload")
    def admin_reload(request: Request):
        token = request.headers.get("X-Reload-Token", "")
        if not config.reload_token or token != config.reload_token:
            raise HTTPException(status_code=403, detail="bad reload token")
        try:
            snap = engine.reload()
        except QuimError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return {"status": "reloaded", "questions_indexed": snap.index.n_postings}

    return app


def serve(config: ServiceConfig, host: str = "0.0.0.0") -> None:
    """Run the API with uvicorn; SIGHUP triggers an index hot-reload."""
    import signal

    import uvicorn

    app = create_app(config)

    def _on_hup(signum, frame):
        app.state.engine.reload()

    if hasattr(signal, "SIGHUP") and threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGHUP, _on_hup)
    uvicorn.run(app, host=host, port=config.port)
