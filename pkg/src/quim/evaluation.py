"""Evaluation stack: BERTScore greedy matching, RAGAS-style metrics, batch reports."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

import numpy as np

from .embedding import EmbedderProvider, embed_text
from .errors import (EmptyContext, EmptyGeneration, EmptyRetrieval, EmptySequence,
                     FormatError, JudgeHallucination, NoClaims)
from .generation import RagPrompt, generate_answer
from .retrieval import BaselineRetriever, Query, match_query

SENTENCE_SPLIT = re.compile(r"(?<=[.?!])\s+")


@dataclass(frozen=True)
class GroundTruthItem:
    question: str
    reference_answer: str
    source_urls: list[str] = field(default_factory=list)
    relevant_chunk_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.question.strip() or not self.reference_answer.strip():
            raise ValueError("question and reference_answer must be non-empty")


@dataclass(frozen=True)
class TokenEmbeddings:
    tokens: list[str]
    matrix: np.ndarray  # (n_tokens, dim)

    def __post_init__(self):
        if len(self.tokens) == 0 or self.matrix.shape[0] != len(self.tokens):
            raise EmptySequence("tokens and vectors must align and be non-empty")


@dataclass(frozen=True)
class BertScoreResult:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClaimVerdict:
    claim: str
    verified: bool


@runtime_checkable
class JudgeProvider(Protocol):
    def extract_claims(self, answer: str) -> list[str]: ...
    def verify(self, claim: str, context: str) -> bool: ...
    def extract_relevant_sentences(self, question: str,
                                   context_sentences: list[str]) -> list[str]: ...
    def generate_questions_from_answer(self, answer: str, n: int) -> list[str]: ...


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in SENTENCE_SPLIT.split(text) if s.strip()]


def _unit_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("token embedding with zero norm")
    return X / norms


def token_embeddings(text: str, provider: EmbedderProvider) -> TokenEmbeddings:
    """Per-token embeddings for BERTScore, via the shared provider abstraction."""
    tokens = text.split()
    if not tokens:
        raise EmptySequence("no tokens in text")
    return TokenEmbeddings(tokens=tokens, matrix=np.vstack(provider.embed(tokens)))


def bert_score(candidate: TokenEmbeddings, reference: TokenEmbeddings) -> BertScoreResult:
    """Greedy-matching precision/recall/F1 over token cosine similarities.

    Precision averages, over candidate tokens, the best cosine against any
    reference token; recall is the transpose; F1 is their harmonic mean.
    """
    C = _unit_rows(np.asarray(candidate.matrix, dtype=np.float64))
    R = _unit_rows(np.asarray(reference.matrix, dtype=np.float64))
    if C.shape[1] != R.shape[1]:
        raise ValueError("candidate and reference embedding dims differ")
    sims = C @ R.T
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    denom = precision + recall
    f1 = 0.0 if denom == 0.0 else 2.0 * precision * recall / denom
    return BertScoreResult(precision=precision, recall=recall, f1=f1)


def faithfulness(verdicts: Iterable[ClaimVerdict]) -> float:
    verdicts = list(verdicts)
    if not verdicts:
        raise NoClaims("faithfulness undefined with zero claims")
    return sum(1 for v in verdicts if v.verified) / len(verdicts)


def answer_relevance(original_q: str, answer: str, judge: JudgeProvider,
                     embedder: EmbedderProvider, n: int = 3) -> float:
    """Mean cosine between the original question and questions regenerated
    from the answer."""
    if n < 1:
        raise ValueError("n must be >= 1")
    generated = judge.generate_questions_from_answer(answer, n)
    if not generated:
        raise EmptyGeneration("judge produced no questions from the answer")
    q_vec = embed_text(original_q, embedder)
    sims = [float(np.dot(q_vec, embed_text(g, embedder))) for g in generated]
    return float(np.mean(sims))


def context_relevance(question: str, context_sentences: list[str],
                      judge: JudgeProvider) -> float:
    if not context_sentences:
        raise EmptyContext("no context sentences")
    extracted = judge.extract_relevant_sentences(question, context_sentences)
    members = set(context_sentences)
    for s in extracted:
        if s not in members:
            raise JudgeHallucination(f"judge extracted a sentence not in context: {s!r}")
    return len(extracted) / len(context_sentences)


def context_precision_recall(retrieved_chunk_ids, relevant_chunk_ids) -> tuple[float, float]:
    retrieved = set(retrieved_chunk_ids)
    relevant = set(relevant_chunk_ids)
    if not retrieved:
        raise EmptyRetrieval("precision undefined with zero retrieved chunks")
    if not relevant:
        raise ValueError("recall undefined with zero relevant chunks")
    hit = len(retrieved & relevant)
    return hit / len(retrieved), hit / len(relevant)


class RuleBasedJudge:
    """Deterministic offline judge: sentence-split claims, substring or
    embedding-threshold verification, keyword-overlap relevance."""

    _word_re = re.compile(r"[A-Za-z0-9]+")
    _stop = frozenset(
        "the a an and or of to in for on with is are was were be been what where "
        "when who how why does do did this that it its about".split()
    )

    def __init__(self, embedder: EmbedderProvider | None = None,
                 similarity_threshold: float = 0.8):
        self.embedder = embedder
        self.similarity_threshold = similarity_threshold

    @staticmethod
    def _normalize(text: str) -> str:
        return " ".join(text.lower().split()).rstrip(".!?")

    def _words(self, text: str) -> set[str]:
        return {w.lower() for w in self._word_re.findall(text)} - self._stop

    def extract_claims(self, answer: str) -> list[str]:
        return split_sentences(answer)

    def verify(self, claim: str, context: str) -> bool:
        if self._normalize(claim) in self._normalize(context):
            return True
        if self.embedder is not None:
            try:
                sim = float(np.dot(embed_text(claim, self.embedder),
                                   embed_text(context, self.embedder)))
            except Exception:
                return False
            return sim >= self.similarity_threshold
        return False

    def extract_relevant_sentences(self, question: str,
                                   context_sentences: list[str]) -> list[str]:
        q_words = self._words(question)
        return [s for s in context_sentences if self._words(s) & q_words]

    def generate_questions_from_answer(self, answer: str, n: int) -> list[str]:
        sentences = split_sentences(answer) or [answer.strip()]
        return [f"What is stated by: {s}?" for s in sentences[:n]]


# --- batch evaluation ----------------------------------------------------

@dataclass
class EvalReport:
    pipelines: list[str]
    items: list[dict]           # one entry per (pipeline, ground-truth item)
    means: dict[str, dict]      # pipeline -> metric -> mean
    failures: int = 0

    METRICS = ("faithfulness", "answer_relevance", "context_relevance",
               "context_precision", "context_recall",
               "bert_precision", "bert_recall", "bert_f1")

    def to_json(self) -> str:
        return json.dumps({"pipelines": self.pipelines, "means": self.means,
                           "failures": self.failures, "items": self.items},
                          sort_keys=True, indent=2)

    def format_table(self) -> str:
        """Side-by-side metric table, one column per pipeline."""
        width = 22
        head = "Metric".ljust(width) + "".join(p.rjust(14) for p in self.pipelines)
        lines = [head, "-" * len(head)]
        for metric in self.METRICS:
            row = metric.ljust(width)
            for p in self.pipelines:
                value = self.means.get(p, {}).get(metric)
                row += ("-" if value is None else f"{value:.2f}").rjust(14)
            lines.append(row)
        lines.append(f"failures: {self.failures}")
        return "\n".join(lines)


def run_eval(gt_items: list[GroundTruthItem], pipelines: list[str], *, index,
             chunks, questions, embedder: EmbedderProvider, llm, judge=None,
             top_k: int = 3, n_probe: int = 1, ar_questions: int = 3,
             rag_prompt: RagPrompt | None = None) -> EvalReport:
    """Run every ground-truth item through the selected pipelines and score it.

    Provider errors on individual items are recorded and the run continues.
    """
    if not gt_items:
        raise ValueError("no items in ground truth")
    judge = judge or RuleBasedJudge(embedder=embedder)
    chunk_list = list(chunks)
    baseline = BaselineRetriever(chunk_list, embedder) if "baseline" in pipelines else None

    items: list[dict] = []
    failures = 0
    for pipeline in pipelines:
        for gt in gt_items:
            entry: dict = {"pipeline": pipeline, "question": gt.question}
            try:
                query = Query(text=gt.question, top_k=top_k, n_probe=n_probe)
                if pipeline == "quim":
                    bundle = match_query(query, index, embedder, chunk_list, questions)
                else:
                    bundle = baseline.retrieve(query)
                answer = generate_answer(bundle, gt.question, llm, prompt=rag_prompt)
                entry["answer"] = answer.text
                entry["refused"] = answer.refused
                entry.update(_score_item(gt, bundle, answer.text, embedder, judge,
                                         ar_questions))
            except Exception as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
                failures += 1
            items.append(entry)

    means: dict[str, dict] = {}
    for pipeline in pipelines:
        means[pipeline] = {}
        for metric in EvalReport.METRICS:
            values = [it[metric] for it in items
                      if it["pipeline"] == pipeline and it.get(metric) is not None]
            means[pipeline][metric] = float(np.mean(values)) if values else None
    return EvalReport(pipelines=pipelines, items=items, means=means, failures=failures)


def _score_item(gt: GroundTruthItem, bundle, answer_text: str,
                embedder: EmbedderProvider, judge, ar_questions: int) -> dict:
    scores: dict = {m: None for m in EvalReport.METRICS}
    context_text = " ".join(c.text for c in bundle.chunks)

    claims = judge.extract_claims(answer_text)
    if claims:
        verdicts = [ClaimVerdict(c, judge.verify(c, context_text)) for c in claims]
        scores["faithfulness"] = faithfulness(verdicts)

    scores["answer_relevance"] = answer_relevance(gt.question, answer_text, judge,
                                                  embedder, n=ar_questions)
    sentences = split_sentences(context_text)
    if sentences:
        scores["context_relevance"] = context_relevance(gt.question, sentences, judge)

    if gt.relevant_chunk_ids and bundle.chunks:
        precision, recall = context_precision_recall(
            [c.chunk_id for c in bundle.chunks], gt.relevant_chunk_ids)
        scores["context_precision"] = precision
        scores["context_recall"] = recall
    elif gt.relevant_chunk_ids:
        scores["context_precision"] = 0.0
        scores["context_recall"] = 0.0

    bert = bert_score(token_embeddings(answer_text, embedder),
                      token_embeddings(gt.reference_answer, embedder))
    scores["bert_precision"] = bert.precision
    scores["bert_recall"] = bert.recall
    scores["bert_f1"] = bert.f1
    return scores


def read_ground_truth(path) -> list[GroundTruthItem]:
    path = Path(path)
    items = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON: {exc}", line_number=lineno)
            items.append(GroundTruthItem(
                question=rec["question"],
                reference_answer=rec["reference_answer"],
                source_urls=list(rec.get("source_urls", [])),
                relevant_chunk_ids=list(rec.get("relevant_chunk_ids", [])),
            ))
    return items
