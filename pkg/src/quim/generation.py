"""Grounded answer generation with source links and out-of-domain refusal."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

from .corpus import WhitespaceTokenizer
from .errors import ContextOverflow, ProviderError, TemplateError
from .retrieval import ContextBundle, MatchedQuestion

DEFAULT_REFUSAL = "I am unable to provide a relevant answer based on the available information."

DEFAULT_RAG_TEMPLATE = """\
You are a helpful assistant answering questions for a website's visitors.
Answer using only the context below. Be accurate and direct; do not invent
information. If the context does not contain the information needed to
answer, reply exactly: {refusal_text}

Context:
{context}

Question: {question}
Answer:"""


@dataclass(frozen=True)
class RagPrompt:
    template: str = DEFAULT_RAG_TEMPLATE
    refusal_text: str = DEFAULT_REFUSAL


@dataclass(frozen=True)
class Answer:
    text: str
    sources: list[str] = field(default_factory=list)
    refused: bool = False
    matched_questions: list[MatchedQuestion] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "sources": list(self.sources),
            "refused": self.refused,
            "matched_questions": [
                {"question_id": m.question_id, "question_text": m.question_text,
                 "chunk_id": m.chunk_id, "score": m.score}
                for m in self.matched_questions
            ],
        }


def _context_block(bundle: ContextBundle) -> list[str]:
    return [f"[Source: {c.source_url}]\n{c.text}" for c in bundle.chunks]


def render_rag_prompt(prompt: RagPrompt, bundle: ContextBundle, question: str,
                      context_limit_tokens: int | None = None) -> str:
    """Render the answer prompt, dropping whole lowest-ranked chunks on overflow."""
    tokenizer = WhitespaceTokenizer()

    def render(blocks: list[str]) -> str:
        try:
            return prompt.template.format(context="\n\n".join(blocks),
                                          question=question,
                                          refusal_text=prompt.refusal_text)
        except (KeyError, IndexError) as exc:
            raise TemplateError(f"bad placeholder in answer template: {exc}")

    blocks = _context_block(bundle)
    if context_limit_tokens is None:
        return render(blocks)
    while blocks:
        rendered = render(blocks)
        if tokenizer.count(rendered) <= context_limit_tokens:
            return rendered
        blocks = blocks[:-1]  # chunks are best-first; drop the worst whole
    raise ContextOverflow(
        f"highest-ranked chunk alone exceeds the {context_limit_tokens}-token limit")


def generate_answer(bundle: ContextBundle, question: str, provider,
                    prompt: RagPrompt | None = None,
                    max_tokens: int = 1024) -> Answer:
    """Produce the final grounded answer for a retrieved context bundle.

    An empty bundle short-circuits to a refusal without touching the
    provider. A provider response carrying the configured refusal text is
    flagged as refused as well.
    """
    prompt = prompt or RagPrompt()
    if bundle.empty:
        return Answer(text=prompt.refusal_text, sources=[], refused=True,
                      matched_questions=[])
    limit = getattr(provider, "context_limit_tokens", None)
    rendered = render_rag_prompt(prompt, bundle, question, context_limit_tokens=limit)
    text = provider.complete(rendered, max_tokens=max_tokens)
    refused = prompt.refusal_text.strip().lower() in text.strip().lower()
    sources = []
    if not refused:
        for c in bundle.chunks:
            if c.source_url not in sources:
                sources.append(c.source_url)
    return Answer(text=text, sources=sources, refused=refused,
                  matched_questions=list(bundle.matches))


class MockLlm:
    """Deterministic extractive stand-in for a chat model.

    Picks the context sentence sharing the most content words with the
    question; with no overlap at all it emits the refusal text verbatim.
    """

    provider_id = "mock"
    context_limit_tokens = 8000

    _word_re = re.compile(r"[A-Za-z0-9]+")
    _sentence_re = re.compile(r"(?<=[.?!])\s+")
    _stop = frozenset(
        "the a an and or of to in for on with is are was were be been what where "
        "when who how why does do did this that it its about".split()
    )

    def __init__(self, refusal_text: str = DEFAULT_REFUSAL):
        self.refusal_text = refusal_text

    def _words(self, text: str) -> set[str]:
        return {w.lower() for w in self._word_re.findall(text)} - self._stop

    def complete(self, prompt_text: str, max_tokens: int = 1024) -> str:
        context, question = self._split(prompt_text)
        q_words = self._words(question)
        best, best_overlap = None, 0
        for raw in self._sentence_re.split(context):
            sentence = " ".join(raw.split())
            if not sentence or sentence.startswith("[Source:"):
                continue
            overlap = len(self._words(sentence) & q_words)
            if overlap > best_overlap:
                best, best_overlap = sentence, overlap
        if best is None:
            return self.refusal_text
        return best

    def _split(self, prompt_text: str) -> tuple[str, str]:
        m = re.search(r"Context:\n(.*)\n\nQuestion:\s*(.*?)\nAnswer:",
                      prompt_text, re.DOTALL)
        if not m:
            raise ProviderError("mock LLM could not locate context/question sections")
        # drop the source labels line-wise so they never leak into answers
        context_lines = [ln for ln in m.group(1).splitlines()
                         if not ln.startswith("[Source:")]
        return "\n".join(context_lines), m.group(2)


class HttpLlm:
    """Completion provider over HTTP: POST {"prompt", "max_tokens"} -> {"text"}.

    Configured via QUIM_LLM_ENDPOINT / QUIM_LLM_API_KEY.
    """

    provider_id = "http"

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 context_limit_tokens: int = 8000):
        self.endpoint = endpoint or os.environ.get("QUIM_LLM_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("QUIM_LLM_API_KEY", "")
        self.context_limit_tokens = context_limit_tokens
        if not self.endpoint:
            raise ProviderError("no LLM endpoint configured (QUIM_LLM_ENDPOINT)")

    def complete(self, prompt_text: str, max_tokens: int = 1024) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.endpoint,
                                 json={"prompt": prompt_text, "max_tokens": max_tokens},
                                 headers=headers, timeout=300)
            resp.raise_for_status()
            return resp.json()["text"]
        except Exception as exc:
            raise ProviderError(f"completion request failed: {exc}") from exc
