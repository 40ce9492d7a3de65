"""Per-chunk question generation via an instruction-following LLM provider."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

from .corpus import Chunk
from .errors import EmptyGeneration, FormatError, ProviderError, TemplateError

QUESTIONS_FORMAT = "quim-questions"
QUESTIONS_VERSION = 1

DEFAULT_QGEN_TEMPLATE = """\
You are preparing a question bank for a document retrieval system.
Read the passage below and write a set of questions that together cover
all the key information it contains. Each question must be unique, answerable
from the passage alone, and contextually relevant to it. Avoid redundant or
overlapping questions. Output one question per line with no numbering.

Passage:
{chunk_text}
"""

_LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


@dataclass(frozen=True)
class GeneratedQuestion:
    question_id: str
    chunk_id: str
    text: str
    origin: str = "llm"


@dataclass(frozen=True)
class QuestionGenPrompt:
    template: str = DEFAULT_QGEN_TEMPLATE


@runtime_checkable
class GeneratorProvider(Protocol):
    provider_id: str

    def generate(self, prompt: str) -> list[str]: ...


def normalize_question(text: str) -> str:
    return " ".join(text.split()).lower()


def render_qgen_prompt(prompt: QuestionGenPrompt, chunk: Chunk) -> str:
    """Fill the template with the chunk text; the chunk appears verbatim once."""
    try:
        return prompt.template.format(chunk_text=chunk.text)
    except (KeyError, IndexError) as exc:
        raise TemplateError(f"bad placeholder in question-generation template: {exc}")


def question_id_for(chunk_id: str, text: str) -> str:
    key = f"{chunk_id}\x00{normalize_question(text)}"
    return hashlib.sha1(key.encode("utf-8")).hexdigest()[:16]


def generate_questions(chunk: Chunk, provider: GeneratorProvider,
                       prompt: QuestionGenPrompt | None = None,
                       max_questions: int = 32) -> list[GeneratedQuestion]:
    """Generate a deduplicated question set for one chunk.

    Provider output is parsed one question per line with list markers
    stripped; questions are normalized to end with "?".
    """
    if not chunk.text.strip():
        raise EmptyGeneration(f"chunk {chunk.chunk_id} has no text")
    prompt = prompt or QuestionGenPrompt()
    rendered = render_qgen_prompt(prompt, chunk)
    lines = provider.generate(rendered)
    questions: list[GeneratedQuestion] = []
    seen: set[str] = set()
    for line in lines:
        text = _LIST_MARKER.sub("", line).strip()
        if not text:
            continue
        if not text.endswith("?"):
            text += "?"
        key = normalize_question(text)
        if key in seen:
            continue
        seen.add(key)
        questions.append(GeneratedQuestion(
            question_id=question_id_for(chunk.chunk_id, text),
            chunk_id=chunk.chunk_id,
            text=text,
        ))
        if len(questions) >= max_questions:
            break
    if not questions:
        raise EmptyGeneration(f"provider produced no usable questions for {chunk.chunk_id}")
    return questions


def dedupe_questions(questions: Iterable[GeneratedQuestion]) -> list[GeneratedQuestion]:
    """Drop exact normalized duplicates within a chunk; cross-chunk repeats stay."""
    seen: set[tuple[str, str]] = set()
    out = []
    for q in questions:
        key = (q.chunk_id, normalize_question(q.text))
        if key in seen:
            continue
        seen.add(key)
        out.append(q)
    return out


class MockGenerator:
    """Deterministic template-based stand-in for an instruction LLM.

    Emits one question per distinctive content word of the chunk (longest
    words first, ties alphabetical), so generated questions share vocabulary
    with the chunk they came from.
    """

    provider_id = "mock"

    _word_re = re.compile(r"[A-Za-z0-9]+")
    _stop = frozenset(
        "the a an and or of to in for on with is are was were be been this that "
        "these those it its as at by from".split()
    )

    def __init__(self, questions_per_chunk: int = 5):
        self.questions_per_chunk = questions_per_chunk

    def generate(self, prompt: str) -> list[str]:
        # question-bank prompts carry the chunk after a "Passage:" marker;
        # fall back to the whole prompt for custom templates
        _, _, passage = prompt.rpartition("Passage:")
        words = [w.lower() for w in self._word_re.findall(passage or prompt)]
        content = sorted(
            {w for w in words if w not in self._stop and len(w) > 3},
            key=lambda w: (-len(w), w),
        )
        return [f"What does the text say about {w}?" for w in content[:self.questions_per_chunk]]


class HttpGenerator:
    """Question generation over HTTP: POST {"prompt": ...} -> {"questions": [...]}.

    Configured via QUIM_LLM_ENDPOINT / QUIM_LLM_API_KEY.
    """

    provider_id = "http"

    def __init__(self, endpoint: str | None = None, api_key: str | None = None):
        self.endpoint = endpoint or os.environ.get("QUIM_LLM_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("QUIM_LLM_API_KEY", "")
        if not self.endpoint:
            raise ProviderError("no LLM endpoint configured (QUIM_LLM_ENDPOINT)")

    def generate(self, prompt: str) -> list[str]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.endpoint, json={"prompt": prompt},
                                 headers=headers, timeout=300)
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise ProviderError(f"question generation request failed: {exc}") from exc
        if "questions" in payload:
            return list(payload["questions"])
        if "text" in payload:
            return payload["text"].splitlines()
        raise ProviderError("unrecognized generation response shape")


# --- questions file -----------------------------------------------------

def write_questions(questions: Iterable[GeneratedQuestion], path) -> dict:
    path = Path(path)
    questions = list(questions)
    lines = [json.dumps({"format": QUESTIONS_FORMAT, "version": QUESTIONS_VERSION},
                        sort_keys=True, separators=(",", ":"))]
    for q in questions:
        lines.append(json.dumps(asdict(q), sort_keys=True, ensure_ascii=False,
                                separators=(",", ":")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"path": str(path), "questions": len(questions)}


def read_questions(path) -> list[GeneratedQuestion]:
    path = Path(path)
    out: list[GeneratedQuestion] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON: {exc}", line_number=lineno)
            if lineno == 1:
                if rec.get("format") != QUESTIONS_FORMAT or rec.get("version") != QUESTIONS_VERSION:
                    raise FormatError(f"line 1: unexpected header {rec}", line_number=1)
                continue
            try:
                out.append(GeneratedQuestion(**rec))
            except TypeError as exc:
                raise FormatError(f"line {lineno}: bad record: {exc}", line_number=lineno)
    return out
