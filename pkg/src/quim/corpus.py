"""Corpus ingestion: HTML cleanup, filtering, token-window chunking, corpus files."""

from __future__ import annotations

import hashlib
import json
import re
import time
from bisect import bisect_left
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable
from urllib.parse import urlparse, urljoin

from .errors import EmptyDocument, FormatError, MalformedUrl

CORPUS_FORMAT = "quim-corpus"
CORPUS_VERSION = 1

# Elements whose entire subtree is boilerplate or invisible.
_SKIP_TAGS = frozenset(
    {"script", "style", "nav", "header", "footer", "aside", "head", "noscript", "template"}
)

REVIEW_FLAGS = ("unreviewed", "accepted", "reprocess")


@dataclass(frozen=True)
class RawPage:
    url: str
    title: str
    html: str
    fetched_at: str = ""


@dataclass(frozen=True)
class Document:
    doc_id: str
    url: str
    title: str
    text: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    seq: int
    text: str
    token_count: int
    char_span: tuple[int, int]
    source_url: str
    review_flag: str = "unreviewed"


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size_tokens: int = 1000
    overlap_chars: int = 200
    min_doc_chars: int = 250

    def __post_init__(self):
        if self.chunk_size_tokens <= 0:
            raise ValueError("chunk_size_tokens must be positive")
        if self.overlap_chars < 0:
            raise ValueError("overlap_chars must be non-negative")


class WhitespaceTokenizer:
    """Reference tokenizer: maximal runs of non-whitespace, reported as char spans."""

    tokenizer_id = "whitespace"

    _token_re = re.compile(r"\S+")

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self._token_re.finditer(text)]

    def count(self, text: str) -> int:
        return len(self.spans(text))


def doc_id_for(url: str) -> str:
    return hashlib.sha1(url.encode("utf-8")).hexdigest()[:16]


def chunk_id_for(url: str, seq: int) -> str:
    return hashlib.sha1(f"{url}\x00{seq}".encode("utf-8")).hexdigest()[:16]


class _TextExtractor(HTMLParser):
    """Collects visible text, skipping boilerplate subtrees."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS and self._skip_depth > 0:
            self._skip_depth -= 1

    def handle_data(self, data):
        if self._skip_depth == 0 and data.strip():
            self.parts.append(data)


def _validate_url(url: str) -> None:
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise MalformedUrl(f"not a valid absolute URL: {url!r}")


def clean_html(page: RawPage) -> Document:
    """Strip markup and boilerplate from a raw page, collapsing whitespace."""
    _validate_url(page.url)
    extractor = _TextExtractor()
    extractor.feed(page.html)
    extractor.close()
    text = " ".join(" ".join(extractor.parts).split())
    return Document(doc_id=doc_id_for(page.url), url=page.url, title=page.title, text=text)


def filter_documents(docs: Iterable[Document], cfg: ChunkingConfig) -> list[Document]:
    """Drop near-empty pages and 404 placeholders, preserving input order."""
    kept = []
    for doc in docs:
        if len(doc.text) < cfg.min_doc_chars:
            continue
        if doc.title.strip().lower() == "404 page not found":
            continue
        kept.append(doc)
    return kept


def chunk_document(doc: Document, cfg: ChunkingConfig, tokenizer=None) -> list[Chunk]:
    """Slice a document into overlapping token windows.

    Windows hold at most ``chunk_size_tokens`` tokens. Each window after the
    first starts at the token boundary nearest to (previous window's last
    token end - ``overlap_chars``). Char spans are arranged so that stripping
    the overlaps and concatenating reconstructs ``doc.text`` exactly.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    if not doc.text:
        raise EmptyDocument(f"document {doc.doc_id} has empty text")
    spans = tokenizer.spans(doc.text)
    if not spans:
        raise EmptyDocument(f"document {doc.doc_id} has no tokens")

    starts = [s for s, _ in spans]
    n = len(spans)
    chunks: list[Chunk] = []
    a = 0
    seq = 0
    prev_end_char = 0
    while True:
        b = min(a + cfg.chunk_size_tokens, n)
        start_char = 0 if seq == 0 else min(starts[a], prev_end_char)
        end_char = len(doc.text) if b == n else spans[b - 1][1]
        chunks.append(
            Chunk(
                chunk_id=chunk_id_for(doc.url, seq),
                doc_id=doc.doc_id,
                seq=seq,
                text=doc.text[start_char:end_char],
                token_count=b - a,
                char_span=(start_char, end_char),
                source_url=doc.url,
            )
        )
        if b == n:
            break
        prev_end_char = spans[b - 1][1]
        target = prev_end_char - cfg.overlap_chars
        a = min(max(_nearest_index(starts, target), a + 1), b)
        seq += 1
    return chunks


def _nearest_index(starts: list[int], target: int) -> int:
    """Index of the token start closest to target (earlier one on ties)."""
    i = bisect_left(starts, target)
    if i == 0:
        return 0
    if i == len(starts):
        return len(starts) - 1
    if target - starts[i - 1] <= starts[i] - target:
        return i - 1
    return i


# --- corpus files -------------------------------------------------------

def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_corpus(docs: Iterable[Document], chunks: Iterable[Chunk], path) -> dict:
    """Write docs and chunks as JSON-lines; returns a small manifest dict."""
    path = Path(path)
    docs = list(docs)
    chunks = list(chunks)
    lines = [_dump({"format": CORPUS_FORMAT, "version": CORPUS_VERSION})]
    for doc in docs:
        lines.append(_dump({"kind": "doc", **asdict(doc)}))
    for chunk in chunks:
        rec = asdict(chunk)
        rec["char_span"] = list(rec["char_span"])
        lines.append(_dump({"kind": "chunk", **rec}))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"path": str(path), "docs": len(docs), "chunks": len(chunks)}


def read_corpus(path) -> tuple[list[Document], list[Chunk]]:
    path = Path(path)
    docs: list[Document] = []
    chunks: list[Chunk] = []
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
                if rec.get("format") != CORPUS_FORMAT or rec.get("version") != CORPUS_VERSION:
                    raise FormatError(f"line 1: unexpected header {rec}", line_number=1)
                continue
            kind = rec.pop("kind", None)
            try:
                if kind == "doc":
                    docs.append(Document(**rec))
                elif kind == "chunk":
                    rec["char_span"] = tuple(rec["char_span"])
                    chunks.append(Chunk(**rec))
                else:
                    raise FormatError(f"line {lineno}: unknown record kind {kind!r}",
                                      line_number=lineno)
            except TypeError as exc:
                raise FormatError(f"line {lineno}: bad record: {exc}", line_number=lineno)
    return docs, chunks


# --- page acquisition ---------------------------------------------------

def load_pages_from_dir(directory, base_url: str = "https://fixture.local") -> list[RawPage]:
    """Read saved HTML files from a directory, synthesizing stable URLs."""
    directory = Path(directory)
    pages = []
    for p in sorted(directory.rglob("*")):
        if p.suffix.lower() not in (".html", ".htm"):
            continue
        html = p.read_text(encoding="utf-8", errors="replace")
        rel = p.relative_to(directory).as_posix()
        pages.append(RawPage(url=f"{base_url}/{rel}", title=_extract_title(html), html=html))
    return pages


def _extract_title(html: str) -> str:
    m = re.search(r"<title[^>]*>(.*?)</title>", html, re.IGNORECASE | re.DOTALL)
    return " ".join(m.group(1).split()) if m else ""


class _LinkExtractor(HTMLParser):
    def __init__(self):
        super().__init__()
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            for name, value in attrs:
                if name == "href" and value:
                    self.hrefs.append(value)


def fetch_pages(urls: Iterable[str], max_pages: int = 200, delay: float = 0.5,
                follow_links: bool = False) -> list[RawPage]:
    """Fetch pages over HTTP, optionally following same-host links breadth-first."""
    import requests

    seen: set[str] = set()
    queue = list(urls)
    pages: list[RawPage] = []
    hosts = {urlparse(u).netloc for u in queue}
    while queue and len(pages) < max_pages:
        url = queue.pop(0)
        if url in seen:
            continue
        seen.add(url)
        _validate_url(url)
        resp = requests.get(url, timeout=30)
        fetched_at = datetime.now(timezone.utc).isoformat()
        pages.append(RawPage(url=url, title=_extract_title(resp.text),
                             html=resp.text, fetched_at=fetched_at))
        if follow_links:
            extractor = _LinkExtractor()
            extractor.feed(resp.text)
            for href in extractor.hrefs:
                absolute = urljoin(url, href).split("#")[0]
                if urlparse(absolute).netloc in hosts and absolute not in seen:
                    queue.append(absolute)
        if delay:
            time.sleep(delay)
    return pages
