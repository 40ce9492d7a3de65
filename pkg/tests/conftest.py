from pathlib import Path

import pytest

from quim.corpus import Chunk, Document
from quim.embedding import HashingEmbedder

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def hash_embedder():
    return HashingEmbedder(dim=64, seed=0)


def make_chunk(chunk_id="c1", text="The office is in 306 Ceres Hall.",
               doc_id="d1", seq=0, url="https://example.edu/page"):
    return Chunk(chunk_id=chunk_id, doc_id=doc_id, seq=seq, text=text,
                 token_count=len(text.split()), char_span=(0, len(text)),
                 source_url=url)


def make_doc(text, url="https://example.edu/page", title="Page"):
    return Document(doc_id="d-" + url[-8:], url=url, title=title, text=text)
