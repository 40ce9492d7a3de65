"""Umbrella CLI: ingest -> chunk -> genq -> index -> query/ask/eval/serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import questions as questions_mod
from .embedding import HashingEmbedder, HttpEmbedder
from .evaluation import read_ground_truth, run_eval
from .generation import HttpLlm, MockLlm, generate_answer
from .qindex import build_index, load_index, save_index
from .retrieval import BaselineRetriever, Query, match_query
from .service import ServiceConfig, serve as run_service


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2)


def _embedder(kind: str, dim: int, seed: int, batch: int):
    if kind == "hash":
        return HashingEmbedder(dim=dim, seed=seed)
    return HttpEmbedder(batch_size=batch)


embed_options = [
    click.option("--embedder", "embedder_kind", type=click.Choice(["hash", "http"]),
                 default="hash", show_default=True),
    click.option("--embed-dim", default=64, show_default=True),
    click.option("--embed-seed", default=0, show_default=True),
    click.option("--embed-batch", default=64, show_default=True),
]


def with_embed_options(fn):
    for option in reversed(embed_options):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Question-to-question inverted-index retrieval engine."""


@main.command()
@click.option("--input", "input_path", required=True,
              help="Directory of saved HTML files, or a text file of URLs.")
@click.option("--out", "out_path", required=True)
@click.option("--min-chars", default=250, show_default=True)
@click.option("--base-url", default="https://fixture.local", show_default=True,
              help="URL prefix synthesized for pages read from a directory.")
@click.option("--max-pages", default=200, show_default=True)
@click.option("--delay", default=0.5, show_default=True)
@click.option("--follow-links/--no-follow-links", default=False)
def ingest(input_path, out_path, min_chars, base_url, max_pages, delay, follow_links):
    """Clean and filter raw pages into a corpus of documents."""
    source = Path(input_path)
    if source.is_dir():
        pages = corpus_mod.load_pages_from_dir(source, base_url=base_url)
    else:
        urls = [u.strip() for u in source.read_text().splitlines() if u.strip()]
        pages = corpus_mod.fetch_pages(urls, max_pages=max_pages, delay=delay,
                                       follow_links=follow_links)
    cfg = corpus_mod.ChunkingConfig(min_doc_chars=min_chars)
    docs = corpus_mod.filter_documents(
        [corpus_mod.clean_html(p) for p in pages], cfg)
    manifest = corpus_mod.write_corpus(docs, [], out_path)
    click.echo(_dump(manifest))


@main.command()
@click.option("--corpus", "corpus_path", required=True)
@click.option("--size-tokens", default=1000, show_default=True)
@click.option("--overlap-chars", default=200, show_default=True)
@click.option("--out", "out_path", required=True)
def chunk(corpus_path, size_tokens, overlap_chars, out_path):
    """Slice corpus documents into overlapping token-window chunks."""
    docs, _ = corpus_mod.read_corpus(corpus_path)
    cfg = corpus_mod.ChunkingConfig(chunk_size_tokens=size_tokens,
                                    overlap_chars=overlap_chars)
    chunks = [c for doc in docs for c in corpus_mod.chunk_document(doc, cfg)]
    manifest = corpus_mod.write_corpus(docs, chunks, out_path)
    click.echo(_dump(manifest))


@main.command()
@click.option("--chunks", "chunks_path", required=True)
@click.option("--provider", "provider_kind", type=click.Choice(["mock", "http"]),
              default="mock", show_default=True)
@click.option("--prompt", "prompt_path", default=None,
              help="Question-generation template file ({chunk_text} placeholder).")
@click.option("--out", "out_path", required=True)
@click.option("--max-per-chunk", default=32, show_default=True)
def genq(chunks_path, provider_kind, prompt_path, out_path, max_per_chunk):
    """Generate a deduplicated question set for every chunk."""
    _, chunks = corpus_mod.read_corpus(chunks_path)
    provider = (questions_mod.MockGenerator() if provider_kind == "mock"
                else questions_mod.HttpGenerator())
    prompt = questions_mod.QuestionGenPrompt()
    if prompt_path:
        prompt = questions_mod.QuestionGenPrompt(template=Path(prompt_path).read_text())
    all_questions = []
    for c in sorted(chunks, key=lambda c: c.chunk_id):
        all_questions.extend(questions_mod.generate_questions(
            c, provider, prompt, max_questions=max_per_chunk))
    all_questions = questions_mod.dedupe_questions(all_questions)
    manifest = questions_mod.write_questions(all_questions, out_path)
    click.echo(_dump(manifest))


@main.command(name="index")
@click.option("--chunks", "chunks_path", required=True)
@click.option("--questions", "questions_path", required=True)
@click.option("--out", "out_path", required=True)
@click.option("--prototypes", default="auto", show_default=True,
              help='Number of prototypes, or "auto" for ceil(sqrt(n)).')
@click.option("--seed", default=42, show_default=True)
@with_embed_options
def index_cmd(chunks_path, questions_path, out_path, prototypes, seed,
              embedder_kind, embed_dim, embed_seed, embed_batch):
    """Build and save the prototype-bucketed inverted index."""
    _, chunks = corpus_mod.read_corpus(chunks_path)
    questions = questions_mod.read_questions(questions_path)
    provider = _embedder(embedder_kind, embed_dim, embed_seed, embed_batch)
    k_p = None if prototypes == "auto" else int(prototypes)
    index = build_index(chunks, questions, provider, k_p=k_p, seed=seed)
    save_index(index, out_path)
    click.echo(_dump({"path": out_path, "k_p": index.k_p,
                      "questions_indexed": index.n_postings}))


def _load_context(index_path, chunks_path, questions_path):
    index = load_index(index_path)
    _, chunks = corpus_mod.read_corpus(chunks_path)
    questions = (questions_mod.read_questions(questions_path)
                 if questions_path else [])
    return index, chunks, questions


@main.command()
@click.argument("text")
@click.option("--index", "index_path", required=True)
@click.option("--chunks", "chunks_path", required=True)
@click.option("--questions", "questions_path", default=None)
@click.option("--k", default=3, show_default=True)
@click.option("--n-probe", default=1, show_default=True)
@click.option("--baseline", is_flag=True, default=False)
@with_embed_options
def query(text, index_path, chunks_path, questions_path, k, n_probe, baseline,
          embedder_kind, embed_dim, embed_seed, embed_batch):
    """Retrieve the top-k context bundle for a query (JSON on stdout)."""
    index, chunks, questions = _load_context(index_path, chunks_path, questions_path)
    provider = _embedder(embedder_kind, embed_dim, embed_seed, embed_batch)
    q = Query(text=text, top_k=k, n_probe=n_probe)
    if baseline:
        bundle = BaselineRetriever(chunks, provider).retrieve(q)
    else:
        bundle = match_query(q, index, provider, chunks, questions)
    click.echo(_dump(bundle.to_dict()))


@main.command()
@click.argument("question")
@click.option("--index", "index_path", required=True)
@click.option("--chunks", "chunks_path", required=True)
@click.option("--questions", "questions_path", default=None)
@click.option("--llm", "llm_kind", type=click.Choice(["mock", "http"]),
              default="mock", show_default=True)
@click.option("--k", default=3, show_default=True)
@click.option("--n-probe", default=1, show_default=True)
@click.option("--baseline", is_flag=True, default=False)
@with_embed_options
def ask(question, index_path, chunks_path, questions_path, llm_kind, k, n_probe,
        baseline, embedder_kind, embed_dim, embed_seed, embed_batch):
    """Answer a question end to end (JSON Answer on stdout)."""
    index, chunks, questions = _load_context(index_path, chunks_path, questions_path)
    provider = _embedder(embedder_kind, embed_dim, embed_seed, embed_batch)
    llm = MockLlm() if llm_kind == "mock" else HttpLlm()
    q = Query(text=question, top_k=k, n_probe=n_probe)
    if baseline:
        bundle = BaselineRetriever(chunks, provider).retrieve(q)
    else:
        bundle = match_query(q, index, provider, chunks, questions)
    answer = generate_answer(bundle, question, llm)
    click.echo(_dump(answer.to_dict()))


@main.command(name="eval")
@click.option("--gt", "gt_path", required=True)
@click.option("--index", "index_path", required=True)
@click.option("--chunks", "chunks_path", required=True)
@click.option("--questions", "questions_path", default=None)
@click.option("--pipeline", type=click.Choice(["quim", "baseline", "both"]),
              default="both", show_default=True)
@click.option("--llm", "llm_kind", type=click.Choice(["mock", "http"]),
              default="mock", show_default=True)
@click.option("--k", default=3, show_default=True)
@click.option("--out", "out_path", default=None)
@with_embed_options
def eval_cmd(gt_path, index_path, chunks_path, questions_path, pipeline, llm_kind,
             k, out_path, embedder_kind, embed_dim, embed_seed, embed_batch):
    """Score pipelines against ground truth; prints a side-by-side table."""
    gt_items = read_ground_truth(gt_path)
    index, chunks, questions = _load_context(index_path, chunks_path, questions_path)
    provider = _embedder(embedder_kind, embed_dim, embed_seed, embed_batch)
    llm = MockLlm() if llm_kind == "mock" else HttpLlm()
    pipelines = ["quim", "baseline"] if pipeline == "both" else [pipeline]
    report = run_eval(gt_items, pipelines, index=index, chunks=chunks,
                      questions=questions, embedder=provider, llm=llm, top_k=k)
    if out_path:
        Path(out_path).write_text(report.to_json(), encoding="utf-8")
    click.echo(report.format_table())


@main.command()
@click.option("--config", "config_path", default=None,
              help="TOML config; keys mirror ServiceConfig.")
@click.option("--port", default=None, type=int)
def serve(config_path, port):
    """Run the HTTP API."""
    config = ServiceConfig.from_toml(config_path) if config_path else ServiceConfig()
    if port is not None:
        config.port = port
    run_service(config)


if __name__ == "__main__":
    sys.exit(main())
