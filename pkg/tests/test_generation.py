import pytest

from quim.errors import ContextOverflow
from quim.generation import (DEFAULT_REFUSAL, Answer, MockLlm, RagPrompt,
                             generate_answer, render_rag_prompt)
from quim.retrieval import ChunkRef, ContextBundle, MatchedQuestion

from conftest import FIXTURES


def bundle_of(*chunks, matches=None):
    refs = [ChunkRef(f"c{i}", text, url) for i, (text, url) in enumerate(chunks)]
    matches = matches or [
        MatchedQuestion(f"q{i}", f"question {i}?", ref.chunk_id, 1.0 - i * 0.1)
        for i, ref in enumerate(refs)
    ]
    return ContextBundle(matches=matches, chunks=refs)


class CountingLlm(MockLlm):
    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.calls = 0

    def complete(self, prompt_text, max_tokens=1024):
        self.calls += 1
        return super().complete(prompt_text, max_tokens=max_tokens)


class TestRenderRagPrompt:
    def test_single_chunk_prompt(self):
        bundle = bundle_of(("The office is open.", "https://e.edu/a"))
        rendered = render_rag_prompt(RagPrompt(), bundle, "When is it open?")
        assert "The office is open." in rendered
        assert "[Source: https://e.edu/a]" in rendered
        assert rendered.count("When is it open?") == 1

    def test_overflow_drops_lowest_ranked_whole(self):
        big = " ".join(f"w{i}" for i in range(120))
        bundle = bundle_of((big, "https://e.edu/a"), (big, "https://e.edu/b"),
                           (big, "https://e.edu/c"))
        rendered = render_rag_prompt(RagPrompt(), bundle, "q?",
                                     context_limit_tokens=330)
        assert "https://e.edu/a" in rendered
        assert "https://e.edu/b" in rendered
        assert "https://e.edu/c" not in rendered

    def test_single_chunk_over_limit_raises(self):
        big = " ".join(f"w{i}" for i in range(500))
        bundle = bundle_of((big, "https://e.edu/a"))
        with pytest.raises(ContextOverflow):
            render_rag_prompt(RagPrompt(), bundle, "q?", context_limit_tokens=100)

    def test_default_template_golden(self):
        # golden fixed at first render and reviewed by hand
        bundle = bundle_of(("The office is in 306 Ceres Hall.", "https://e.edu/loc"))
        rendered = render_rag_prompt(RagPrompt(), bundle, "Where is the office?")
        assert rendered == (FIXTURES / "rag_prompt.golden.txt").read_text()


class TestGenerateAnswer:
    def test_empty_bundle_refuses_without_provider_call(self):
        llm = CountingLlm()
        answer = generate_answer(ContextBundle(), "Where?", llm)
        assert answer.refused is True
        assert DEFAULT_REFUSAL in answer.text
        assert answer.sources == []
        assert llm.calls == 0

    def test_extractive_answer_with_source(self):
        bundle = bundle_of(
            ("Office: 306 Ceres Hall. Hours are nine to five.", "https://e.edu/loc"))
        answer = generate_answer(bundle, "Where is the office located?", MockLlm())
        assert "306 Ceres Hall" in answer.text
        assert answer.sources == ["https://e.edu/loc"]
        assert answer.refused is False

    def test_sources_deduplicated(self):
        bundle = bundle_of(("The office is here.", "https://e.edu/a"),
                           ("The office is also described here.", "https://e.edu/a"))
        answer = generate_answer(bundle, "Where is the office?", MockLlm())
        assert answer.sources == ["https://e.edu/a"]

    def test_sentinel_refusal_detected(self):
        bundle = bundle_of(("Totally unrelated botany facts.", "https://e.edu/x"))
        answer = generate_answer(bundle, "zzzz qqqq?", MockLlm())
        assert answer.refused is True
        assert answer.sources == []

    def test_matched_questions_echoed(self):
        bundle = bundle_of(("The office is open monday.", "https://e.edu/a"))
        answer = generate_answer(bundle, "When is the office open?", MockLlm())
        assert answer.matched_questions == bundle.matches

    def test_sources_subset_of_bundle(self):
        bundle = bundle_of(("The office is open monday.", "https://e.edu/a"),
                           ("The center is open tuesday.", "https://e.edu/b"))
        answer = generate_answer(bundle, "When is the office open?", MockLlm())
        assert set(answer.sources) <= {c.source_url for c in bundle.chunks}

    def test_answer_to_dict_shape(self):
        answer = Answer(text="hi", sources=["u"], refused=False,
                        matched_questions=[MatchedQuestion("q", "t?", "c", 0.5)])
        d = answer.to_dict()
        assert d["matched_questions"][0]["score"] == 0.5
        assert set(d) == {"text", "sources", "refused", "matched_questions"}
