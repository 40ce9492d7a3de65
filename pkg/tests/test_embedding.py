import numpy as np
import pytest
from hypothesis import given, strategies as st

from quim import embedding
from quim.embedding import (HashingEmbedder, cosine_similarity, embed_batch,
                            embed_text, normalize)
from quim.errors import DimMismatch, EmptyText

unit_vectors = st.lists(
    st.floats(min_value=-1, max_value=1, allow_nan=False), min_size=8, max_size=8
).filter(lambda v: any(abs(x) > 1e-3 for x in v)).map(normalize)


class TestCosine:
    def test_identical(self):
        v = normalize([1.0, 2.0, 3.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_orthogonal_one_hot(self):
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, 1.0, 0.0])
        assert cosine_similarity(e1, e2) == 0.0

    def test_hand_computed(self):
        # dot((0.6, 0.8), (1, 0)) = 0.6 for unit inputs
        assert cosine_similarity([0.6, 0.8], [1.0, 0.0]) == pytest.approx(0.6)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(a=unit_vectors, b=unit_vectors)
    def test_symmetry_exact(self, a, b):
        assert cosine_similarity(a, b) == cosine_similarity(b, a)

    @given(a=unit_vectors, b=unit_vectors)
    def test_cauchy_schwarz(self, a, b):
        assert abs(cosine_similarity(a, b)) <= 1 + 1e-9


class TestEmbedText:
    def test_empty_raises(self, hash_embedder):
        with pytest.raises(EmptyText):
            embed_text("", hash_embedder)
        with pytest.raises(EmptyText):
            embed_text("   ", hash_embedder)

    def test_unit_norm(self, hash_embedder):
        v = embed_text("any text at all", hash_embedder)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)

    def test_deterministic(self, hash_embedder):
        a = embed_text("hello world", hash_embedder)
        b = embed_text("hello world", hash_embedder)
        np.testing.assert_array_equal(a, b)


class TestHashingEmbedder:
    def test_bag_of_words(self, hash_embedder):
        a = embed_text("a b", hash_embedder)
        b = embed_text("b a", hash_embedder)
        np.testing.assert_array_equal(a, b)

    def test_self_similarity(self, hash_embedder):
        v = embed_text("x", hash_embedder)
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_shared_token_beats_disjoint(self, hash_embedder):
        # verified on the fixed seed before retrieval tests rely on it
        shared = cosine_similarity(embed_text("alpha beta", hash_embedder),
                                   embed_text("alpha", hash_embedder))
        disjoint = cosine_similarity(embed_text("gamma delta", hash_embedder),
                                     embed_text("alpha", hash_embedder))
        assert shared > disjoint

    def test_seed_changes_vectors(self):
        a = HashingEmbedder(dim=64, seed=0).embed(["hello"])[0]
        b = HashingEmbedder(dim=64, seed=1).embed(["hello"])[0]
        assert not np.array_equal(a, b)

    def test_min_dim(self):
        with pytest.raises(ValueError):
            HashingEmbedder(dim=4)

    def test_factory_helper(self):
        provider = embedding.test_embedder(dim=32, seed=7)
        assert provider.dim == 32
        assert provider.embedder_id == "hashing-32-7"

    def test_no_word_characters_still_unit(self, hash_embedder):
        v = hash_embedder.embed(["!!! ???"])[0]
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)


def test_embed_batch_shape(hash_embedder):
    X = embed_batch(["one", "two", "three"], hash_embedder)
    assert X.shape == (3, 64)
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-6)


def test_unit_norm_survives_serialization(hash_embedder):
    import json
    v = embed_text("serialize me", hash_embedder)
    back = np.array(json.loads(json.dumps(list(v))))
    assert np.linalg.norm(back) == pytest.approx(1.0, abs=1e-6)
