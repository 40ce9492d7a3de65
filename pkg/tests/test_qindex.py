import numpy as np
import pytest

from quim.embedding import HashingEmbedder
from quim.errors import (ChecksumError, ReferentialIntegrity, UnknownPrototype,
                         VersionMismatch)
from quim.qindex import build_index, load_index, lookup, save_index
from quim.questions import GeneratedQuestion

from conftest import make_chunk


def fixture_corpus(n_chunks=4, questions_per_chunk=3):
    chunks = [
        make_chunk(chunk_id=f"c{i}",
                   text=f"Chunk {i} covers topic{i} and detail{i} extensively.",
                   url=f"https://e.edu/{i}")
        for i in range(n_chunks)
    ]
    questions = [
        GeneratedQuestion(question_id=f"q{i}-{j}", chunk_id=f"c{i}",
                          text=f"What about topic{i} aspect{j}?")
        for i in range(n_chunks) for j in range(questions_per_chunk)
    ]
    return chunks, questions


@pytest.fixture
def built(hash_embedder):
    chunks, questions = fixture_corpus()
    return chunks, questions, build_index(chunks, questions, hash_embedder,
                                          k_p=3, seed=1)


class TestBuildIndex:
    def test_single_prototype_single_bucket(self, hash_embedder):
        chunks, questions = fixture_corpus(n_chunks=1, questions_per_chunk=5)
        index = build_index(chunks, questions, hash_embedder, k_p=1)
        assert index.k_p == 1
        assert len(index.postings[0]) == 5

    def test_partition(self, hash_embedder):
        chunks, questions = fixture_corpus(n_chunks=5, questions_per_chunk=2)
        index = build_index(chunks, questions, hash_embedder, k_p=3)
        sizes = [len(index.postings[i]) for i in range(3)]
        assert sum(sizes) == 10
        ids = [p.question_id for b in index.postings.values() for p in b]
        assert len(ids) == len(set(ids))

    def test_brute_force_requantization(self, built):
        _, _, index = built
        for proto_id, bucket in index.postings.items():
            for posting in bucket:
                sims = index.prototypes.vectors @ posting.vector
                assert int(np.argmax(sims)) == proto_id

    def test_missing_chunk_rejected(self, hash_embedder):
        chunks, questions = fixture_corpus()
        questions.append(GeneratedQuestion(question_id="zz", chunk_id="nope",
                                           text="Dangling?"))
        with pytest.raises(ReferentialIntegrity):
            build_index(chunks, questions, hash_embedder)

    def test_buckets_sorted_by_question_id(self, built):
        _, _, index = built
        for bucket in index.postings.values():
            ids = [p.question_id for p in bucket]
            assert ids == sorted(ids)

    def test_auto_prototypes(self, hash_embedder):
        chunks, questions = fixture_corpus(n_chunks=4, questions_per_chunk=4)
        index = build_index(chunks, questions, hash_embedder)
        assert index.k_p == 4  # ceil(sqrt(16))


class TestLookup:
    def test_returns_bucket(self, built):
        _, _, index = built
        for proto_id in range(index.k_p):
            assert lookup(index, proto_id) == index.postings[proto_id]

    def test_out_of_range(self, built):
        _, _, index = built
        with pytest.raises(UnknownPrototype):
            lookup(index, index.k_p)
        with pytest.raises(UnknownPrototype):
            lookup(index, -1)

    def test_empty_bucket_possible(self, hash_embedder):
        chunks, questions = fixture_corpus(n_chunks=1, questions_per_chunk=1)
        index = build_index(chunks, questions, hash_embedder, k_p=1)
        assert lookup(index, 0) == index.postings[0]


class TestSaveLoad:
    def test_roundtrip_structural(self, built, tmp_path):
        _, _, index = built
        path = tmp_path / "x.qidx"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.header == index.header
        np.testing.assert_array_equal(loaded.prototypes.vectors,
                                      index.prototypes.vectors)
        assert loaded.k_p == index.k_p
        for proto_id in range(index.k_p):
            a, b = index.postings[proto_id], loaded.postings[proto_id]
            assert [(p.question_id, p.chunk_id) for p in a] == \
                   [(p.question_id, p.chunk_id) for p in b]
            for pa, pb in zip(a, b):
                np.testing.assert_array_equal(pa.vector, pb.vector)

    def test_roundtrip_bit_exact(self, built, tmp_path):
        _, _, index = built
        p1, p2 = tmp_path / "a.qidx", tmp_path / "b.qidx"
        save_index(index, p1)
        save_index(load_index(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_mismatch(self, built, tmp_path):
        _, _, index = built
        path = tmp_path / "x.qidx"
        save_index(index, path)
        data = path.read_bytes()
        path.write_bytes(data.replace(b'"version":1', b'"version":9', 1))
        with pytest.raises(VersionMismatch):
            load_index(path)

    def test_truncated_file(self, built, tmp_path):
        _, _, index = built
        path = tmp_path / "x.qidx"
        save_index(index, path)
        path.write_bytes(path.read_bytes()[:-30])
        with pytest.raises(ChecksumError):
            load_index(path)

    def test_corrupted_vector_bytes(self, built, tmp_path):
        _, _, index = built
        path = tmp_path / "x.qidx"
        save_index(index, path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises((ChecksumError, VersionMismatch)):
            load_index(path)
