from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from sourcerank.index import (
    Index,
    Query,
    TokenizerConfig,
    build_index,
    load_index,
    save_index,
    term_prob_bg,
    term_prob_doc,
    tokenize,
)
from conftest import make_sample


class TestTokenize:
    def test_case_folding(self):
        assert tokenize("The WHO said") == ["the", "who", "said"]

    def test_empty(self):
        assert tokenize("") == []

    def test_hyphen_and_digits_split(self):
        assert tokenize("COVID-19 cases") == ["covid", "19", "cases"]

    def test_stopword_removal_off_by_default(self):
        assert "the" in tokenize("the plan")

    def test_stopword_removal_when_configured(self):
        cfg = TokenizerConfig(stopwords=frozenset({"the"}))
        assert tokenize("the plan", cfg) == ["plan"]

    def test_stemming_only_when_configured(self):
        assert tokenize("warned warnings") == ["warned", "warnings"]
        cfg = TokenizerConfig(stem=True)
        assert tokenize("warned warning", cfg) == ["warn", "warn"]

    @given(st.text())
    def test_deterministic_and_casefolded(self, text):
        once = tokenize(text)
        assert once == tokenize(text)
        assert all(t == t.casefold() for t in once)


class TestBuildIndex:
    def test_single_doc_bookkeeping(self):
        sample = make_sample(1, "w1 w2 w3 w4 w5", "w1", "A")
        index = build_index([sample])
        assert index.n_docs == 1
        assert index.docs["s0001"].length == 5
        assert index.assoc["a"] == frozenset({"s0001"})
        assert index.avg_doc_len == 5

    def test_same_speaker_two_docs(self):
        samples = [make_sample(1, "x y", "x", "A"), make_sample(2, "x z w", "x", "A")]
        index = build_index(samples)
        assert index.assoc["a"] == {"s0001", "s0002"}
        assert index.source_token_totals["a"] == 5

    def test_avg_doc_len(self):
        samples = [make_sample(1, "a b c d", "a", "A"),
                   make_sample(2, "a b c d e f", "a", "B")]
        index = build_index(samples)
        assert index.avg_doc_len == Fraction(5)

    def test_empty_train_fatal(self):
        with pytest.raises(ValueError):
            build_index([])

    def test_order_insensitive(self):
        samples = [make_sample(i, f"tok{i} common word", "tok", f"S{i % 3}")
                   for i in range(9)]
        shuffled = list(samples)
        random.Random(7).shuffle(shuffled)
        assert build_index(samples).digest() == build_index(shuffled).digest()

    def test_invariants(self):
        samples = [make_sample(i, " ".join(f"w{j}" for j in range(i + 2)), "w0",
                               f"S{i % 2}") for i in range(5)]
        index = build_index(samples)
        for doc in index.docs.values():
            assert doc.length == sum(doc.term_counts.values())
        assert index.total_tokens == sum(d.length for d in index.docs.values())
        for source, docs in index.assoc.items():
            assert docs
            assert docs <= set(index.docs)
            assert index.source_token_totals[source] >= len(docs)

    def test_display_name_is_most_frequent_mention(self):
        samples = [
            make_sample(1, "x y", "x", "Dr Fauci", link="uri:f"),
            make_sample(2, "x y", "x", "Anthony Fauci", link="uri:f"),
            make_sample(3, "x y", "x", "Anthony Fauci", link="uri:f"),
        ]
        index = build_index(samples)
        assert index.display_name("uri:f") == "Anthony Fauci"


class TestTermProbs:
    samples = [make_sample(1, "a b a b a b c d", "a", "A"),
               make_sample(2, "a a", "a", "B")]

    def test_mle_ratio(self):
        index = build_index(self.samples)
        assert term_prob_doc(index, "a", "s0001", exact=True) == Fraction(3, 8)
        assert term_prob_doc(index, "a", "s0001") == pytest.approx(0.375)

    def test_absent_term_zero(self):
        index = build_index(self.samples)
        assert term_prob_doc(index, "zzz", "s0001") == 0.0
        assert term_prob_bg(index, "zzz") == 0.0

    def test_unknown_doc_error(self):
        index = build_index(self.samples)
        with pytest.raises(KeyError):
            term_prob_doc(index, "a", "nope")

    def test_distributions_sum_to_one(self):
        index = build_index(self.samples)
        for doc_id, doc in index.docs.items():
            total = sum(term_prob_doc(index, t, doc_id, exact=True)
                        for t in doc.term_counts)
            assert total == 1
        bg_total = sum(term_prob_bg(index, t, exact=True)
                       for t in index.collection_term_counts)
        assert bg_total == 1

    def test_background_ratio(self):
        index = build_index(self.samples)
        assert term_prob_bg(index, "a", exact=True) == Fraction(5, 10)


class TestSnapshot:
    def test_round_trip_preserves_statistics(self, tmp_path):
        samples = [make_sample(i, f"alpha beta w{i}", "alpha", f"S{i % 2}",
                               link=None if i % 2 else "uri:s0")
                   for i in range(6)]
        index = build_index(samples)
        path = tmp_path / "index.bin"
        digest = save_index(index, path)
        loaded = load_index(path)
        assert loaded.digest() == digest == index.digest()
        assert loaded.avg_doc_len == index.avg_doc_len
        assert loaded.assoc == index.assoc

    def test_snapshot_bytes_reproducible(self, tmp_path):
        index = build_index([make_sample(1, "x y z", "x", "A")])
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_index(index, p1)
        save_index(index, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_check(self, tmp_path):
        import gzip
        import json
        path = tmp_path / "bad.bin"
        with gzip.GzipFile(str(path), "wb", mtime=0) as fh:
            fh.write(json.dumps({"format_version": 999}).encode())
        with pytest.raises(ValueError):
            load_index(path)


class TestQuery:
    def test_query_uses_document_tokenizer(self):
        q = Query.from_text("The WHO Said")
        assert q.terms == ("the", "who", "said")
        assert q.term_counts()["the"] == 1
