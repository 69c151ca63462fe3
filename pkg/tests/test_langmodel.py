import math

import pytest

from shapereader.langmodel import (
    ALPHABET_SIZE,
    CorpusError,
    WordFrequencyTable,
    load_ngram_model,
    load_word_frequencies,
    ngram_prob,
    rerank,
    save_ngram_model,
    tokenize_corpus,
    train_char_ngrams,
)

CORPUS = "the cat sat on the mat; the cat ate."


def test_tokenize_strips_non_alpha():
    assert tokenize_corpus("Hello, world! 42") == ["Hello", "world"]
    assert tokenize_corpus("...") == []


def test_empty_corpus_rejected():
    with pytest.raises(CorpusError):
        train_char_ngrams("123 !!!")


def test_counts_by_hand():
    m = train_char_ngrams(CORPUS)
    # words: the cat sat on the mat the cat ate
    assert m.total_words == 9
    assert m.total_chars == 26
    assert m.unigram["t"] == 8
    assert m.bigram[("t", "h")] == 3
    assert m.trigram[("t", "h", "e")] == 3
    assert m.head_unigram["t"] == 3
    assert m.tail_unigram["t"] == 4
    assert m.head_bigram[("c", "a")] == 2
    assert m.tail_bigram[("a", "t")] == 4


def test_smoothed_probabilities_by_hand():
    alpha = 0.5
    m = train_char_ngrams(CORPUS, alpha=alpha)
    # bigram P(h | t): count(t,h)=3, context total = count(t,*)=4 (th x3, te x1)
    assert m.bigram_prob("t", "h") == pytest.approx((3 + alpha) / (4 + ALPHABET_SIZE * alpha))
    # unseen transition still gets mass
    assert m.bigram_prob("t", "z") == pytest.approx(alpha / (4 + ALPHABET_SIZE * alpha))
    assert m.unigram_prob("t") == pytest.approx((8 + alpha) / (26 + ALPHABET_SIZE * alpha))


def test_conditionals_sum_to_one():
    m = train_char_ngrams(CORPUS)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    assert len(letters) == ALPHABET_SIZE
    for dist in (
        [m.unigram_prob(c) for c in letters],
        [m.bigram_prob("t", c) for c in letters],
        [m.trigram_prob("t", "h", c) for c in letters],
        [m.head_unigram_prob(c) for c in letters],
        [m.head_bigram_prob("c", c) for c in letters],
        [m.tail_unigram_prob(c) for c in letters],
        [m.tail_bigram_prob("a", c) for c in letters],
    ):
        assert sum(dist) == pytest.approx(1.0)
        assert all(p > 0 for p in dist)


def test_ngram_prob_dispatch():
    m = train_char_ngrams(CORPUS)
    assert ngram_prob(m, "", "t") == m.unigram_prob("t")
    assert ngram_prob(m, "t", "h") == m.bigram_prob("t", "h")
    assert ngram_prob(m, "th", "e") == m.trigram_prob("t", "h", "e")
    with pytest.raises(CorpusError):
        ngram_prob(m, "the", "x")


def test_non_alphabet_symbol_rejected():
    m = train_char_ngrams(CORPUS)
    with pytest.raises(CorpusError):
        m.unigram_prob("!")


def test_model_round_trip(tmp_path):
    m = train_char_ngrams(CORPUS, alpha=0.25)
    p = tmp_path / "lm.txt"
    save_ngram_model(p, m)
    back = load_ngram_model(p)
    assert back.alpha == m.alpha
    assert back.total_words == m.total_words
    assert back.total_chars == m.total_chars
    for kind in ("unigram", "bigram", "trigram", "head_bigram", "tail_bigram"):
        assert getattr(back, kind) == getattr(m, kind)
    assert back.trigram_prob("t", "h", "e") == m.trigram_prob("t", "h", "e")
    # byte-stable re-save
    p2 = tmp_path / "lm2.txt"
    save_ngram_model(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("WRONG v9\n")
    with pytest.raises(CorpusError):
        load_ngram_model(p)


# ---------------------------------------------------------------------------
# word frequencies and re-ranking

class _Path:
    def __init__(self, word, score):
        self.word = word
        self.score = score
        self.final_score = 0.0


def test_word_frequencies(tmp_path):
    p = tmp_path / "lex.txt"
    p.write_text("cat\t30\ndog\t10\n")
    table = load_word_frequencies(p)
    assert table.frequency("cat") == pytest.approx(0.75)
    assert table.frequency("dog") == pytest.approx(0.25)
    assert table.frequency("zebra") == pytest.approx(1e-9)


def test_rerank_orders_by_combined_score(tmp_path):
    p = tmp_path / "lex.txt"
    p.write_text("cat\t99\ncot\t1\n")
    table = load_word_frequencies(p)
    a, b = _Path("cot", 1.0), _Path("cat", 0.9)
    out = rerank([a, b], table, lam=1.0)
    # oracle: final = score + lam * log(freq)
    assert a.final_score == pytest.approx(1.0 + math.log(0.01))
    assert b.final_score == pytest.approx(0.9 + math.log(0.99))
    assert out == [b, a]


def test_rerank_lambda_zero_keeps_parser_order(tmp_path):
    p = tmp_path / "lex.txt"
    p.write_text("cat\t99\ncot\t1\n")
    table = load_word_frequencies(p)
    a, b = _Path("cot", 1.0), _Path("cat", 0.9)
    assert rerank([a, b], table, lam=0.0) == [a, b]


def test_rerank_is_stable_on_ties(tmp_path):
    p = tmp_path / "lex.txt"
    p.write_text("aa\t1\nbb\t1\n")
    table = load_word_frequencies(p)
    a, b = _Path("aa", 1.0), _Path("bb", 1.0)
    assert rerank([a, b], table, lam=1.0) == [a, b]
    assert rerank([b, a], table, lam=1.0) == [b, a]
