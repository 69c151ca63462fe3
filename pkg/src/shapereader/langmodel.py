"""Character n-gram models (orders 1-3 with head/tail variants) and a word
frequency table for parse-path re-ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .shapes import ALPHABET

ALPHABET_SIZE = len(ALPHABET)
_LETTERS = set(ALPHABET)

DEFAULT_ALPHA = 0.01
DEFAULT_FLOOR = 1e-9


class CorpusError(ValueError):
    pass


def _clean_token(token: str) -> str:
    return "".join(ch for ch in token if ch in _LETTERS)


def tokenize_corpus(text: str) -> list[str]:
    """Whitespace tokenization with non-alphabetic characters stripped."""
    tokens = [_clean_token(t) for t in text.split()]
    return [t for t in tokens if t]


@dataclass
class CharNGramModel:
    alpha: float = DEFAULT_ALPHA
    unigram: dict = field(default_factory=dict)           # char -> count
    bigram: dict = field(default_factory=dict)            # (c1, c2) -> count
    trigram: dict = field(default_factory=dict)           # (c1, c2, c3) -> count
    head_unigram: dict = field(default_factory=dict)      # word-initial char
    head_bigram: dict = field(default_factory=dict)       # word-initial pair
    tail_unigram: dict = field(default_factory=dict)      # word-final char
    tail_bigram: dict = field(default_factory=dict)       # word-final pair
    total_chars: int = 0
    total_words: int = 0

    _ctx_cache: dict = field(default_factory=dict, repr=False)

    def _check(self, *chars: str) -> None:
        for ch in chars:
            if ch not in _LETTERS:
                raise CorpusError(f"non-alphabet symbol {ch!r}")

    def _ctx(self, kind: str, context) -> int:
        # context totals, built once per table (models are immutable after training)
        if kind not in self._ctx_cache:
            totals: dict = {}
            for key, v in getattr(self, kind).items():
                totals[key[:-1]] = totals.get(key[:-1], 0) + v
            self._ctx_cache[kind] = totals
        return self._ctx_cache[kind].get(context, 0)

    # smoothed conditionals; every conditional distribution sums to 1
    def unigram_prob(self, c: str) -> float:
        self._check(c)
        return (self.unigram.get(c, 0) + self.alpha) / (self.total_chars + ALPHABET_SIZE * self.alpha)

    def bigram_prob(self, c1: str, c2: str) -> float:
        self._check(c1, c2)
        ctx = self._ctx("bigram", (c1,))
        return (self.bigram.get((c1, c2), 0) + self.alpha) / (ctx + ALPHABET_SIZE * self.alpha)

    def trigram_prob(self, c1: str, c2: str, c3: str) -> float:
        self._check(c1, c2, c3)
        ctx = self._ctx("trigram", (c1, c2))
        return (self.trigram.get((c1, c2, c3), 0) + self.alpha) / (ctx + ALPHABET_SIZE * self.alpha)

    def head_unigram_prob(self, c: str) -> float:
        self._check(c)
        return (self.head_unigram.get(c, 0) + self.alpha) / (self.total_words + ALPHABET_SIZE * self.alpha)

    def head_bigram_prob(self, c1: str, c2: str) -> float:
        self._check(c1, c2)
        ctx = self._ctx("head_bigram", (c1,))
        return (self.head_bigram.get((c1, c2), 0) + self.alpha) / (ctx + ALPHABET_SIZE * self.alpha)

    def tail_unigram_prob(self, c: str) -> float:
        self._check(c)
        return (self.tail_unigram.get(c, 0) + self.alpha) / (self.total_words + ALPHABET_SIZE * self.alpha)

    def tail_bigram_prob(self, c1: str, c2: str) -> float:
        """P(final char = c2 | penultimate char = c1)."""
        self._check(c1, c2)
        ctx = self._ctx("tail_bigram", (c1,))
        return (self.tail_bigram.get((c1, c2), 0) + self.alpha) / (ctx + ALPHABET_SIZE * self.alpha)


def train_char_ngrams(corpus: str | list[str], alpha: float = DEFAULT_ALPHA) -> CharNGramModel:
    """Additive-alpha smoothed counts from a token stream (or raw text)."""
    tokens = tokenize_corpus(corpus) if isinstance(corpus, str) else [
        t for t in (_clean_token(x) for x in corpus) if t
    ]
    if not tokens:
        raise CorpusError("corpus contains no alphabetic tokens")
    model = CharNGramModel(alpha=alpha)
    for word in tokens:
        model.total_words += 1
        model.total_chars += len(word)
        for ch in word:
            model.unigram[ch] = model.unigram.get(ch, 0) + 1
        for a, b in zip(word, word[1:]):
            model.bigram[(a, b)] = model.bigram.get((a, b), 0) + 1
        for a, b, c in zip(word, word[1:], word[2:]):
            model.trigram[(a, b, c)] = model.trigram.get((a, b, c), 0) + 1
        model.head_unigram[word[0]] = model.head_unigram.get(word[0], 0) + 1
        model.tail_unigram[word[-1]] = model.tail_unigram.get(word[-1], 0) + 1
        if len(word) >= 2:
            hp = (word[0], word[1])
            tp = (word[-2], word[-1])
            model.head_bigram[hp] = model.head_bigram.get(hp, 0) + 1
            model.tail_bigram[tp] = model.tail_bigram.get(tp, 0) + 1
    return model


def ngram_prob(model: CharNGramModel, context: str, next_char: str) -> float:
    """Conditional probability of next_char; order picked by context length (0-2)."""
    if len(context) == 0:
        return model.unigram_prob(next_char)
    if len(context) == 1:
        return model.bigram_prob(context[0], next_char)
    if len(context) == 2:
        return model.trigram_prob(context[0], context[1], next_char)
    raise CorpusError(f"context length must be 0-2, got {len(context)}")


def save_ngram_model(path, model: CharNGramModel) -> None:
    with open(path, "w") as fh:
        fh.write(f"CHARNGRAM v1\talpha={model.alpha}\twords={model.total_words}\tchars={model.total_chars}\n")
        for kind in ("unigram", "bigram", "trigram", "head_unigram", "head_bigram", "tail_unigram", "tail_bigram"):
            table = getattr(model, kind)
            for key in sorted(table):
                gram = key if isinstance(key, str) else "".join(key)
                fh.write(f"{kind}\t{gram}\t{table[key]}\n")


def load_ngram_model(path) -> CharNGramModel:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "CHARNGRAM v1":
            raise CorpusError("not a CHARNGRAM v1 file")
        meta = dict(item.split("=") for item in header[1:])
        model = CharNGramModel(
            alpha=float(meta["alpha"]),
            total_words=int(meta["words"]),
            total_chars=int(meta["chars"]),
        )
        for line in fh:
            kind, gram, count = line.rstrip("\n").split("\t")
            key = gram if kind in ("unigram", "head_unigram", "tail_unigram") else tuple(gram)
            getattr(model, kind)[key] = int(count)
    return model


# ---------------------------------------------------------------------------
# word frequency table and re-ranking

@dataclass
class WordFrequencyTable:
    counts: dict[str, float] = field(default_factory=dict)
    floor: float = DEFAULT_FLOOR

    @property
    def total(self) -> float:
        return sum(self.counts.values())

    def frequency(self, word: str) -> float:
        total = self.total
        if total <= 0 or word not in self.counts:
            return self.floor
        return max(self.counts[word] / total, self.floor)


def load_word_frequencies(path, floor: float = DEFAULT_FLOOR) -> WordFrequencyTable:
    """Lexicon file: `word<TAB>count` per line."""
    table = WordFrequencyTable(floor=floor)
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            word, count = line.split("\t")
            table.counts[word] = table.counts.get(word, 0.0) + float(count)
    return table


def rerank(paths: list, table: WordFrequencyTable, lam: float = 1.0) -> list:
    """Stable re-ranking: final score = parser score + lam * log(word frequency
    with floor). Returns the same path objects, reordered, with .final_score set."""
    scored = []
    for i, p in enumerate(paths):
        final = p.score + lam * math.log(table.frequency(p.word))
        p.final_score = final
        scored.append((final, i, p))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [p for _, _, p in scored]
