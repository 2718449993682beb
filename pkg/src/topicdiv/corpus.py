"""Document loading, tokenization, vocabulary construction and encoding."""

from __future__ import annotations

import csv
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    firm_id: str
    year: int
    text: str


@dataclass(frozen=True)
class EncodedDocument:
    """Sparse bag-of-words for one document.

    ``token_ids`` is sorted ascending and ``counts`` holds the matching
    positive counts.
    """

    doc_id: str
    token_ids: np.ndarray
    counts: np.ndarray

    @property
    def n_tokens(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {int(t): int(c) for t, c in zip(self.token_ids, self.counts)}

    def expand(self) -> np.ndarray:
        """Token id sequence with each id repeated by its count."""
        return np.repeat(self.token_ids, self.counts)

    @classmethod
    def from_counts(cls, doc_id: str, counts: dict[int, int]) -> "EncodedDocument":
        ids = np.array(sorted(k for k, v in counts.items() if v > 0), dtype=np.int64)
        cnt = np.array([counts[int(i)] for i in ids], dtype=np.int64)
        return cls(doc_id, ids, cnt)


@dataclass(frozen=True)
class CorpusSplit:
    train: list[EncodedDocument]
    validation: list[EncodedDocument]
    seed: int


# --------------------------------------------------------------------------
# loading


def load_corpus(manifest_path, text_dir) -> list[RawDocument]:
    """Read ``doc_id,firm_id,year,filename`` rows and the referenced texts."""
    manifest_path = Path(manifest_path)
    text_dir = Path(text_dir)
    docs: list[RawDocument] = []
    seen: dict[tuple[str, int], str] = {}
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["doc_id", "firm_id", "year", "filename"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise CorpusError(f"{manifest_path}: header must be {','.join(expected)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            doc_id = row["doc_id"].strip()
            try:
                year = int(row["year"].strip())
            except (ValueError, AttributeError):
                raise CorpusError(f"{manifest_path}:{lineno}: doc {doc_id!r} has malformed year {row['year']!r}") from None
            key = (row["firm_id"].strip(), year)
            if key in seen:
                raise CorpusError(
                    f"{manifest_path}:{lineno}: duplicate (firm_id, year) {key} for docs {seen[key]!r} and {doc_id!r}"
                )
            seen[key] = doc_id
            path = text_dir / row["filename"].strip()
            if not path.is_file():
                raise CorpusError(f"{manifest_path}:{lineno}: doc {doc_id!r} references missing file {path}")
            try:
                text = path.read_text(encoding="utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"doc {doc_id!r}: {path} is not valid UTF-8 ({exc})") from None
            if not text.strip():
                raise CorpusError(f"doc {doc_id!r}: {path} is empty")
            docs.append(RawDocument(doc_id, key[0], year, text))
    return docs


def read_word_list(path) -> list[str]:
    """One entry per line; blank lines and ``#`` comments are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(line)
    return out


# --------------------------------------------------------------------------
# tokenization


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x3400 <= cp <= 0x4DBF
        or 0x4E00 <= cp <= 0x9FFF
        or 0xF900 <= cp <= 0xFAFF
        or 0x20000 <= cp <= 0x2FA1F
        or 0x3040 <= cp <= 0x30FF  # kana
        or 0xAC00 <= cp <= 0xD7AF  # hangul syllables
    )


def _is_separator(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return ch.isspace() or cat[0] in "PSZC"


def _units(text: str) -> list[str]:
    """Lowercase text and cut it at whitespace, punctuation and script changes.

    Every CJK character is its own unit; other word characters form runs.
    """
    units: list[str] = []
    buf: list[str] = []
    for ch in text.lower():
        if _is_separator(ch):
            if buf:
                units.append("".join(buf))
                buf = []
        elif _is_cjk(ch):
            if buf:
                units.append("".join(buf))
                buf = []
            units.append(ch)
        else:
            buf.append(ch)
    if buf:
        units.append("".join(buf))
    return units


def _join_units(units: Sequence[str]) -> str:
    out = units[0]
    for prev, cur in zip(units, units[1:]):
        out += cur if (_is_cjk(prev[-1]) and _is_cjk(cur[0])) else " " + cur
    return out


@dataclass
class Lexicon:
    """User dictionary of atomic phrases plus a stopword list.

    Entries are normalized through the same unit splitter the tokenizer uses,
    so ``"Green Energy Co."`` and ``"green energy co"`` are the same entry.
    """

    entries: Iterable[str] = ()
    stopwords: Iterable[str] = ()
    _phrases: dict[tuple[str, ...], str] = field(init=False, repr=False)
    _max_len: int = field(init=False, repr=False)

    def __post_init__(self):
        phrases: dict[tuple[str, ...], str] = {}
        for entry in self.entries:
            units = tuple(_units(entry))
            if units:
                phrases[units] = _join_units(units)
        stops = {_join_units(u) for u in map(_units, self.stopwords) if u}
        clash = stops & set(phrases.values())
        if clash:
            raise CorpusError(f"lexicon entries also listed as stopwords: {sorted(clash)}")
        self.entries = frozenset(phrases.values())
        self.stopwords = frozenset(stops)
        self._phrases = phrases
        self._max_len = max((len(p) for p in phrases), default=0)

    @classmethod
    def from_files(cls, entries_path=None, stopwords_path=None) -> "Lexicon":
        entries = read_word_list(entries_path) if entries_path else []
        stops = read_word_list(stopwords_path) if stopwords_path else []
        return cls(entries, stops)


def _tokenize_once(text: str, lexicon: Lexicon) -> list[str]:
    units = _units(text)
    tokens: list[str] = []
    i = 0
    n = len(units)
    while i < n:
        matched = None
        for span in range(min(lexicon._max_len, n - i), 1, -1):
            phrase = lexicon._phrases.get(tuple(units[i : i + span]))
            if phrase is not None:
                matched = (phrase, span)
                break
        if matched is None:
            tokens.append(units[i])
            i += 1
        else:
            tokens.append(matched[0])
            i += matched[1]
    return [t for t in tokens if not t.isdigit() and t not in lexicon.stopwords]


def tokenize(text: str, lexicon: Lexicon | None = None) -> list[str]:
    """Default tokenizer: lowercase, longest-match lexicon phrases, then units.

    Digits-only tokens and stopwords are dropped after phrase matching. The
    pass is repeated until stable because dropping a stopword can bring two
    halves of a phrase together; this makes the tokenizer idempotent on its
    own space-joined output.
    """
    lexicon = lexicon if lexicon is not None else Lexicon()
    tokens = _tokenize_once(text, lexicon)
    for _ in range(len(tokens)):
        again = _tokenize_once(" ".join(tokens), lexicon)
        if again == tokens:
            break
        tokens = again
    return tokens


# --------------------------------------------------------------------------
# vocabulary and encoding


@dataclass(frozen=True)
class Vocabulary:
    id_to_token: tuple[str, ...]
    doc_freq: tuple[int, ...]
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.id_to_token:
            raise CorpusError("vocabulary is empty")
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.id_to_token)})

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token) -> bool:
        return token in self.token_to_id

    def __getitem__(self, token: str) -> int:
        return self.token_to_id[token]


def build_vocabulary(docs: Sequence[Sequence[str]], min_doc_freq: int = 1) -> Vocabulary:
    """Keep tokens present in at least ``min_doc_freq`` documents.

    Ids follow descending corpus frequency with lexicographic tie-breaks.
    """
    if min_doc_freq < 1:
        raise CorpusError("min_doc_freq must be >= 1")
    df: Counter = Counter()
    tf: Counter = Counter()
    for toks in docs:
        tf.update(toks)
        df.update(set(toks))
    kept = [t for t, c in df.items() if c >= min_doc_freq]
    if not kept:
        raise CorpusError("no token reaches the document-frequency floor; vocabulary would be empty")
    kept.sort(key=lambda t: (-tf[t], t))
    return Vocabulary(tuple(kept), tuple(df[t] for t in kept))


def encode(
    docs: Sequence[Sequence[str]], vocab: Vocabulary, doc_ids: Sequence[str] | None = None
) -> tuple[list[EncodedDocument], list[str]]:
    """Map tokenized documents to sparse counts.

    Returns the encoded documents and the ids of documents left empty after
    out-of-vocabulary tokens were dropped.
    """
    if doc_ids is None:
        doc_ids = [str(i) for i in range(len(docs))]
    encoded, excluded = [], []
    for doc_id, toks in zip(doc_ids, docs):
        counts = Counter(vocab.token_to_id[t] for t in toks if t in vocab.token_to_id)
        if not counts:
            excluded.append(doc_id)
            continue
        encoded.append(EncodedDocument.from_counts(doc_id, counts))
    return encoded, excluded


def split_train_validation(docs: Sequence[EncodedDocument], validation_fraction: float = 0.1, seed: int = 0) -> CorpusSplit:
    if not 0.0 < validation_fraction < 1.0:
        raise CorpusError(f"validation_fraction must lie in (0, 1), got {validation_fraction}")
    n = len(docs)
    if n < 2:
        raise CorpusError("need at least 2 documents to split")
    n_val = math.ceil(validation_fraction * n)
    if n_val >= n:
        raise CorpusError(f"validation fraction {validation_fraction} leaves no training documents out of {n}")
    order = np.random.default_rng(seed).permutation(n)
    val_idx = set(order[:n_val].tolist())
    train = [d for i, d in enumerate(docs) if i not in val_idx]
    validation = [d for i, d in enumerate(docs) if i in val_idx]
    return CorpusSplit(train, validation, seed)
