"""CoNLL column corpora, vocabularies, word2vec text embeddings, BIO2 checks."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError

logger = logging.getLogger(__name__)

UNK = "<unk>"

POS_COLUMNS = ("word", "label")
NER_COLUMNS = ("word", "pos", "chunk", "label")
KNOWN_COLUMNS = {"word", "pos", "chunk", "label"}

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class Token:
    word: str
    label: str | None = None
    pos: str | None = None
    chunk: str | None = None


@dataclass
class TaggedSentence:
    tokens: list

    def __post_init__(self):
        if not self.tokens:
            raise DataError("a sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> list:
        return [t.word for t in self.tokens]

    @property
    def labels(self) -> list:
        return [t.label for t in self.tokens]

    def column(self, name: str) -> list:
        return [getattr(t, name) for t in self.tokens]

    def with_labels(self, labels: Sequence[str]) -> TaggedSentence:
        if len(labels) != len(self.tokens):
            raise DataError("label count does not match sentence length")
        return TaggedSentence(
            [Token(t.word, lab, t.pos, t.chunk) for t, lab in zip(self.tokens, labels)]
        )


def parse_columns(spec) -> tuple:
    """Accepts ``"word,pos,chunk,label"`` or a sequence of names."""
    if isinstance(spec, str):
        spec = [c.strip() for c in spec.split(",") if c.strip()]
    spec = tuple(spec)
    unknown = set(spec) - KNOWN_COLUMNS
    if unknown or "word" not in spec or len(set(spec)) != len(spec):
        raise ConfigError(f"bad column spec {spec!r}; names must be unique among {sorted(KNOWN_COLUMNS)}")
    return spec


def _read_lines(path):
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8 at byte {exc.start}", path=path) from None
    if text.startswith("\ufeff"):
        text = text[1:]
    return text.splitlines()


def read_conll(path, column_spec=NER_COLUMNS, strict: bool = False,
               allow_missing_label: bool = False) -> list:
    """Read blank-line separated sentences with one token per line.

    Columns are split on any whitespace run, or on tabs only when ``strict``.
    With ``allow_missing_label`` a line may omit the trailing label column.
    """
    columns = parse_columns(column_spec)
    sentences, current = [], []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            if current:
                sentences.append(TaggedSentence(current))
                current = []
            continue
        fields = line.rstrip().split("\t") if strict else _WS.split(line.strip())
        expected = len(columns)
        if len(fields) != expected:
            short_ok = allow_missing_label and columns[-1] == "label" and len(fields) == expected - 1
            if not short_ok:
                missing = ""
                if len(fields) < expected:
                    missing = f"; missing column {columns[len(fields)]!r}"
                raise ParseError(
                    f"expected {expected} columns {list(columns)}, found {len(fields)}{missing}",
                    path=path, line=lineno,
                )
        if any(not f for f in fields):
            raise ParseError("empty column value", path=path, line=lineno)
        values = dict(zip(columns, fields))
        current.append(Token(values["word"], values.get("label"), values.get("pos"), values.get("chunk")))
    if current:
        sentences.append(TaggedSentence(current))
    return sentences


def format_conll(sentences: Iterable[TaggedSentence], column_spec=NER_COLUMNS,
                 extra: Sequence[Sequence[str]] | None = None, sep: str = "\t") -> str:
    """Inverse of :func:`read_conll`; ``extra`` appends one column per sentence."""
    columns = parse_columns(column_spec)
    blocks = []
    for si, sent in enumerate(sentences):
        lines = []
        for ti, tok in enumerate(sent.tokens):
            fields = [getattr(tok, c) for c in columns]
            fields = [f for f in fields if f is not None]
            if extra is not None:
                fields.append(extra[si][ti])
            lines.append(sep.join(fields))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def write_conll(sentences, path, column_spec=NER_COLUMNS, extra=None) -> None:
    Path(path).write_text(format_conll(sentences, column_spec, extra), encoding="utf-8")


# --------------------------------------------------------------------------
# vocabularies


class Vocabulary:
    """Ordered string<->id bijection; ``with_unk`` reserves id 0 for unknowns."""

    def __init__(self, items: Iterable[str] = (), with_unk: bool = False):
        self.with_unk = with_unk
        self.items: list = []
        self._index: dict = {}
        if with_unk:
            self.add(UNK)
        for it in items:
            self.add(it)

    def add(self, item: str) -> int:
        idx = self._index.get(item)
        if idx is None:
            idx = len(self.items)
            self._index[item] = idx
            self.items.append(item)
        return idx

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self._index

    def __iter__(self):
        return iter(self.items)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.items == other.items and self.with_unk == other.with_unk

    def get(self, item: str, default=None):
        return self._index.get(item, default)

    def lookup(self, item: str) -> int:
        idx = self._index.get(item)
        if idx is None:
            if not self.with_unk:
                raise KeyError(item)
            return 0
        return idx

    def __repr__(self):
        return f"Vocabulary(size={len(self)}, with_unk={self.with_unk})"

    def to_dict(self) -> dict:
        items = self.items[1:] if self.with_unk else self.items
        return {"items": list(items), "with_unk": self.with_unk}

    @classmethod
    def from_dict(cls, d) -> Vocabulary:
        return cls(d["items"], with_unk=d["with_unk"])


def word_chars(word: str) -> list:
    """Unicode code points of ``word``; joiners such as ``_`` are kept."""
    return list(word)


def build_vocabularies(train: Sequence[TaggedSentence]):
    """``(char_vocab, pos_vocab, chunk_vocab, label_vocab)`` in first-occurrence order."""
    if not train:
        raise DataError("cannot build vocabularies from an empty corpus")
    chars = Vocabulary(with_unk=True)
    pos = Vocabulary()
    chunk = Vocabulary()
    labels = Vocabulary()
    for sent in train:
        for tok in sent.tokens:
            for ch in word_chars(tok.word):
                chars.add(ch)
            if tok.pos is not None:
                pos.add(tok.pos)
            if tok.chunk is not None:
                chunk.add(tok.chunk)
            if tok.label is not None:
                labels.add(tok.label)
    return chars, pos, chunk, labels


def one_hot(vocab: Vocabulary, item: str | None) -> np.ndarray:
    """Indicator of ``item`` over ``vocab``; unseen items give all zeros."""
    vec = np.zeros(len(vocab))
    idx = vocab.get(item) if item is not None else None
    if idx is not None:
        vec[idx] = 1.0
    return vec


# --------------------------------------------------------------------------
# pretrained embeddings


@dataclass
class PretrainedEmbeddings:
    vocab: Vocabulary
    matrix: np.ndarray
    duplicates: int = 0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def make_unk_vector(dim: int, rng_seed=0) -> np.ndarray:
    """Uniform draw in [-sqrt(3/dim), +sqrt(3/dim)]."""
    if dim < 1:
        raise ConfigError(f"embedding dim must be >= 1, got {dim}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    bound = math.sqrt(3.0 / dim)
    return rng.uniform(-bound, bound, size=dim)


def load_embeddings(path, expected_dim: int | None = None, unk_seed=0) -> PretrainedEmbeddings:
    """Load word2vec text format. Row 0 of the result is a freshly drawn UNK vector."""
    lines = _read_lines(path)
    if not lines:
        raise ParseError("empty embedding file", path=path)
    header = lines[0].split()
    try:
        count, dim = int(header[0]), int(header[1])
        if len(header) != 2 or dim < 1 or count < 0:
            raise ValueError
    except (ValueError, IndexError):
        raise ParseError(f"malformed header {lines[0]!r}, expected 'count dim'", path=path, line=1) from None
    if expected_dim is not None and dim != expected_dim:
        raise ConfigError(f"embedding file has dim {dim} but the model expects {expected_dim}")
    vocab = Vocabulary(with_unk=True)
    rows = [make_unk_vector(dim, unk_seed)]
    dups = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = _WS.split(line.strip())
        if len(parts) != dim + 1:
            raise ParseError(f"row has {len(parts) - 1} values, header says {dim}", path=path, line=lineno)
        word = parts[0]
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError:
            raise ParseError("non-numeric embedding value", path=path, line=lineno) from None
        if not np.all(np.isfinite(vec)):
            raise ParseError("non-finite embedding value", path=path, line=lineno)
        if word in vocab:
            dups += 1
            continue
        vocab.add(word)
        rows.append(vec)
    if dups:
        logger.warning("%s: %d duplicate words ignored (first occurrence kept)", path, dups)
    return PretrainedEmbeddings(vocab, np.vstack(rows), dups)


def random_embeddings(words: Iterable[str], dim: int, rng_seed=0) -> PretrainedEmbeddings:
    """Stand-in table when no pretrained file is given: every row uniform in +-sqrt(3/dim)."""
    vocab = Vocabulary(words, with_unk=True)
    rng = np.random.default_rng(rng_seed)
    bound = math.sqrt(3.0 / dim)
    return PretrainedEmbeddings(vocab, rng.uniform(-bound, bound, size=(len(vocab), dim)))


# --------------------------------------------------------------------------
# BIO2


def split_label(label: str):
    """``"B-LOC" -> ("B", "LOC")``, ``"O" -> ("O", None)``."""
    if label == "O":
        return "O", None
    if len(label) > 2 and label[1] == "-" and label[0] in "BI":
        return label[0], label[2:]
    raise DataError(f"malformed BIO2 label {label!r}")


def validate_bio2(labels: Sequence[str]) -> list:
    """Indices where I-X follows neither B-X nor I-X."""
    violations = []
    prev_type = None
    for i, lab in enumerate(labels):
        prefix, typ = split_label(lab)
        if prefix == "I" and typ != prev_type:
            violations.append(i)
        prev_type = typ
    return violations


def repair_bio2(labels: Sequence[str]) -> list:
    """Rewrite each violating I-X as B-X."""
    out = list(labels)
    prev_type = None
    for i, lab in enumerate(out):
        prefix, typ = split_label(lab)
        if prefix == "I" and typ != prev_type:
            out[i] = f"B-{typ}"
        prev_type = typ
    return out


# --------------------------------------------------------------------------
# cross-validation folds


def kfold_split(n_or_sentences, k: int, rng_seed=0) -> list:
    """Shuffle once, cut into ``k`` folds whose sizes differ by at most one.

    Returns ``[(train_indices, test_indices), ...]``; the first ``n % k`` folds
    carry the extra item.
    """
    n = n_or_sentences if isinstance(n_or_sentences, int) else len(n_or_sentences)
    if k < 2 or k > n:
        raise ConfigError(f"k must satisfy 2 <= k <= {n}, got {k}")
    perm = np.random.default_rng(rng_seed).permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds, start = [], 0
    for size in sizes:
        test = np.sort(perm[start:start + size])
        train = np.sort(np.concatenate([perm[:start], perm[start + size:]]))
        folds.append((train.tolist(), test.tolist()))
        start += size
    return folds
