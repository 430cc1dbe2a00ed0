"""Small generated corpora for smoke tests, demos and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .data import TaggedSentence, Token

LETTERS = "abcdeghiklmnopqrstuvxy"


def _stems(rng, n, taken=(), min_len=3, max_len=6):
    seen = set(taken)
    out = []
    while len(out) < n:
        stem = "".join(rng.choice(list(LETTERS), size=rng.integers(min_len, max_len + 1)))
        if stem not in seen:
            seen.add(stem)
            out.append(stem)
    return out


def lexical_corpus(n_sentences=20, n_types=30, labels=("O", "B-PER", "B-LOC"), seed=0,
                   min_len=4, max_len=8):
    """Every word type has one fixed label; all ``n_types`` types occur.

    Returns ``(sentences, word_to_label)``.
    """
    rng = np.random.default_rng(seed)
    words = _stems(rng, n_types)
    mapping = {w: labels[i % len(labels)] for i, w in enumerate(words)}
    lengths = rng.integers(min_len, max_len + 1, size=n_sentences)
    while lengths.sum() < n_types:
        lengths[rng.integers(n_sentences)] += 1
    pool = list(rng.permutation(words))
    pool += list(rng.choice(words, size=int(lengths.sum()) - n_types))
    sents, pos = [], 0
    for n in lengths:
        chunk = pool[pos:pos + n]
        pos += n
        sents.append(TaggedSentence([Token(w, mapping[w]) for w in chunk]))
    return sents, mapping


SUFFIX_LABELS = {"vil": "B-LOC", "son": "B-PER", "kor": "B-ORG"}
OTHER_SUFFIXES = ("ta", "mo", "ri", "eg")


def suffix_corpus(n_sentences, seed=0, exclude_stems=(), n_stems=None, min_len=4, max_len=8):
    """Sentences whose labels are fixed by each word's ending.

    Entity words end in one of :data:`SUFFIX_LABELS`; all other words take an
    ending from :data:`OTHER_SUFFIXES` and are labelled ``O``. Stems come
    from a private pool, so corpora drawn with disjoint ``exclude_stems`` share
    no word types. Returns ``(sentences, stems_used)``.
    """
    rng = np.random.default_rng(seed)
    n_stems = n_stems or max(10, n_sentences * 2)
    stems = _stems(rng, n_stems, taken=exclude_stems)
    ent_suffixes = list(SUFFIX_LABELS)
    sents = []
    for _ in range(n_sentences):
        toks = []
        for _ in range(rng.integers(min_len, max_len + 1)):
            stem = stems[rng.integers(len(stems))]
            if rng.random() < 0.4:
                suf = ent_suffixes[rng.integers(len(ent_suffixes))]
                toks.append(Token(stem + suf, SUFFIX_LABELS[suf]))
            else:
                suf = OTHER_SUFFIXES[rng.integers(len(OTHER_SUFFIXES))]
                toks.append(Token(stem + suf, "O"))
        sents.append(TaggedSentence(toks))
    return sents, stems
