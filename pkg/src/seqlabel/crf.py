"""Linear-chain CRF over K tags with virtual start/end states.

The transition matrix is ``(K+2) x (K+2)`` with rows as the source tag;
index ``K`` is the start state and ``K+1`` the end state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor
from .errors import ContractError, DimensionError

MAX_ENUMERATION = 10**6


@dataclass
class CrfScores:
    emissions: Tensor  # n x K
    transitions: Tensor  # (K+2) x (K+2)

    def __post_init__(self):
        P, A = self.emissions.shape, self.transitions.shape
        if len(P) != 2 or P[0] < 1 or P[1] < 1:
            raise DimensionError(f"emissions must be n x K with n, K >= 1, got {P}")
        if A != (P[1] + 2, P[1] + 2):
            raise DimensionError(f"transitions must be {(P[1] + 2,) * 2}, got {A}")

    @property
    def length(self) -> int:
        return self.emissions.shape[0]

    @property
    def num_tags(self) -> int:
        return self.emissions.shape[1]

    @property
    def start(self) -> int:
        return self.num_tags

    @property
    def end(self) -> int:
        return self.num_tags + 1

    @classmethod
    def from_arrays(cls, emissions, transitions, graph: Graph | None = None,
                    requires_grad: bool = False) -> CrfScores:
        graph = graph or Graph()
        return cls(
            graph.leaf(emissions, requires_grad=requires_grad),
            graph.leaf(transitions, requires_grad=requires_grad),
        )


def _check_tags(s: CrfScores, y: Sequence[int]) -> np.ndarray:
    y = np.asarray(y, dtype=np.intp)
    if y.shape != (s.length,):
        raise ContractError(f"tag sequence length {len(y)} != sentence length {s.length}")
    if y.size and (y.min() < 0 or y.max() >= s.num_tags):
        raise ContractError(f"tag index outside [0, {s.num_tags}): {y.tolist()}")
    return y


def score_sequence(s: CrfScores, y: Sequence[int]) -> Tensor:
    """Sum of boundary and inner transitions plus the emission of every chosen tag."""
    y = _check_tags(s, y)
    n = s.length
    src = np.concatenate([[s.start], y])
    dst = np.concatenate([y, [s.end]])
    trans = ad.sum_all(ad.index(s.transitions, (src, dst)))
    emit = ad.sum_all(ad.index(s.emissions, (np.arange(n), y)))
    return ad.add(trans, emit)


def log_partition(s: CrfScores) -> Tensor:
    """Log of the summed exponentiated scores of all K**n tag sequences (forward recursion)."""
    K, n = s.num_tags, s.length
    tags = np.arange(K)
    inner_T = ad.transpose(ad.index(s.transitions, np.ix_(tags, tags)))  # [to, from]
    from_start = ad.index(s.transitions, (s.start, slice(0, K)))
    to_end = ad.index(s.transitions, (slice(0, K), s.end))
    alpha = ad.add(from_start, ad.index(s.emissions, 0))
    for t in range(1, n):
        alpha = ad.add(ad.logsumexp(ad.add(inner_T, alpha), axis=1), ad.index(s.emissions, t))
    return ad.logsumexp(ad.add(alpha, to_end), axis=0)


def nll_loss(s: CrfScores, gold: Sequence[int]) -> Tensor:
    """Negative log-probability of ``gold``: log-partition minus gold score."""
    return ad.sub(log_partition(s), score_sequence(s, gold))


def _arrays(s: CrfScores):
    return s.emissions.values, s.transitions.values


def viterbi_decode(s: CrfScores):
    """Highest-scoring tag sequence and its score.

    Ties go to the lower tag index, both for the final tag and for every
    backpointer.
    """
    P, A = _arrays(s)
    n, K = P.shape
    inner = A[:K, :K]
    delta = A[K, :K] + P[0]
    backptr = np.zeros((n, K), dtype=np.intp)
    for t in range(1, n):
        cand = delta[:, None] + inner  # [from, to]
        backptr[t] = np.argmax(cand, axis=0)
        delta = cand[backptr[t], np.arange(K)] + P[t]
    final = delta + A[:K, K + 1]
    last = int(np.argmax(final))
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return path, float(final[last])


def _enumerate(s: CrfScores):
    P, A = _arrays(s)
    n, K = P.shape
    if K**n > MAX_ENUMERATION:
        raise ContractError(f"refusing to enumerate {K}**{n} sequences (limit {MAX_ENUMERATION})")
    seqs = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.intp).reshape(-1, n)
    scores = A[K, seqs[:, 0]] + A[seqs[:, -1], K + 1] + P[np.arange(n), seqs].sum(axis=1)
    if n > 1:
        scores = scores + A[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_force_oracle(s: CrfScores):
    """Exhaustive ``(logZ, best_sequence, best_score)``; refuses above 10**6 sequences.

    Among equal-score sequences the winner is the one Viterbi picks: compare
    tags from the last position backwards, lower index first.
    """
    seqs, scores = _enumerate(s)
    m = scores.max()
    logZ = float(m + np.log(np.exp(scores - m).sum()))
    top = np.flatnonzero(scores == m)
    # lexsort keys: primary key is the last one passed, i.e. the last position
    order = np.lexsort(tuple(seqs[top, j] for j in range(seqs.shape[1])))
    best = top[order[0]]
    return logZ, seqs[best].tolist(), float(scores[best])


def brute_force_marginals(s: CrfScores) -> np.ndarray:
    """Per-position tag marginals ``p(y_i = k | X)`` by enumeration."""
    seqs, scores = _enumerate(s)
    n, K = s.length, s.num_tags
    probs = np.exp(scores - scores.max())
    probs /= probs.sum()
    marg = np.zeros((n, K))
    for i in range(n):
        np.add.at(marg[i], seqs[:, i], probs)
    return marg
