"""The character-aware BiLSTM-CRF tagger.

Per token: pretrained word vector, char-BiLSTM terminal states and optional
POS/chunk one-hots are concatenated, dropped out, run through the word-level
BiLSTM, dropped out again and projected to per-tag emission scores that feed
the CRF.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor
from .crf import CrfScores, nll_loss, viterbi_decode
from .data import PretrainedEmbeddings, TaggedSentence, Vocabulary, one_hot, word_chars
from .errors import ConfigError, ContractError, DataError
from .layers import (
    LSTM_FIELDS,
    DropoutSpec,
    LstmParams,
    bilstm_encode,
    bilstm_states,
    dropout_apply,
    embedding_lookup,
    init_lstm_arrays,
    init_params,
    linear_project,
)


@dataclass
class TaggerConfig:
    tagset: list
    char_dim: int = 100
    word_dim: int = 300
    char_hidden: int = 100
    word_hidden: int = 150
    dropout_rate: float = 0.35
    use_pos_onehot: bool = False
    use_chunk_onehot: bool = False
    use_chars: bool = True
    finetune_words: bool = False

    def __post_init__(self):
        self.tagset = list(self.tagset)
        for name in ("char_dim", "word_dim", "char_hidden", "word_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not self.tagset:
            raise ConfigError("tagset is empty")
        if len(set(self.tagset)) != len(self.tagset):
            raise ConfigError("tagset has duplicate labels")

    @property
    def num_tags(self) -> int:
        return len(self.tagset)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> TaggerConfig:
        return cls(**d)


@dataclass
class EncodedToken:
    word_index: int
    char_indices: list
    pos_onehot: np.ndarray | None = None
    chunk_onehot: np.ndarray | None = None

    def __post_init__(self):
        if not self.char_indices:
            raise ContractError("a token needs at least one character")


def char_word_embed(char_ids: Sequence[int], bound: dict) -> Tensor:
    """Concat of the last forward and last backward char-BiLSTM hidden states."""
    if not char_ids:
        raise ContractError("empty character list")
    xs = [embedding_lookup(bound["char_emb"], int(c)) for c in char_ids]
    fwd = LstmParams.bind(bound, "char_fwd")
    bwd = LstmParams.bind(bound, "char_bwd")
    h_fwd, h_bwd = bilstm_states(xs, fwd, bwd)
    # the backward run ends at the first character
    return ad.concat([h_fwd[-1], h_bwd[0]])


def build_word_representation(tok: EncodedToken, bound: dict, cfg: TaggerConfig,
                              word_table: np.ndarray | None = None, position: int = 0) -> Tensor:
    """Concat of word vector, char representation, POS one-hot, chunk one-hot, in that order.

    When the word table is frozen its row is taken from ``word_table`` as a
    constant rather than registering the whole table on the graph.
    """
    graph = bound["proj.W"].graph
    if "word_emb" in bound:
        parts = [embedding_lookup(bound["word_emb"], tok.word_index)]
    else:
        parts = [graph.constant(word_table[tok.word_index])]
    if cfg.use_chars:
        parts.append(char_word_embed(tok.char_indices, bound))
    for flag, vec, name in (
        (cfg.use_pos_onehot, tok.pos_onehot, "POS"),
        (cfg.use_chunk_onehot, tok.chunk_onehot, "chunk"),
    ):
        if flag:
            if vec is None:
                raise DataError(f"token at position {position} has no {name} feature")
            parts.append(graph.constant(vec))
    return ad.concat(parts) if len(parts) > 1 else parts[0]


def forward_sentence(sent: Sequence[EncodedToken], bound: dict, cfg: TaggerConfig,
                     dropout: DropoutSpec | None = None,
                     word_table: np.ndarray | None = None) -> CrfScores:
    """Emission and transition scores for one sentence; ``dropout=None`` is eval mode."""
    if not sent:
        raise ContractError("empty sentence")
    reps = [build_word_representation(tok, bound, cfg, word_table, i) for i, tok in enumerate(sent)]
    if dropout is not None:
        reps = [dropout_apply(r, dropout) for r in reps]
    outs = bilstm_encode(reps, LstmParams.bind(bound, "word_fwd"), LstmParams.bind(bound, "word_bwd"))
    if dropout is not None:
        outs = [dropout_apply(o, dropout) for o in outs]
    emissions = linear_project(ad.stack(outs), bound["proj.W"], bound["proj.b"])
    return CrfScores(emissions, bound["crf.transitions"])


class Tagger:
    """Configuration, vocabularies and parameter arrays of one model."""

    def __init__(self, cfg: TaggerConfig, words: PretrainedEmbeddings, chars: Vocabulary,
                 pos: Vocabulary | None = None, chunks: Vocabulary | None = None,
                 seed: int = 0, params: dict | None = None):
        if words.dim != cfg.word_dim:
            raise ConfigError(f"embedding dim {words.dim} does not match word_dim {cfg.word_dim}")
        self.cfg = cfg
        self.words = words.vocab
        self.chars = chars
        self.pos = pos if pos is not None else Vocabulary()
        self.chunks = chunks if chunks is not None else Vocabulary()
        self.labels = Vocabulary(cfg.tagset)
        if params is None:
            params = self._init_params(words.matrix, seed)
        self.params = params
        self._check_shapes()

    # -- construction ----------------------------------------------------

    @property
    def input_width(self) -> int:
        cfg = self.cfg
        width = cfg.word_dim
        if cfg.use_chars:
            width += 2 * cfg.char_hidden
        if cfg.use_pos_onehot:
            width += len(self.pos)
        if cfg.use_chunk_onehot:
            width += len(self.chunks)
        return width

    def _init_params(self, word_matrix: np.ndarray, seed: int) -> dict:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        params = {"word_emb": np.array(word_matrix, dtype=np.float64)}
        if cfg.use_chars:
            params["char_emb"] = init_params((len(self.chars), cfg.char_dim), "unk_he", rng)
            for prefix in ("char_fwd", "char_bwd"):
                for name, arr in init_lstm_arrays(cfg.char_dim, cfg.char_hidden, rng).items():
                    params[f"{prefix}.{name}"] = arr
        for prefix in ("word_fwd", "word_bwd"):
            for name, arr in init_lstm_arrays(self.input_width, cfg.word_hidden, rng).items():
                params[f"{prefix}.{name}"] = arr
        K = cfg.num_tags
        params["proj.W"] = init_params((K, 2 * cfg.word_hidden), "glorot", rng)
        params["proj.b"] = init_params((K,), "zero")
        params["crf.transitions"] = np.zeros((K + 2, K + 2))
        return params

    def expected_shapes(self) -> dict:
        cfg = self.cfg
        K = cfg.num_tags
        shapes = {"word_emb": (len(self.words), cfg.word_dim)}

        def lstm(prefix, D, H):
            for name in LSTM_FIELDS:
                kind = name[0]
                shapes[f"{prefix}.{name}"] = {"W": (H, H), "U": (H, D), "b": (H,)}[kind]

        if cfg.use_chars:
            shapes["char_emb"] = (len(self.chars), cfg.char_dim)
            lstm("char_fwd", cfg.char_dim, cfg.char_hidden)
            lstm("char_bwd", cfg.char_dim, cfg.char_hidden)
        lstm("word_fwd", self.input_width, cfg.word_hidden)
        lstm("word_bwd", self.input_width, cfg.word_hidden)
        shapes["proj.W"] = (K, 2 * cfg.word_hidden)
        shapes["proj.b"] = (K,)
        shapes["crf.transitions"] = (K + 2, K + 2)
        return shapes

    def _check_shapes(self):
        expected = self.expected_shapes()
        if set(expected) != set(self.params):
            raise ConfigError(
                f"parameter names disagree with config: {sorted(set(expected) ^ set(self.params))}"
            )
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    @property
    def trainable(self) -> set:
        names = set(self.params)
        if not self.cfg.finetune_words:
            names.discard("word_emb")
        return names

    # -- encoding --------------------------------------------------------

    def encode(self, sent: TaggedSentence) -> list:
        cfg = self.cfg
        out = []
        for tok in sent.tokens:
            out.append(EncodedToken(
                word_index=self.words.lookup(tok.word),
                char_indices=[self.chars.lookup(c) for c in word_chars(tok.word)],
                pos_onehot=one_hot(self.pos, tok.pos) if cfg.use_pos_onehot and tok.pos is not None else None,
                chunk_onehot=one_hot(self.chunks, tok.chunk) if cfg.use_chunk_onehot and tok.chunk is not None else None,
            ))
        return out

    def encode_labels(self, sent: TaggedSentence) -> list:
        try:
            return [self.labels.lookup(lab) for lab in sent.labels]
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} is not in the tagset") from None

    # -- computation -----------------------------------------------------

    def bind(self, graph: Graph) -> dict:
        """Register parameters as leaves; the frozen word table is left off the graph."""
        trainable = self.trainable
        bound = {}
        for name, arr in self.params.items():
            if name == "word_emb" and name not in trainable:
                continue
            bound[name] = graph.leaf(arr, requires_grad=name in trainable)
        return bound

    def scores(self, graph: Graph, encoded, dropout: DropoutSpec | None = None,
               bound: dict | None = None) -> CrfScores:
        bound = bound if bound is not None else self.bind(graph)
        return forward_sentence(encoded, bound, self.cfg, dropout, self.params["word_emb"])

    def loss(self, graph: Graph, encoded, gold: Sequence[int], dropout: DropoutSpec | None = None,
             bound: dict | None = None) -> Tensor:
        return nll_loss(self.scores(graph, encoded, dropout, bound), gold)

    def tag_encoded(self, encoded) -> list:
        path, _ = viterbi_decode(self.scores(Graph(), encoded))
        return [self.cfg.tagset[i] for i in path]

    def tag(self, sent: TaggedSentence) -> list:
        return tag_sentence(sent, self)


def tag_sentence(sent: TaggedSentence, model: Tagger) -> list:
    """Eval-mode forward pass followed by Viterbi decoding; returns label strings."""
    return model.tag_encoded(model.encode(sent))


def build_tagger(train: Sequence[TaggedSentence], cfg_overrides: dict | None = None,
                 embeddings: PretrainedEmbeddings | None = None, seed: int = 0,
                 extra_words: Sequence[str] = ()) -> Tagger:
    """Build vocabularies from ``train`` and initialise a fresh model.

    Without ``embeddings`` a frozen random word table over the training
    words (plus ``extra_words``) stands in for pretrained vectors.
    """
    from .data import build_vocabularies, random_embeddings

    chars, pos, chunks, labels = build_vocabularies(train)
    overrides = dict(cfg_overrides or {})
    overrides.setdefault("tagset", list(labels))
    cfg = TaggerConfig(**overrides)
    if embeddings is None:
        words = []
        for sent in train:
            words.extend(sent.words)
        words.extend(extra_words)
        embeddings = random_embeddings(words, cfg.word_dim, rng_seed=seed + 7919)
    return Tagger(cfg, embeddings, chars, pos, chunks, seed=seed)
