"""Embedding lookup, LSTM cell, bidirectional encoder, dropout, projection.

Parameters live as plain ndarrays outside the tape; callers register them as
leaves on a fresh :class:`~seqlabel.autodiff.Graph` per step and pass the
resulting tensors in here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor
from .errors import ConfigError, ContractError, DimensionError

LSTM_GATES = ("f", "i", "c", "o")
LSTM_FIELDS = tuple(f"{kind}_{gate}" for kind in ("W", "U", "b") for gate in LSTM_GATES)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_params(shape, scheme: str, rng_seed=0) -> np.ndarray:
    """Draw an initial parameter array.

    Schemes: ``"unk_he"`` uniform in +-sqrt(3/dim) with dim the last axis,
    ``"glorot"`` uniform in +-sqrt(6/(fan_in+fan_out)), ``"zero"``.
    ``rng_seed`` may be an int or an existing Generator.
    """
    shape = tuple(int(d) for d in np.atleast_1d(shape))
    if any(d <= 0 for d in shape):
        raise ConfigError(f"parameter dims must be positive, got {shape}")
    if scheme == "zero":
        return np.zeros(shape)
    rng = _rng(rng_seed)
    if scheme == "unk_he":
        bound = math.sqrt(3.0 / shape[-1])
    elif scheme == "glorot":
        fan_out = shape[0]
        fan_in = shape[1] if len(shape) > 1 else shape[0]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise ConfigError(f"unknown init scheme {scheme!r}")
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class EmbeddingTable:
    weights: np.ndarray
    trainable: bool = True

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table``; an int gives a vector, a sequence gives a matrix."""
    vocab = table.shape[0]
    flat = np.atleast_1d(np.asarray(ids))
    if flat.size and (flat.min() < 0 or flat.max() >= vocab):
        raise ContractError(f"embedding index out of range [0, {vocab}): {ids}")
    return ad.index(table, ids if np.isscalar(ids) else np.asarray(ids, dtype=np.intp))


@dataclass
class LstmParams:
    """One direction's weights: W_* act on h (HxH), U_* on x (HxD), b_* biases."""

    W_f: Tensor
    W_i: Tensor
    W_c: Tensor
    W_o: Tensor
    U_f: Tensor
    U_i: Tensor
    U_c: Tensor
    U_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    def __post_init__(self):
        H = self.W_f.shape[0]
        D = self.U_f.shape[1]
        for gate in LSTM_GATES:
            if getattr(self, f"W_{gate}").shape != (H, H):
                raise DimensionError(f"W_{gate} must be {H}x{H}")
            if getattr(self, f"U_{gate}").shape != (H, D):
                raise DimensionError(f"U_{gate} must be {H}x{D}")
            if getattr(self, f"b_{gate}").shape != (H,):
                raise DimensionError(f"b_{gate} must have length {H}")

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.U_f.shape[1]

    @classmethod
    def bind(cls, tensors: Mapping[str, Tensor], prefix: str) -> LstmParams:
        return cls(**{name: tensors[f"{prefix}.{name}"] for name in LSTM_FIELDS})


def init_lstm_arrays(input_size: int, hidden: int, rng) -> dict:
    rng = _rng(rng)
    arrays = {}
    for gate in LSTM_GATES:
        arrays[f"W_{gate}"] = init_params((hidden, hidden), "glorot", rng)
        arrays[f"U_{gate}"] = init_params((hidden, input_size), "glorot", rng)
    for gate in LSTM_GATES:
        arrays[f"b_{gate}"] = init_params((hidden,), "zero")
    return arrays


def _gate_preact(p: LstmParams, gate: str, x: Tensor, h: Tensor) -> Tensor:
    """W h + U x + b for one gate."""
    terms = [(getattr(p, f"W_{gate}"), h), (getattr(p, f"U_{gate}"), x)]
    return ad.affine(terms, getattr(p, f"b_{gate}"))


def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams):
    """Advance the memory cell by one time step; returns ``(h_t, c_t)``."""
    if x_t.shape != (p.input_size,):
        raise ContractError(f"lstm input has shape {x_t.shape}, expected ({p.input_size},)")
    if h_prev.shape != (p.hidden_size,) or c_prev.shape != (p.hidden_size,):
        raise ContractError("lstm state shape does not match hidden size")
    f = ad.sigmoid(_gate_preact(p, "f", x_t, h_prev))
    i = ad.sigmoid(_gate_preact(p, "i", x_t, h_prev))
    c_tilde = ad.tanh(_gate_preact(p, "c", x_t, h_prev))
    c_t = ad.add(ad.mul(f, c_prev), ad.mul(i, c_tilde))
    o = ad.sigmoid(_gate_preact(p, "o", x_t, h_prev))
    h_t = ad.mul(o, ad.tanh(c_t))
    return h_t, c_t


def lstm_run(xs: Sequence[Tensor], p: LstmParams) -> list:
    """Hidden states of one left-to-right pass from zero initial state."""
    if not xs:
        raise ContractError("lstm over an empty sequence")
    graph = xs[0].graph
    h = graph.constant(np.zeros(p.hidden_size))
    c = graph.constant(np.zeros(p.hidden_size))
    hs = []
    for x in xs:
        h, c = lstm_step(x, h, c, p)
        hs.append(h)
    return hs


def bilstm_states(xs: Sequence[Tensor], fwd: LstmParams, bwd: LstmParams):
    """Forward states and backward states, both indexed by original position."""
    h_fwd = lstm_run(xs, fwd)
    h_bwd = lstm_run(list(reversed(xs)), bwd)[::-1]
    return h_fwd, h_bwd


def bilstm_encode(xs: Sequence[Tensor], fwd: LstmParams, bwd: LstmParams) -> list:
    """Per-position concat of left-context and right-context hidden states."""
    h_fwd, h_bwd = bilstm_states(xs, fwd, bwd)
    return [ad.concat([hf, hb]) for hf, hb in zip(h_fwd, h_bwd)]


@dataclass
class DropoutSpec:
    rate: float
    rng_seed: int = 0
    mode: str = "train"
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.mode not in ("train", "eval"):
            raise ConfigError(f"dropout mode must be 'train' or 'eval', got {self.mode!r}")
        self.rng = np.random.default_rng(self.rng_seed)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(x: Tensor, spec: DropoutSpec) -> Tensor:
    """Inverted dropout in train mode; identity otherwise."""
    if spec.mode == "eval" or spec.rate == 0.0:
        return x
    mask = x.graph.constant(dropout_mask(x.shape, spec.rate, spec.rng))
    return ad.mul(x, mask)


def linear_project(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``W x + b`` for a vector, or row-wise ``x W^T + b`` for a matrix of rows."""
    if W.values.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ContractError(
            f"projection shapes disagree: x {x.shape}, W {W.shape}, b {b.shape}"
        )
    if x.values.ndim == 1:
        return ad.add(ad.matmul(W, x), b)
    return ad.add(ad.matmul(x, ad.transpose(W)), b)


def register(graph: Graph, arrays: Mapping[str, np.ndarray], trainable) -> dict:
    """Register parameter arrays as leaves; ``trainable`` is a set of names."""
    return {
        name: graph.leaf(arr, requires_grad=name in trainable) for name, arr in arrays.items()
    }
