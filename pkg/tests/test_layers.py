import math

import numpy as np
import pytest

from seqlabel import autodiff as ad
from seqlabel.autodiff import Graph
from seqlabel.errors import ConfigError, ContractError
from seqlabel.layers import (
    LSTM_FIELDS,
    DropoutSpec,
    LstmParams,
    bilstm_encode,
    dropout_apply,
    embedding_lookup,
    init_lstm_arrays,
    init_params,
    linear_project,
    lstm_step,
)

from conftest import max_rel, numeric_grad


def _lstm(graph, arrays, requires_grad=False):
    return LstmParams(**{k: graph.leaf(v, requires_grad=requires_grad) for k, v in arrays.items()})


def _zero_arrays(D, H):
    return {k: np.zeros((H, H) if k[0] == "W" else (H, D) if k[0] == "U" else (H,)) for k in LSTM_FIELDS}


def test_lstm_step_all_zero():
    g = Graph()
    p = _lstm(g, _zero_arrays(3, 2))
    h, c = lstm_step(g.leaf([1.0, -2.0, 0.5]), g.leaf(np.zeros(2)), g.leaf(np.zeros(2)), p)
    np.testing.assert_array_equal(h.values, 0.0)
    np.testing.assert_array_equal(c.values, 0.0)


def test_lstm_step_carries_half_the_cell():
    g = Graph()
    p = _lstm(g, _zero_arrays(1, 1))
    h, c = lstm_step(g.leaf([0.3]), g.leaf([0.0]), g.leaf([2.0]), p)
    assert c.values[0] == pytest.approx(1.0, abs=1e-15)
    assert h.values[0] == pytest.approx(0.5 * math.tanh(1.0), abs=1e-15)
    assert h.values[0] == pytest.approx(0.380797, abs=1e-6)


def test_lstm_step_dimension_error():
    g = Graph()
    p = _lstm(g, _zero_arrays(3, 2))
    with pytest.raises(ContractError):
        lstm_step(g.leaf(np.zeros(4)), g.leaf(np.zeros(2)), g.leaf(np.zeros(2)), p)


def test_lstm_step_gradient_all_params(rng):
    D, H = 3, 4
    arrays = init_lstm_arrays(D, H, rng)
    for k in arrays:
        if k.startswith("b"):
            arrays[k] = rng.normal(size=H) * 0.5
    x0, h0, c0 = rng.normal(size=D), rng.normal(size=H), rng.normal(size=H)

    def value():
        g = Graph()
        p = _lstm(g, arrays)
        h, _ = lstm_step(g.leaf(x0), g.leaf(h0), g.leaf(c0), p)
        return ad.sum_all(h).item()

    g = Graph()
    p = _lstm(g, arrays, requires_grad=True)
    h, _ = lstm_step(g.leaf(x0), g.leaf(h0), g.leaf(c0), p)
    g.backward(ad.sum_all(h))
    for name in LSTM_FIELDS:
        num = numeric_grad(value, arrays[name])
        assert max_rel(getattr(p, name).grad, num) < 1e-5, name


def test_cell_bound(rng):
    D, H = 3, 5
    for _ in range(50):
        arrays = {k: rng.normal(size=v.shape) * 2 for k, v in init_lstm_arrays(D, H, rng).items()}
        g = Graph()
        p = _lstm(g, arrays)
        x, h0, c0 = g.leaf(rng.normal(size=D)), g.leaf(rng.normal(size=H)), g.leaf(rng.normal(size=H) * 3)
        _, c = lstm_step(x, h0, c0, p)
        c_tilde = np.tanh(arrays["W_c"] @ h0.values + arrays["U_c"] @ x.values + arrays["b_c"])
        assert np.all(np.abs(c.values) <= np.abs(c0.values) + np.abs(c_tilde) + 1e-12)


def test_bilstm_single_step_symmetric(rng):
    arrays = init_lstm_arrays(3, 4, rng)
    g = Graph()
    fwd, bwd = _lstm(g, arrays), _lstm(g, arrays)
    out = bilstm_encode([g.leaf(rng.normal(size=3))], fwd, bwd)
    np.testing.assert_array_equal(out[0].values[:4], out[0].values[4:])


def test_bilstm_width():
    g = Graph()
    arrays = init_lstm_arrays(2, 150, 0)
    out = bilstm_encode([g.leaf([1.0, 2.0])], _lstm(g, arrays), _lstm(g, arrays))
    assert out[0].shape == (300,)


def test_bilstm_reversal_swaps_halves(rng):
    D, H = 3, 4
    fa, ba = init_lstm_arrays(D, H, rng), init_lstm_arrays(D, H, rng)
    xs = [rng.normal(size=D) for _ in range(5)]
    g = Graph()
    out = bilstm_encode([g.leaf(x) for x in xs], _lstm(g, fa), _lstm(g, ba))
    # swap the roles of the two directions and reverse the input
    rev = bilstm_encode([g.leaf(x) for x in xs[::-1]], _lstm(g, ba), _lstm(g, fa))[::-1]
    for o, r in zip(out, rev):
        np.testing.assert_allclose(o.values[:H], r.values[H:], atol=1e-14)
        np.testing.assert_allclose(o.values[H:], r.values[:H], atol=1e-14)


def test_bilstm_every_output_sees_every_input(rng):
    D, H = 3, 4
    fa, ba = init_lstm_arrays(D, H, rng), init_lstm_arrays(D, H, rng)
    xs = [rng.normal(size=D) for _ in range(4)]

    def run(inputs):
        g = Graph()
        return np.stack([o.values for o in bilstm_encode([g.leaf(x) for x in inputs], _lstm(g, fa), _lstm(g, ba))])

    base = run(xs)
    for s in range(4):
        pert = [x.copy() for x in xs]
        pert[s] += 0.1
        changed = np.abs(run(pert) - base).max(axis=1)
        assert np.all(changed > 0), s


def test_bilstm_empty_sequence():
    g = Graph()
    arrays = init_lstm_arrays(2, 2, 0)
    with pytest.raises(ContractError):
        bilstm_encode([], _lstm(g, arrays), _lstm(g, arrays))


def test_dropout_identity_cases(rng):
    g = Graph()
    x = g.leaf(rng.normal(size=50))
    assert dropout_apply(x, DropoutSpec(0.0, mode="train")).values is x.values
    assert dropout_apply(x, DropoutSpec(0.0, mode="eval")).values is x.values
    out = dropout_apply(x, DropoutSpec(0.35, mode="eval"))
    assert out.values.tobytes() == x.values.tobytes()


def test_dropout_is_unbiased():
    g = Graph()
    x = g.leaf(np.ones(100_000))
    out = dropout_apply(x, DropoutSpec(0.35, rng_seed=5, mode="train"))
    assert abs(out.values.mean() - 1.0) < 0.02
    kept = out.values[out.values > 0]
    np.testing.assert_allclose(kept, 1 / 0.65)


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_rate_validation(rate):
    with pytest.raises(ConfigError):
        DropoutSpec(rate)


def test_linear_project_cases(rng):
    g = Graph()
    x = g.leaf(rng.normal(size=4))
    out = linear_project(x, g.leaf(np.zeros((3, 4))), g.leaf([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(out.values, [1, 2, 3])
    out = linear_project(x, g.leaf(np.eye(4)), g.leaf(np.zeros(4)))
    np.testing.assert_array_equal(out.values, x.values)
    with pytest.raises(ContractError):
        linear_project(x, g.leaf(np.zeros((3, 5))), g.leaf(np.zeros(3)))


def test_linear_project_gradient(rng):
    W0, b0, X0 = rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=(2, 4))
    R = rng.normal(size=(2, 3))

    def value():
        g = Graph()
        return ad.sum_all(ad.mul(linear_project(g.leaf(X0), g.leaf(W0), g.leaf(b0)), g.leaf(R))).item()

    g = Graph()
    W, b, X = g.leaf(W0, True), g.leaf(b0, True), g.leaf(X0, True)
    g.backward(ad.sum_all(ad.mul(linear_project(X, W, b), g.leaf(R))))
    assert max_rel(W.grad, numeric_grad(value, W0)) < 1e-6
    assert max_rel(b.grad, numeric_grad(value, b0)) < 1e-6
    assert max_rel(X.grad, numeric_grad(value, X0)) < 1e-6


def test_init_params_schemes():
    unk = init_params((50, 300), "unk_he", 1)
    assert np.all(np.abs(unk) <= 0.1)
    assert np.abs(unk).max() > 0.09
    assert not init_params((3, 4), "zero").any()
    g = init_params((6, 4), "glorot", 2)
    assert np.all(np.abs(g) <= math.sqrt(6 / 10))
    a, b = init_params((5, 7), "glorot", 42), init_params((5, 7), "glorot", 42)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ConfigError):
        init_params((2, 2), "he_normal", 0)
    with pytest.raises(ConfigError):
        init_params((0, 2), "zero", 0)


def test_embedding_lookup_accumulates_repeated_rows(rng):
    E0 = rng.normal(size=(5, 3))
    ids = [1, 3, 1]
    R = rng.normal(size=(3, 3))

    def value():
        g = Graph()
        return ad.sum_all(ad.mul(embedding_lookup(g.leaf(E0), ids), g.leaf(R))).item()

    g = Graph()
    E = g.leaf(E0, requires_grad=True)
    g.backward(ad.sum_all(ad.mul(embedding_lookup(E, ids), g.leaf(R))))
    np.testing.assert_allclose(E.grad[1], R[0] + R[2])
    assert max_rel(E.grad, numeric_grad(value, E0)) < 1e-6
    with pytest.raises(ContractError):
        embedding_lookup(E, [5])
