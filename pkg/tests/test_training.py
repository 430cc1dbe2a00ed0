import math

import numpy as np
import pytest

from seqlabel.errors import ConfigError, NumericalError
from seqlabel.model import build_tagger
from seqlabel.synthetic import lexical_corpus
from seqlabel.training import (
    OptimizerState,
    TrainSchedule,
    accumulate_gradients,
    adam_step,
    lr_at_epoch,
    restore,
    train,
)

from conftest import TINY_DIMS


def test_lr_schedule_examples():
    s = TrainSchedule()
    assert lr_at_epoch(s, 0) == 0.0035
    assert lr_at_epoch(s, 10) == pytest.approx(0.0035 / 1.05, abs=1e-15)
    assert lr_at_epoch(s, 10) == pytest.approx(0.0033333, abs=1e-7)
    flat = TrainSchedule(decay=0.0)
    assert {lr_at_epoch(flat, t) for t in range(20)} == {0.0035}


def test_schedule_validation():
    for bad in (dict(base_lr=0), dict(decay=-1), dict(batch_size=0), dict(patience=0), dict(max_epochs=0)):
        with pytest.raises(ConfigError):
            TrainSchedule(**bad)


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.5, -2.0])}
    grads = {"w": np.zeros(2)}
    state = OptimizerState()
    adam_step(params, grads, state, 0.1)
    np.testing.assert_array_equal(params["w"], [1.5, -2.0])
    assert state.t == 1


def test_adam_first_step_closed_form():
    params = {"w": np.array([0.0])}
    adam_step(params, {"w": np.array([1.0])}, OptimizerState(), 0.001)
    assert params["w"][0] == pytest.approx(-0.001 / (1 + 1e-8), abs=1e-15)
    assert params["w"][0] == pytest.approx(-0.000999999, abs=1e-9)


def test_adam_two_steps_on_quadratic():
    # f(x) = (x - 3)^2, x0 = 1, lr = 0.1; hand-expanded update rule
    lr, eps = 0.1, 1e-8
    g1 = 2 * (1.0 - 3.0)
    m1, v1 = 0.1 * g1, 0.001 * g1 * g1
    x1 = 1.0 - lr * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + eps)
    g2 = 2 * (x1 - 3.0)
    m2, v2 = 0.9 * m1 + 0.1 * g2, 0.999 * v1 + 0.001 * g2 * g2
    x2 = x1 - lr * (m2 / 0.19) / (math.sqrt(v2 / (1 - 0.999**2)) + eps)

    params = {"x": np.array(1.0)}
    state = OptimizerState()
    for _ in range(2):
        grads = {"x": np.array(2 * (params["x"] - 3.0))}
        adam_step(params, grads, state, lr)
        assert grads["x"] == 0.0
    assert float(params["x"]) == pytest.approx(x2, abs=1e-12)
    assert x2 == pytest.approx(1.2, abs=1e-3)  # each early step moves about lr


def test_adam_nan_names_parameter():
    with pytest.raises(NumericalError, match="proj.W"):
        adam_step({"proj.W": np.zeros(2)}, {"proj.W": np.array([0.0, np.nan])}, OptimizerState(), 0.1)


@pytest.fixture
def toy():
    sents, _ = lexical_corpus(n_sentences=8, n_types=12, seed=4, min_len=3, max_len=5)
    return sents


def test_batch_gradient_is_sum_of_sentence_gradients(toy):
    m = build_tagger(toy, dict(TINY_DIMS, dropout_rate=0.0), seed=1)
    batch = [(m.encode(s), m.encode_labels(s)) for s in toy[:3]]
    names = sorted(m.trainable)
    together = {n: np.zeros_like(m.params[n]) for n in names}
    total = accumulate_gradients(m, batch, together, None)
    separate = {n: np.zeros_like(m.params[n]) for n in names}
    parts = 0.0
    for item in batch:
        one = {n: np.zeros_like(m.params[n]) for n in names}
        parts += accumulate_gradients(m, [item], one, None)
        for n in names:
            separate[n] += one[n]
    assert total == pytest.approx(parts, abs=1e-12)
    for n in names:
        np.testing.assert_allclose(together[n], separate[n], atol=1e-12)


def test_patience_stops_and_keeps_peak(toy):
    m = build_tagger(toy, TINY_DIMS, seed=0)
    curve = [0.1, 0.2, 0.5, 0.4, 0.45, 0.9, 0.9]
    seen = []

    def evaluate(model, epoch):
        seen.append(epoch)
        return curve[epoch - 1]

    res = train(m, toy, [], TrainSchedule(patience=2, max_epochs=7, batch_size=4), seed=0, evaluate=evaluate)
    assert seen == [1, 2, 3, 4, 5]
    assert res.stopped_early
    assert res.best.epoch == 3 and res.best.dev_score == 0.5
    assert res.last.epoch == 5


def test_ties_do_not_count_as_improvement(toy):
    m = build_tagger(toy, TINY_DIMS, seed=0)
    res = train(m, toy, [], TrainSchedule(patience=2, max_epochs=9), evaluate=lambda *_: 0.7)
    assert [h.epoch for h in res.history] == [1, 2, 3]
    assert res.best.epoch == 1


def test_early_stopping_needs_dev(toy):
    m = build_tagger(toy, TINY_DIMS, seed=0)
    with pytest.raises(ConfigError):
        train(m, toy, [], TrainSchedule(max_epochs=1))


def _run(toy, seed, epochs=3):
    m = build_tagger(toy, TINY_DIMS, seed=seed)
    res = train(m, toy, toy, TrainSchedule(max_epochs=epochs, patience=None, batch_size=3), seed=seed)
    return m, res


def test_same_seed_same_history(toy):
    m1, r1 = _run(toy, 7)
    m2, r2 = _run(toy, 7)
    assert [h.train_loss for h in r1.history] == [h.train_loss for h in r2.history]
    for k in m1.params:
        assert m1.params[k].tobytes() == m2.params[k].tobytes()
    _, r3 = _run(toy, 8)
    assert [h.train_loss for h in r1.history] != [h.train_loss for h in r3.history]


def test_loss_goes_down(toy):
    m = build_tagger(toy, dict(TINY_DIMS, dropout_rate=0.0), seed=0)
    res = train(m, toy, toy, TrainSchedule(base_lr=0.02, max_epochs=5, patience=None), seed=0)
    losses = [h.train_loss for h in res.history]
    assert losses[-1] < losses[0]
    assert [h.lr for h in res.history] == [0.02 / (1 + 0.005 * t) for t in range(5)]


def test_resume_matches_uninterrupted_run(toy):
    full, _ = _run(toy, 3, epochs=4)
    m = build_tagger(toy, TINY_DIMS, seed=3)
    half = train(m, toy, toy, TrainSchedule(max_epochs=2, patience=None, batch_size=3), seed=3)
    resumed_model = restore(half.last)
    res = train(resumed_model, toy, toy, TrainSchedule(max_epochs=4, patience=None, batch_size=3),
                seed=3, resume=half.last)
    assert [h.epoch for h in res.history] == [1, 2, 3, 4]
    for k in full.params:
        np.testing.assert_array_equal(resumed_model.params[k], full.params[k])


def test_divergence_reports_best_so_far(toy, monkeypatch):
    import seqlabel.training as tr

    m = build_tagger(toy, TINY_DIMS, seed=0)
    calls = {"n": 0}
    real = tr.accumulate_gradients

    def flaky(model, batch, grads, dropout):
        calls["n"] += 1
        if calls["n"] > 2:
            raise NumericalError("training loss is not finite")
        return real(model, batch, grads, dropout)

    monkeypatch.setattr(tr, "accumulate_gradients", flaky)
    with pytest.raises(tr.TrainingDiverged) as info:
        train(m, toy, [], TrainSchedule(max_epochs=5, batch_size=8), evaluate=lambda _m, e: e / 10)
    assert info.value.best is not None and info.value.best.epoch == 2
    assert info.value.exit_code == 3
