import numpy as np
import pytest

from seqlabel.autodiff import Graph
from seqlabel.data import TaggedSentence, Token, Vocabulary, random_embeddings
from seqlabel.errors import ConfigError, DataError
from seqlabel.layers import DropoutSpec
from seqlabel.model import Tagger, TaggerConfig, build_tagger

from conftest import TINY_DIMS, max_rel, model_loss_fn, numeric_grad


def _sent(words, labels=None, pos=None, chunk=None):
    n = len(words)
    labels = labels or ["O"] * n
    pos = pos or [None] * n
    chunk = chunk or [None] * n
    return TaggedSentence([Token(w, lab, p, c) for w, lab, p, c in zip(words, labels, pos, chunk)])


def test_input_width_pos_config():
    cfg = TaggerConfig(tagset=["N", "V"])
    m = Tagger(cfg, random_embeddings(["a"], 300, 0), Vocabulary(["a"]))
    assert m.input_width == 500


def test_input_width_ner_config():
    cfg = TaggerConfig(tagset=["O", "B-PER"], use_pos_onehot=True, use_chunk_onehot=True)
    pos = Vocabulary([f"p{i}" for i in range(20)], with_unk=False)
    chunks = Vocabulary([f"c{i}" for i in range(10)], with_unk=False)
    m = Tagger(cfg, random_embeddings(["a"], 300, 0), Vocabulary(["a"]), pos, chunks)
    assert m.input_width == 530
    assert m.params["word_fwd.U_f"].shape == (150, 530)


def test_unknown_word_uses_unk_row(tiny_model):
    enc = tiny_model.encode(_sent(["never_seen"], pos=["N"], chunk=["B-NP"]))
    assert enc[0].word_index == 0
    emb = tiny_model.params["word_emb"]
    g = Graph()
    from seqlabel.model import build_word_representation

    rep = build_word_representation(enc[0], tiny_model.bind(g), tiny_model.cfg, emb)
    np.testing.assert_array_equal(rep.values[: emb.shape[1]], emb[0])


def test_char_vocab_keeps_underscore(tiny_model):
    enc = tiny_model.encode(_sent(["Hà_Nội"], pos=["N"], chunk=["B-NP"]))
    assert tiny_model.chars.lookup("_") in enc[0].char_indices
    assert 0 not in enc[0].char_indices


def test_emission_shape_7_by_9():
    tags = [f"T{i}" for i in range(9)]
    words = [f"w{i}" for i in range(7)]
    sent = _sent(words, labels=[tags[i] for i in range(7)])
    m = build_tagger([sent], dict(TINY_DIMS, tagset=tags), seed=0)
    s = m.scores(Graph(), m.encode(sent))
    assert s.emissions.shape == (7, 9)
    assert s.transitions.shape == (11, 11)


def test_eval_mode_is_deterministic(tiny_model, ner_sentences):
    enc = tiny_model.encode(ner_sentences[1])
    a = tiny_model.scores(Graph(), enc).emissions.values
    b = tiny_model.scores(Graph(), enc).emissions.values
    assert a.tobytes() == b.tobytes()


def test_train_mode_dropout_changes_emissions(tiny_model, ner_sentences):
    enc = tiny_model.encode(ner_sentences[1])
    ev = tiny_model.scores(Graph(), enc).emissions.values
    tr = tiny_model.scores(Graph(), enc, DropoutSpec(0.35, rng_seed=1)).emissions.values
    assert not np.array_equal(ev, tr)


def test_missing_feature_names_position(tiny_model):
    sent = _sent(["Anh", "Minh"], pos=["N", None], chunk=["B-NP", "I-NP"])
    with pytest.raises(DataError, match="position 1"):
        tiny_model.scores(Graph(), tiny_model.encode(sent))


def test_single_label_tagset():
    sent = _sent(["x", "y", "z"], labels=["O"] * 3)
    m = build_tagger([sent], TINY_DIMS, seed=0)
    assert m.cfg.tagset == ["O"]
    assert m.tag(_sent(["x", "q", "z", "y"])) == ["O"] * 4


def test_every_trainable_group_gets_gradient(tiny_model, ner_sentences):
    sent = ner_sentences[1]
    g = Graph()
    bound = tiny_model.bind(g)
    loss = tiny_model.loss(g, tiny_model.encode(sent), tiny_model.encode_labels(sent),
                           DropoutSpec(0.35, rng_seed=2), bound)
    g.backward(loss)
    for name in tiny_model.trainable:
        grad = bound[name].grad
        assert grad is not None and np.isfinite(grad).all(), name
        assert np.abs(grad).sum() > 0, name
    assert "word_emb" not in bound


def test_full_model_gradient_check():
    sent = _sent(["Anh", "Huế"], labels=["B-PER", "B-LOC"])
    extra = _sent(["ở"], labels=["O"])
    m = build_tagger([sent, extra], dict(TINY_DIMS, finetune_words=True), seed=5)
    assert m.cfg.num_tags == 3
    enc, gold = m.encode(sent), m.encode_labels(sent)
    for arr in m.params.values():
        arr += np.random.default_rng(0).normal(scale=0.3, size=arr.shape)
    g = Graph()
    bound = m.bind(g)
    g.backward(m.loss(g, enc, gold, DropoutSpec(0.35, rng_seed=11), bound))
    f = model_loss_fn(m, enc, gold, dropout_seed=11)
    for name, arr in m.params.items():
        assert max_rel(bound[name].grad, numeric_grad(f, arr)) < 1e-4, name


def test_config_validation():
    with pytest.raises(ConfigError):
        TaggerConfig(tagset=[])
    with pytest.raises(ConfigError):
        TaggerConfig(tagset=["O"], dropout_rate=1.0)
    with pytest.raises(ConfigError):
        TaggerConfig(tagset=["O", "O"])
    with pytest.raises(ConfigError):
        Tagger(TaggerConfig(tagset=["O"]), random_embeddings(["a"], 10, 0), Vocabulary(["a"]))


def test_unknown_label_is_data_error(tiny_model):
    with pytest.raises(DataError, match="B-MISC"):
        tiny_model.encode_labels(_sent(["a"], labels=["B-MISC"]))
