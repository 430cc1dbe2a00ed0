import numpy as np
import pytest

from seqlabel.autodiff import Graph, relative_error
from seqlabel.data import TaggedSentence, Token
from seqlabel.model import build_tagger

TINY_DIMS = dict(char_dim=4, word_dim=6, char_hidden=5, word_hidden=5)


def numeric_grad(fn, arr, step=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    out = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn()
        flat[i] = orig - step
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return out


def max_rel(analytic, numeric):
    rel = relative_error(analytic, numeric)
    return float(rel.max()) if rel.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ner_sentences():
    rows = [
        [("Hà_Nội", "N", "B-NP", "B-LOC"), ("đẹp", "A", "B-AP", "O")],
        [("Anh", "N", "B-NP", "B-PER"), ("Minh", "Np", "I-NP", "I-PER"), ("ở", "E", "B-PP", "O"),
         ("Huế", "Np", "B-NP", "B-LOC")],
    ]
    return [TaggedSentence([Token(w, lab, p, c) for w, p, c, lab in r]) for r in rows]


@pytest.fixture
def tiny_model(ner_sentences):
    return build_tagger(ner_sentences, dict(TINY_DIMS, use_pos_onehot=True, use_chunk_onehot=True), seed=3)


def model_loss_fn(model, encoded, gold, dropout_seed=None):
    """Loss of ``model`` on one sentence as a plain float; dropout masks fixed by seed."""
    from seqlabel.layers import DropoutSpec

    def f():
        g = Graph()
        spec = None
        if dropout_seed is not None:
            spec = DropoutSpec(model.cfg.dropout_rate, rng_seed=dropout_seed)
        return model.loss(g, encoded, gold, spec).item()

    return f


# acceptance criteria outcomes, printed once at the end of the run
ACCEPTANCE = {}


def record_criterion(number, title, ok, detail=""):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    print(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
    assert ok, f"criterion {number} failed: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
