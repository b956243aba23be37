import math

import numpy as np
import pytest

from xlparse import autodiff as ad
from xlparse.autodiff import ParameterStore
from xlparse.encoder import RNN, SELFATT_RELATIVE
from xlparse.toy import toy_batch, toy_parser
from xlparse.training import AdamState, EpochLog, TrainConfig, adam_step, graph_loss, log_tsv, train

from corpora import overfit_treebank, small_parser


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def logsumexp(v):
    m = max(v)
    return m + math.log(sum(math.exp(x - m) for x in v))


def test_adam_matches_hand_formula():
    ps = ParameterStore(0, "double")
    ps.given("w", np.array([1.0, -2.0]))
    state = AdamState()
    grads = [np.array([0.5, -1.0]), np.array([0.1, 0.3])]
    m = v = np.zeros(2)
    w = np.array([1.0, -2.0])
    for t, g in enumerate(grads, start=1):
        ps["w"].grad = g.copy()
        adam_step(ps, state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(ps["w"].data, w, rtol=0, atol=1e-15)


def test_adam_zero_gradient_is_noop_and_missing_gradient_raises():
    ps = ParameterStore(0, "double")
    ps.given("w", np.array([1.0, 2.0]))
    ps["w"].grad = np.zeros(2)
    adam_step(ps, AdamState(), 0.1)
    assert ps["w"].data.tolist() == [1.0, 2.0]
    ps["w"].grad = None
    with pytest.raises(ValueError):
        adam_step(ps, AdamState(), 0.1)


def test_reference_optimiser_settings():
    rnn = TrainConfig.for_encoder(RNN)
    att = TrainConfig.for_encoder(SELFATT_RELATIVE, epochs=3)
    assert (rnn.learning_rate, rnn.batch_size, rnn.dropout) == (1e-3, 32, 0.33)
    assert (att.learning_rate, att.batch_size, att.dropout, att.epochs) == (1e-4, 80, 0.2, 3)
    for bad in (dict(learning_rate=0), dict(batch_size=0), dict(epochs=-1), dict(max_sentences=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_graph_loss_matches_scalar_recomputation():
    parser = toy_parser("rnn-graph", seed=3)
    batch = toy_batch()
    got = graph_loss(parser, batch).item()
    p = {k: t.data for k, t in parser.params.items()}
    total, tokens = 0.0, 0
    for s in batch:
        x = np.vstack([p["graph.root"], parser.encode(s).data])
        H = elu(x @ p["graph.arc.head.w"] + p["graph.arc.head.b"])
        D = elu(x @ p["graph.arc.dep.w"] + p["graph.arc.dep.b"])
        LH = elu(x @ p["graph.label.head.w"] + p["graph.label.head.b"])
        LD = elu(x @ p["graph.label.dep.w"] + p["graph.label.dep.b"])
        L, dl = len(parser.labels), LH.shape[1]
        for m, (h, lab) in enumerate(zip(s.heads, s.deprels), start=1):
            arc = [float(H[k] @ p["graph.arc.u"] @ D[m] + p["graph.arc.head_bias"] @ H[k])
                   for k in range(len(x))]
            total += logsumexp(arc) - arc[h]
            lab_scores = []
            for l in range(L):
                u = p["graph.label.u"][:, l * dl:(l + 1) * dl]
                lab_scores.append(float(LH[h] @ u @ LD[m] + np.concatenate([LH[h], LD[m]]) @ p["graph.label.w"][:, l]
                                        + p["graph.label.b"][l]))
            total += logsumexp(lab_scores) - lab_scores[parser.labels.index(lab)]
            tokens += 1
    assert got == pytest.approx(total / tokens, abs=1e-8)


def test_graph_loss_rejects_stack_parser():
    with pytest.raises(ValueError):
        graph_loss(toy_parser("rnn-stack"), toy_batch())


def test_zero_epochs_and_determinism():
    tb = overfit_treebank()
    p = small_parser("selfatt-graph")
    before = p.params.snapshot()
    _, logs = train(p, tb, TrainConfig(epochs=0, precision="double"))
    assert logs == [] and all(np.array_equal(before[k], v) for k, v in p.params.snapshot().items())

    runs = []
    for _ in range(2):
        q = small_parser("selfatt-graph")
        _, logs = train(q, tb, TrainConfig(epochs=2, batch_size=3, dropout=0.2, seed=5, precision="double"))
        runs.append((q.params.snapshot(), [e.train_loss for e in logs]))
    assert runs[0][1] == runs[1][1]
    assert all(np.array_equal(runs[0][0][k], runs[1][0][k]) for k in runs[0][0])


def test_loss_decreases_full_batch():
    tb = overfit_treebank()
    p = small_parser("rnn-graph")
    losses = []
    train(p, tb, TrainConfig(learning_rate=1e-3, batch_size=8, epochs=10, dropout=0.0, precision="double"),
          on_epoch=lambda e, q: losses.append(q.batch_loss(tb.sentences).item()) and False)
    assert len(losses) == 10
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_frozen_word_table_unchanged():
    p = small_parser("rnn-stack")
    table = p.embedder.word_table.copy()
    train(p, overfit_treebank(), TrainConfig(epochs=1, batch_size=4, precision="double"))
    assert np.array_equal(table, p.embedder.word_table)
    assert not any("word" in name for name in p.params)


def test_length_filter_and_truncation():
    tb = overfit_treebank()
    seen = []

    class Spy:
        def __init__(self, parser):
            self.inner = parser

        def __getattr__(self, name):
            return getattr(self.inner, name)

        def batch_loss(self, batch, *a, **k):
            seen.extend(len(s) for s in batch)
            return self.inner.batch_loss(batch, *a, **k)

    train(Spy(small_parser("rnn-graph")), tb,
          TrainConfig(epochs=1, max_sentence_length=5, max_sentences=3, precision="double"))
    assert sorted(seen) == sorted(len(s) for s in [s for s in tb.sentences if len(s) <= 5][:3])
    with pytest.raises(ValueError):
        train(small_parser("rnn-graph"), tb, TrainConfig(max_sentence_length=1, precision="double"))


def test_dev_selection_and_log_format():
    tb = overfit_treebank()
    p = small_parser("selfatt-graph")
    _, logs = train(p, tb, TrainConfig(epochs=2, precision="double"), dev=tb)
    assert all(e.dev_uas is not None for e in logs)
    text = log_tsv([EpochLog(1, 0.5, None, None, 1.234), EpochLog(2, 0.25, 0.5, 0.25, 2.0)], seed=7)
    assert text == ("# seed = 7\nepoch\ttrain_loss\tdev_UAS\tdev_LAS\twall_seconds\n"
                    "1\t0.500000\tNA\tNA\t1.23\n2\t0.250000\t0.5000\t0.2500\t2.00\n")
