import math

import numpy as np
import pytest

from xlparse import autodiff as ad
from xlparse.autodiff import ParameterStore, Tensor


def store(seed=0, **arrays):
    ps = ParameterStore(seed, "double")
    for k, v in arrays.items():
        ps.given(k, v)
    return ps


def rand(*shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).normal(0, scale, size=shape)


def test_forward_examples():
    assert np.array_equal(ad.softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    m = rand(2, 3)
    assert np.array_equal(ad.matmul(Tensor(np.eye(2)), Tensor(m)).data, m)
    ce = ad.cross_entropy(Tensor([10.0, -10.0]), 0).item()
    assert ce == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-12)
    assert ce == pytest.approx(2.06e-9, rel=1e-2)


def test_softmax_rows_sum_to_one():
    p = ad.softmax(Tensor(rand(5, 7, scale=10.0))).data
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-12


def test_cross_entropy_reductions():
    logits = rand(4, 3)
    targets = [0, 2, 1, 1]
    z = logits - logits.max(1, keepdims=True)
    ref = -(z[range(4), targets] - np.log(np.exp(z).sum(1)))
    assert ad.cross_entropy(Tensor(logits), targets).item() == pytest.approx(ref.sum(), abs=1e-12)
    assert ad.cross_entropy(Tensor(logits), targets, "mean").item() == pytest.approx(ref.mean(), abs=1e-12)
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor(logits), [0, 1])


def test_sum_and_square_gradients():
    w = rand(3, 4)
    ps = store(w=w)
    ad.backward(ps["w"].sum())
    assert np.array_equal(ps["w"].grad, np.ones_like(w))
    ps.zero_grad()
    ad.backward((ps["w"] * ps["w"]).sum())
    assert np.allclose(ps["w"].grad, 2 * w, atol=0, rtol=1e-15)


def test_backward_errors():
    ps = store(w=rand(2))
    loss = ps["w"].sum()
    ad.backward(loss)
    with pytest.raises(RuntimeError, match="twice"):
        ad.backward(loss)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ps["w"] * 2.0)
    with pytest.raises(RuntimeError):
        ad.backward(Tensor(1.0))


def test_backward_is_linear():
    ps = store(w=rand(3, 3), v=rand(3))

    def l1():
        return ad.tanh(ps["w"] @ ps["v"].reshape(3, 1)).sum()

    def l2():
        return (ad.sigmoid(ps["w"]) * ps["w"]).sum()

    grads = []
    for f in (l1, l2, lambda: l1() + l2()):
        ps.zero_grad()
        ad.backward(f())
        grads.append({k: np.zeros_like(t.data) if t.grad is None else t.grad.copy() for k, t in ps.items()})
    for k in grads[0]:
        assert np.allclose(grads[0][k] + grads[1][k], grads[2][k], rtol=0, atol=1e-14)


def test_mlp_matches_finite_differences():
    ps = store(w1=rand(4, 5, seed=1), w2=rand(5, 5, seed=2), w3=rand(5, 2, seed=3), x=rand(3, 4, seed=4))
    f = lambda: ad.tanh(ad.tanh(ad.tanh(ps["x"] @ ps["w1"]) @ ps["w2"]) @ ps["w3"]).sum()
    assert ad.grad_check(f, ps, eps=1e-6) < 1e-6


def test_quadratic_grad_check():
    ps = store(w=rand(6, seed=5))
    assert ad.grad_check(lambda: (ps["w"] * ps["w"]).sum() * 0.5, ps, eps=1e-5) < 1e-9


@pytest.mark.parametrize("name", ["add", "sub", "mul", "matmul", "batched_matmul", "concat", "stack",
                                  "split", "getitem", "embedding", "mean", "elu", "relu", "exp", "log",
                                  "softmax", "log_softmax", "cross_entropy", "layer_norm", "transpose"])
def test_op_gradients(name):
    a, b = rand(3, 4, seed=1), rand(3, 4, seed=2)
    w = rand(3, 4, seed=9)
    ps = store(a=a, b=b, m=rand(4, 2, seed=3), g=1 + rand(4, seed=4, scale=0.1), h=rand(4, seed=5),
               c=rand(2, 3, 4, seed=6), d=rand(2, 4, 5, seed=7), r=rand(4, seed=8))
    A, B = ps["a"], ps["b"]
    proj = Tensor(w)
    cases = {
        "add": lambda: ((A + ps["r"]) * proj).sum(),
        "sub": lambda: ((A - B) * proj).sum(),
        "mul": lambda: (A * B * proj).sum(),
        "matmul": lambda: ad.tanh(A @ ps["m"]).sum(),
        "batched_matmul": lambda: ad.tanh(ps["c"] @ ps["d"]).sum(),
        "concat": lambda: (ad.concat([A, B], axis=0) * Tensor(rand(6, 4, seed=10))).sum(),
        "stack": lambda: (ad.stack([A, B], axis=1) * Tensor(rand(3, 2, 4, seed=11))).sum(),
        "split": lambda: (ad.split(A, [1, 3], axis=1)[1] * Tensor(rand(3, 3, seed=12))).sum(),
        "getitem": lambda: (A[[0, 2, 0]] * Tensor(rand(3, 4, seed=13))).sum(),
        "embedding": lambda: (ad.embedding(A, [2, 2, 1]) * Tensor(rand(3, 4, seed=14))).sum(),
        "mean": lambda: (ad.mean(A * A, axis=0) * ps["r"]).sum(),
        "elu": lambda: (ad.elu(A) * proj).sum(),
        "relu": lambda: (ad.relu(A + 0.05) * proj).sum(),
        "exp": lambda: (ad.exp(A) * proj).sum(),
        "log": lambda: (ad.log(A * A + 1.0) * proj).sum(),
        "softmax": lambda: (ad.softmax(A) * proj).sum(),
        "log_softmax": lambda: (ad.log_softmax(A, axis=0) * proj).sum(),
        "cross_entropy": lambda: ad.cross_entropy(A, [3, 0, 1]),
        "layer_norm": lambda: (ad.layer_norm(A, ps["g"], ps["h"]) * proj).sum(),
        "transpose": lambda: (A.T @ B).sum() + (ad.transpose(ps["c"], (0, 2, 1)) * Tensor(rand(2, 4, 3, seed=15))).sum(),
    }
    assert ad.grad_check(cases[name], ps, eps=1e-6) < 1e-6


def test_grad_check_preconditions():
    single = ParameterStore(0, "single")
    single.given("w", [1.0])
    with pytest.raises(ValueError, match="double"):
        ad.grad_check(lambda: single["w"].sum(), single, eps=1e-5)
    ps = store(w=[1.0])
    for eps in (1e-8, 1e-3):
        with pytest.raises(ValueError):
            ad.grad_check(lambda: ps["w"].sum(), ps, eps=eps)


def test_dropout():
    x = Tensor(rand(50, 40))
    assert ad.dropout(x, 0.7, False, None) is x
    out = ad.dropout(x, 0.5, True, np.random.default_rng(0)).data
    kept = out != 0
    assert np.allclose(out[kept], 2 * x.data[kept], rtol=1e-15)
    assert 0.4 < kept.mean() < 0.6


def test_no_grad_records_nothing():
    ps = store(w=rand(2))
    with ad.no_grad():
        y = ps["w"] * 2.0
    assert not y.requires_grad


def test_broadcast_mismatch_rejected():
    with pytest.raises(ValueError):
        ad.add(Tensor(rand(3, 4)), Tensor(rand(3)))


def test_initialisers():
    ps = ParameterStore(seed=1)
    w = ps.weight("w", (300, 100)).data
    bound = math.sqrt(6 / 400)
    assert w.dtype == np.float32 and np.abs(w).max() <= bound and np.abs(w).max() > 0.9 * bound
    assert not ps.bias("b", (7,)).data.any()
    e = ps.embedding("e", (200, 50)).data
    assert abs(e.std() - 0.01) < 1e-3
    assert ps.meta == {"w": "glorot_uniform", "b": "zeros", "e": "normal(0,0.01)"}
    with pytest.raises(KeyError):
        ps.bias("b", (1,))
    again = ParameterStore(seed=1)
    assert np.array_equal(again.weight("w", (300, 100)).data, w)


def test_checkpoint_round_trip(tmp_path):
    ps = ParameterStore(seed=2)
    ps.weight("enc.w", (3, 4))
    ps.embedding("pos", (5, 2))
    ps.given("x", np.arange(6.0).reshape(2, 3).astype(np.float64))
    raw = ad.save_checkpoint(ps, tmp_path / "p.ckpt")
    assert raw[:8] == b"XLPCKPT\0" and (tmp_path / "p.ckpt").read_bytes() == raw
    back = ad.load_checkpoint(tmp_path / "p.ckpt")
    assert set(back) == {"enc.w", "pos", "x"}
    for k, t in ps.items():
        assert back[k].dtype == t.data.dtype and np.array_equal(back[k], t.data)
    assert ad.save_checkpoint(back) == raw
    with pytest.raises(ValueError):
        ad.load_checkpoint(b"garbage!" + raw[8:])


def test_cast_and_snapshot():
    ps = ParameterStore(seed=0)
    ps.weight("w", (2, 2))
    snap = ps.snapshot()
    ps.cast("double")
    assert ps["w"].data.dtype == np.float64
    ps["w"].data += 1
    ps.load_arrays(snap)
    assert np.array_equal(ps["w"].data, snap["w"].astype(np.float64))
    with pytest.raises(KeyError):
        ps.load_arrays({})
