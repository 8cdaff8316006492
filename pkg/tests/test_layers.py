import math

import numpy as np
import pytest

from drgd import autodiff as ad
from drgd.layers import AffineParams, EmbeddingTable, GRUParams, affine, embed, gru_step
from conftest import numerical_grad, rel_error, scalar

# sigma(2) + (1 - sigma(2)) * tanh(1 + sigma(2)), evaluated by hand
GRU_1D_GOLDEN = 0.9945837714808965


def gru_const(k_in, k_h, w=0.0, b=0.0):
    vals = {f: np.full((k_h, k_in), w) for f in ("W_xr", "W_xz", "W_xh")}
    vals.update({f: np.full((k_h, k_h), w) for f in ("W_hr", "W_hz", "W_hh")})
    vals.update({f: np.full((1, k_h), b) for f in ("b_r", "b_z", "b_h")})
    return GRUParams(**{f: ad.parameter(v) for f, v in vals.items()})


def test_embed_identity_table():
    table = EmbeddingTable(ad.parameter(np.eye(2)))
    np.testing.assert_array_equal(embed(table, [0]).value, [[1.0, 0.0]])
    out = embed(table, [1, 1]).value
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[0], [0.0, 1.0])


def test_embed_gradient_is_one_hot():
    table = EmbeddingTable(ad.parameter(np.eye(2)))
    tape = ad.Tape()
    with tape:
        loss = ad.total(embed(table, [1]))
    tape.backward(loss)
    np.testing.assert_array_equal(table.weight.grad, [[0.0, 0.0], [1.0, 1.0]])


def test_embed_out_of_range():
    table = EmbeddingTable(ad.parameter(np.eye(2)))
    with pytest.raises(IndexError, match=r"id 5 at position \(1,\)"):
        embed(table, [0, 5])


def test_gru_zero_weights_halves_state():
    p = gru_const(3, 2)
    v = np.array([[0.3, -0.8]])
    h = gru_step(p, ad.constant(np.ones((1, 3))), ad.constant(v))
    np.testing.assert_allclose(h.value, 0.5 * v, rtol=0, atol=1e-15)


def test_gru_zero_everything():
    p = gru_const(3, 2)
    h = gru_step(p, ad.constant(np.ones((1, 3))), ad.constant(np.zeros((1, 2))))
    np.testing.assert_array_equal(h.value, np.zeros((1, 2)))


def test_gru_one_dim_golden():
    p = gru_const(1, 1, w=1.0)
    h = gru_step(p, ad.constant([[1.0]]), ad.constant([[1.0]]))
    s = 1 / (1 + math.exp(-2))
    assert h.value[0, 0] == pytest.approx(s + (1 - s) * math.tanh(1 + s), abs=1e-15)
    assert h.value[0, 0] == pytest.approx(GRU_1D_GOLDEN, abs=1e-15)


def test_gru_saturated_update_gate_keeps_state():
    rng = np.random.default_rng(0)
    p = GRUParams.init(rng, 3, 4, "g")
    p.b_z.value[:] = 1e3
    h_prev = rng.uniform(-1, 1, size=(2, 4))
    h = gru_step(p, ad.constant(rng.normal(size=(2, 3))), ad.constant(h_prev))
    np.testing.assert_allclose(h.value, h_prev, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_gru_outputs_bounded_and_finite(seed):
    rng = np.random.default_rng(seed)
    p = GRUParams.init(rng, 5, 6, "g")
    for t in p.tensors():
        t.value = rng.uniform(-1, 1, t.value.shape)
    x = rng.uniform(-10, 10, size=(4, 5))
    h_prev = rng.uniform(-1, 1, size=(4, 6))
    h = gru_step(p, ad.constant(x), ad.constant(h_prev)).value
    assert np.all(np.isfinite(h)) and np.all(np.abs(h) < 1)


def test_gru_shape_mismatch():
    p = gru_const(3, 2)
    with pytest.raises(ValueError, match="shape mismatch"):
        gru_step(p, ad.constant(np.ones((1, 4))), ad.constant(np.zeros((1, 2))))


def test_gru_three_steps_gradient_check():
    rng = np.random.default_rng(3)
    p = GRUParams.init(rng, 3, 4, "g")
    for t in p.tensors():
        t.value = rng.uniform(-1, 1, t.value.shape)
    xs = [ad.constant(rng.normal(size=(2, 3))) for _ in range(3)]
    w = rng.normal(size=(2, 4))

    def f():
        h = ad.constant(np.zeros((2, 4)))
        for x in xs:
            h = gru_step(p, x, h)
        return ad.total(ad.mul(h, w))

    tape = ad.Tape()
    ad.zero_grad(p.tensors())
    with tape:
        loss = f()
    tape.backward(loss)
    for t in p.tensors():
        assert rel_error(t.grad, numerical_grad(scalar(f), t)) < 1e-4


def test_affine_identity_and_constant():
    x = ad.constant([[1.5, -2.0]])
    ident = AffineParams(ad.parameter(np.eye(2)), ad.parameter(np.zeros((1, 2))))
    np.testing.assert_array_equal(affine(ident, x).value, x.value)
    const = AffineParams(ad.parameter(np.zeros((2, 2))), ad.parameter([[3.0, 4.0]]))
    np.testing.assert_array_equal(affine(const, x).value, [[3.0, 4.0]])


def test_affine_vs_dot_products():
    rng = np.random.default_rng(0)
    W, b, x = rng.normal(size=(3, 2)), rng.normal(size=3), rng.normal(size=2)
    p = AffineParams(ad.parameter(W), ad.parameter(b[None, :]))
    expected = [sum(W[i, j] * x[j] for j in range(2)) + b[i] for i in range(3)]
    np.testing.assert_allclose(affine(p, ad.constant(x[None, :])).value[0], expected, rtol=1e-14)


def test_affine_shape_mismatch():
    p = AffineParams(ad.parameter(np.zeros((2, 3))), ad.parameter(np.zeros((1, 2))))
    with pytest.raises(ValueError, match="shape mismatch"):
        affine(p, ad.constant(np.ones((1, 2))))
