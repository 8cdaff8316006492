import numpy as np
import pytest

from drgd import autodiff as ad
from drgd.encoder import encode, initial_decoder_state
from drgd.layers import AffineParams, embed, gru_step
from drgd.model import ModelParams
from conftest import tiny_config, widen


def params(seed=0, **kw):
    return widen(ModelParams(tiny_config(**kw), seed), seed)


def test_length_one_source():
    p = params()
    enc = encode(p, [5])
    x = embed(p.src_embed, [5])
    zero = ad.constant(np.zeros((1, 4)))
    fwd = gru_step(p.enc_fwd, x, zero).value
    bwd = gru_step(p.enc_bwd, x, zero).value
    np.testing.assert_array_equal(enc.states.value[0, 0], np.concatenate([fwd[0], bwd[0]]))


def test_zero_weights_give_zero_states():
    p = params()
    for name, t in p.named_tensors():
        if name.startswith(("enc_fwd", "enc_bwd")):
            t.value[:] = 0
    enc = encode(p, [4, 5, 6])
    np.testing.assert_array_equal(enc.states.value, 0)


def test_unrolled_oracle():
    p = params(seed=3)
    ids = [4, 7, 5]
    enc = encode(p, ids)
    xs = [embed(p.src_embed, [i]) for i in ids]
    h = ad.constant(np.zeros((1, 4)))
    fwd = []
    for x in xs:
        h = gru_step(p.enc_fwd, x, h)
        fwd.append(h.value[0])
    h = ad.constant(np.zeros((1, 4)))
    bwd = [None] * 3
    for t in (2, 1, 0):
        h = gru_step(p.enc_bwd, xs[t], h)
        bwd[t] = h.value[0]
    for t in range(3):
        np.testing.assert_allclose(enc.states.value[0, t], np.concatenate([fwd[t], bwd[t]]), rtol=0, atol=1e-15)


def test_reversal_swaps_directions():
    p = params(seed=5)
    swapped = params(seed=5)
    swapped.enc_fwd, swapped.enc_bwd = p.enc_bwd, p.enc_fwd
    ids = [4, 8, 5, 6]
    a = encode(p, ids).states.value[0]
    b = encode(swapped, ids[::-1]).states.value[0]
    np.testing.assert_allclose(a[:, :4], b[::-1, 4:], atol=1e-15)
    np.testing.assert_allclose(a[:, 4:], b[::-1, :4], atol=1e-15)


def test_padding_does_not_change_output():
    p = params(seed=1)
    plain = encode(p, [4, 5, 6])
    padded = encode(p, [[4, 5, 6, 0, 0], [7, 7, 7, 7, 7]], [[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]])
    np.testing.assert_allclose(padded.states.value[0, :3], plain.states.value[0], rtol=0, atol=1e-12)
    np.testing.assert_array_equal(padded.states.value[0, 3:], 0)
    np.testing.assert_allclose(padded.init_state.value[0], plain.init_state.value[0], atol=1e-15)


def test_empty_source_rejected():
    with pytest.raises(ValueError, match="empty source"):
        encode(params(), np.zeros(0, dtype=int))


def test_truncates_to_max_source_length():
    p = params(max_src_len=3)
    np.testing.assert_array_equal(encode(p, [4, 5, 6, 7, 8]).states.value, encode(p, [4, 5, 6]).states.value)


def identity_projection(k):
    W = np.zeros((k, 2 * k))
    W[:, :k] = np.eye(k)
    return AffineParams(ad.parameter(W), ad.parameter(np.zeros((1, k))))


def test_initial_state_mean():
    # rows [1,3] and [3,5] -> mean [2,4]; an identity-ish projection exposes it through tanh
    proj = AffineParams(ad.parameter(np.eye(2)), ad.parameter(np.zeros((1, 2))))
    states = ad.constant([[[1.0, 3.0], [3.0, 5.0]]])
    out = initial_decoder_state(proj, states, np.ones((1, 2), bool))
    np.testing.assert_allclose(out.value, np.tanh([[2.0, 4.0]]), rtol=1e-15)


def test_initial_state_single_and_duplicate_rows():
    proj = AffineParams(ad.parameter(np.array([[0.5, -0.25]])), ad.parameter(np.array([[0.1]])))
    one = initial_decoder_state(proj, ad.constant([[[0.4, 0.2]]]), np.ones((1, 1), bool))
    two = initial_decoder_state(proj, ad.constant([[[0.4, 0.2], [0.4, 0.2]]]), np.ones((1, 2), bool))
    np.testing.assert_allclose(one.value, np.tanh([[0.5 * 0.4 - 0.25 * 0.2 + 0.1]]), rtol=1e-15)
    np.testing.assert_allclose(two.value, one.value, rtol=1e-15)


def test_initial_state_all_masked():
    proj = identity_projection(1)
    with pytest.raises(ValueError, match="unmasked"):
        initial_decoder_state(proj, ad.constant(np.zeros((1, 2, 2))), np.zeros((1, 2), bool))
