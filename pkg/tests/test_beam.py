import itertools
import math

import numpy as np
import pytest

from drgd.beam import beam_search, decode_corpus, greedy_decode, search
from drgd.model import ModelParams
from conftest import tiny_config, widen


def toy_model(seed, V=3):
    """Prefix-dependent random distributions over V tokens, keyed by the history."""
    rng = np.random.default_rng(seed)
    cache = {}

    def dist(prefix):
        if prefix not in cache:
            logits = rng.normal(size=V) * 2
            cache[prefix] = logits - np.log(np.exp(logits).sum())
        return cache[prefix]

    def step_fn(state, last):
        new = [p + (int(t),) for p, t in zip(state, last)]
        return np.stack([dist(p) for p in new]), new

    def reorder(state, rows):
        return [state[i] for i in rows]

    return dist, step_fn, reorder


def run(step_fn, reorder, beam, L, **kw):
    return search(step_fn, reorder, [()], beam, L, bos_id=-1, eos_id=None, banned=(), **kw)


def enumerate_all(dist, V, L):
    out = []
    for seq in itertools.product(range(V), repeat=L):
        score = sum(dist((-1,) + seq[:i])[seq[i]] for i in range(L))
        out.append((score, seq))
    out.sort(key=lambda x: (-x[0], x[1]))
    return out


@pytest.mark.parametrize("seed", range(10))
def test_full_beam_is_exhaustive(seed):
    dist, step_fn, reorder = toy_model(seed)
    hyps = run(step_fn, reorder, 27, 3)
    brute = enumerate_all(dist, 3, 3)
    assert [h.tokens for h in hyps] == [s for _, s in brute]
    for h, (score, _) in zip(hyps, brute):
        assert abs(h.score - score) < 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_beam_one_is_greedy(seed):
    dist, step_fn, reorder = toy_model(seed)
    (h,) = run(step_fn, reorder, 1, 3)
    prefix = (-1,)
    for _ in range(3):
        prefix += (int(np.argmax(dist(prefix))),)
    assert h.tokens == prefix[1:]


def test_two_step_constant_distribution():
    lp = np.log([0.6, 0.4])

    def step_fn(state, last):
        return np.tile(lp, (len(last), 1)), state

    hyps = run(step_fn, lambda s, r: s, 4, 2)
    assert hyps[0].tokens == (0, 0)
    assert hyps[0].score == pytest.approx(2 * math.log(0.6), abs=1e-15)
    # AB and BA tie; token order decides
    assert [h.tokens for h in hyps[1:3]] == [(0, 1), (1, 0)]


def test_scores_recompute_from_step_log_probs():
    dist, step_fn, reorder = toy_model(0)
    for h in run(step_fn, reorder, 5, 3):
        assert h.score == pytest.approx(sum(h.step_log_probs), abs=1e-12)
        prefix = (-1,)
        for tok, lp in zip(h.tokens, h.step_log_probs):
            assert lp == pytest.approx(dist(prefix)[tok], abs=1e-15)
            prefix += (tok,)


@pytest.mark.parametrize("seed", range(20))
def test_wider_beam_never_scores_lower(seed):
    dist, step_fn, reorder = toy_model(seed, V=4)
    best = [run(step_fn, reorder, k, 4)[0].score for k in (1, 2, 4, 8, 256)]
    assert all(b >= a - 1e-12 for a, b in zip(best, best[1:]))


def test_eos_retires_and_banned_tokens_never_appear():
    lp = np.log([0.1, 0.1, 0.1, 0.5, 0.2])

    def step_fn(state, last):
        return np.tile(lp, (len(last), 1)), state

    hyps = search(step_fn, lambda s, r: s, None, 3, 4, bos_id=2, eos_id=3, banned=(0, 2))
    assert hyps[0].tokens == (3,) and hyps[0].finished
    assert all(0 not in h.tokens and 2 not in h.tokens for h in hyps)
    assert all(h.tokens[-1] == 3 or len(h.tokens) == 4 for h in hyps)


def test_length_penalty_prefers_longer():
    lp = np.log([0.4, 0.6])

    def step_fn(state, last):
        return np.tile(lp, (len(last), 1)), state

    plain = search(step_fn, lambda s, r: s, None, 4, 3, bos_id=-1, eos_id=1, banned=())
    assert plain[0].tokens == (1,)
    norm = search(step_fn, lambda s, r: s, None, 4, 3, bos_id=-1, eos_id=1, banned=(), length_penalty=1.0)
    assert norm[0].ranking_score(1.0) >= max(h.ranking_score(1.0) for h in norm)


def test_bad_arguments():
    with pytest.raises(ValueError):
        search(lambda s, l: (None, s), lambda s, r: s, None, 0, 3)
    with pytest.raises(ValueError):
        search(lambda s, l: (None, s), lambda s, r: s, None, 2, 0)
    p = ModelParams(tiny_config(), 0)
    with pytest.raises(ValueError, match="empty source"):
        beam_search(p, [])


@pytest.mark.parametrize("mode", ["drgd", "stand"])
def test_model_beam_one_matches_greedy(mode):
    p = widen(ModelParams(tiny_config(mode), 2), 2)
    for src in ([4, 5, 6], [7, 8], [4]):
        (h,) = beam_search(p, src, beam_size=1)[:1]
        assert list(h.tokens) == greedy_decode(p, np.array([src]))[0]


def test_decode_corpus_order_and_workers():
    p = widen(ModelParams(tiny_config(), 3), 3)
    sources = [[4, 5], [6], [7, 8, 4], [5, 5, 5]]
    one = decode_corpus(p, sources, beam_size=3, workers=1)
    many = decode_corpus(p, sources, beam_size=3, workers=3)
    assert one == many
    assert one[2] == list(beam_search(p, sources[2], 3)[0].tokens)
    s1 = decode_corpus(p, sources, beam_size=3, deterministic_z=False, seed=5, workers=1)
    s2 = decode_corpus(p, sources, beam_size=3, deterministic_z=False, seed=5, workers=4)
    assert s1 == s2
