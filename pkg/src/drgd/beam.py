"""Beam-search and greedy decoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import autodiff as ad
from .data import BOS_ID, EOS_ID, PAD_ID
from .encoder import encode
from .model import ModelParams, initial_states, step_inference

# step_fn(batched_state, last_tokens) -> (log_probs: n x V array, new_batched_state)
StepFn = Callable[[Any, np.ndarray], tuple[np.ndarray, Any]]
# reorder(batched_state, rows) -> batched_state restricted to rows
ReorderFn = Callable[[Any, Sequence[int]], Any]


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    score: float
    step_log_probs: tuple[float, ...]
    finished: bool = False

    def ranking_score(self, length_penalty: float = 0.0) -> float:
        if length_penalty == 0.0:
            return self.score
        return self.score / max(len(self.tokens), 1) ** length_penalty


def search(
    step_fn: StepFn,
    reorder: ReorderFn,
    init_state: Any,
    beam_size: int,
    max_len: int,
    bos_id: int = BOS_ID,
    eos_id: int | None = EOS_ID,
    banned: Sequence[int] = (PAD_ID, BOS_ID),
    length_penalty: float = 0.0,
) -> list[Hypothesis]:
    """Generic beam search over an opaque batched decoder state.

    Every live hypothesis is expanded over the whole vocabulary and the top
    ``beam_size`` candidates survive; those ending in ``eos_id`` (or reaching
    ``max_len``) retire into the finished pool. Returns the pool sorted by
    score, ties broken by token-id order.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    live = [Hypothesis((), 0.0, ())]
    state = init_state
    last = np.array([bos_id], dtype=np.int64)
    finished: list[Hypothesis] = []
    for step in range(max_len):
        log_probs, state = step_fn(state, last)
        log_probs = np.array(log_probs, dtype=np.float64)
        if banned:
            log_probs[:, list(banned)] = -np.inf
        totals = np.array([h.score for h in live])[:, None] + log_probs
        flat = totals.ravel()
        k = min(beam_size, int(np.isfinite(flat).sum()))
        if k == 0:
            break
        # Everything tied with the k-th best is kept so the tie-break is exact.
        kth = np.partition(flat, flat.size - k)[flat.size - k]
        cand_idx = np.flatnonzero(flat >= kth)
        V = log_probs.shape[1]
        cands = []
        for c in cand_idx:
            i, v = divmod(int(c), V)
            cands.append((float(flat[c]), live[i].tokens + (v,), i, v))
        cands.sort(key=lambda x: (-x[0], x[1]))
        next_live, rows = [], []
        for score, toks, i, v in cands[:k]:
            lp = float(log_probs[i, v])
            done = (eos_id is not None and v == eos_id) or step == max_len - 1
            hyp = Hypothesis(toks, score, live[i].step_log_probs + (lp,), done)
            if done:
                finished.append(hyp)
            else:
                next_live.append(hyp)
                rows.append(i)
        if not next_live:
            break
        live = next_live
        state = reorder(state, rows)
        last = np.array([h.tokens[-1] for h in live], dtype=np.int64)
    finished.sort(key=lambda h: (-h.ranking_score(length_penalty), h.tokens))
    return finished


def beam_search(
    params: ModelParams,
    source_ids,
    beam_size: int = 10,
    max_len: int | None = None,
    deterministic_z: bool = True,
    rng: np.random.Generator | None = None,
    length_penalty: float = 0.0,
) -> list[Hypothesis]:
    """Ranked hypotheses for one source sequence."""
    source_ids = np.asarray(source_ids, dtype=np.int64)
    if source_ids.size == 0:
        raise ValueError("empty source sequence")
    if max_len is None:
        max_len = params.config.max_tgt_len
    if not deterministic_z and rng is None:
        rng = np.random.default_rng(0)
    with ad.no_tape():
        enc = encode(params, source_ids)
        dec, lat = initial_states(params, enc)

        def step_fn(st, last):
            d, l, e = st
            out = step_inference(params, last, d, l, e, deterministic_z=deterministic_z, rng=rng)
            return out.log_probs.value, (out.state, out.latent, e)

        def reorder(st, rows):
            d, l, e = st
            return d.take(rows), l.take(rows), e.take(rows)

        return search(step_fn, reorder, (dec, lat, enc), beam_size, max_len, length_penalty=length_penalty)


def greedy_decode(params: ModelParams, batch_src, batch_mask=None, max_len: int | None = None) -> list[list[int]]:
    """Argmax decoding for a whole batch with z = mu; stops each row at EOS."""
    if max_len is None:
        max_len = params.config.max_tgt_len
    with ad.no_tape():
        enc = encode(params, batch_src, batch_mask)
        dec, lat = initial_states(params, enc)
        B = enc.batch_size
        last = np.full(B, BOS_ID, dtype=np.int64)
        outputs: list[list[int]] = [[] for _ in range(B)]
        done = np.zeros(B, dtype=bool)
        for _ in range(max_len):
            out = step_inference(params, last, dec, lat, enc)
            lp = out.log_probs.value.copy()
            lp[:, [PAD_ID, BOS_ID]] = -np.inf
            last = lp.argmax(axis=1)
            for b in np.flatnonzero(~done):
                outputs[b].append(int(last[b]))
            done |= last == EOS_ID
            if done.all():
                break
            dec, lat = out.state, out.latent
    return outputs


def decode_corpus(
    params: ModelParams,
    sources: Sequence[Sequence[int]],
    beam_size: int = 10,
    max_len: int | None = None,
    deterministic_z: bool = True,
    seed: int = 0,
    workers: int = 1,
    length_penalty: float = 0.0,
) -> list[list[int]]:
    """Best hypothesis per source, in input order.

    Sampling runs seed each example from ``(seed, index)``, so results do not
    depend on ``workers``.
    """

    def one(i: int) -> list[int]:
        rng = None if deterministic_z else np.random.default_rng([seed, i])
        hyps = beam_search(params, sources[i], beam_size, max_len, deterministic_z, rng, length_penalty)
        return list(hyps[0].tokens) if hyps else []

    if workers <= 1:
        return [one(i) for i in range(len(sources))]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(sources))))
