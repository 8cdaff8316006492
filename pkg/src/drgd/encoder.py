"""Bidirectional GRU encoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import AffineParams, affine, embed, gru_step

if TYPE_CHECKING:
    from .model import ModelParams


@dataclass
class EncoderOutput:
    """Per-position source states (B x T x 2k_h), their mask, and h_1^d."""

    states: Tensor
    mask: np.ndarray
    init_state: Tensor
    _keys: dict = field(default_factory=dict, repr=False)

    @property
    def batch_size(self) -> int:
        return self.states.shape[0]

    def attention_keys(self, W_e: Tensor) -> Tensor:
        """``W_e h_j^e`` for every position, cached per weight tensor."""
        hit = self._keys.get(id(W_e))
        if hit is not None and hit[0] is W_e:
            return hit[1]
        keys = ad.linear(self.states, W_e)
        self._keys[id(W_e)] = (W_e, keys)
        return keys

    def take(self, rows) -> "EncoderOutput":
        """Untracked copy restricted to (possibly repeated) batch rows."""
        rows = np.asarray(rows, dtype=np.int64)
        out = EncoderOutput(
            ad.constant(self.states.value[rows]),
            self.mask[rows],
            ad.constant(self.init_state.value[rows]),
        )
        for W_e, keys in self._keys.values():
            out._keys[id(W_e)] = (W_e, ad.constant(keys.value[rows]))
        return out


def _as_batch(source_ids, mask) -> tuple[np.ndarray, np.ndarray]:
    ids = np.asarray(source_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None, :]
    if mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != ids.shape:
        raise ValueError(f"source mask shape {mask.shape} vs ids {ids.shape}")
    return ids, mask


def run_directions(params: "ModelParams", ids: np.ndarray, mask: np.ndarray) -> tuple[list[Tensor], list[Tensor]]:
    """Forward and backward state sequences, both indexed by source position.

    A masked position carries the previous state through unchanged, so
    right-padding leaves the forward states untouched and the backward pass
    starts from the zero state at the last real token.
    """
    B, T = ids.shape
    k_h = params.enc_fwd.k_h
    x = embed(params.src_embed, ids)  # B x T x k_w
    steps = [ad.select(x, t, axis=1) for t in range(T)]
    m = [mask[:, t : t + 1].astype(np.float64) for t in range(T)]

    def run(cell, order):
        h = ad.constant(np.zeros((B, k_h)))
        out: list[Tensor | None] = [None] * T
        for t in order:
            h_new = gru_step(cell, steps[t], h)
            if m[t].all():
                h = h_new
            else:
                h = ad.add(ad.mul(m[t], h_new), ad.mul(1.0 - m[t], h))
            out[t] = h
        return out

    fwd = run(params.enc_fwd, range(T))
    bwd = run(params.enc_bwd, range(T - 1, -1, -1))
    return fwd, bwd


def initial_decoder_state(p: AffineParams, states: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of the unmasked encoder rows, projected 2k_h -> k_h through tanh."""
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("initial decoder state needs at least one unmasked source position")
    summed = ad.sum_axis(ad.mul(states, mask[:, :, None].astype(np.float64)), axis=1)
    mean = ad.mul(summed, (1.0 / counts)[:, None])
    return ad.tanh(affine(p, mean))


def encode(params: "ModelParams", source_ids, mask=None) -> EncoderOutput:
    """Encode a batch (B x S ids) or a single id sequence."""
    ids, mask = _as_batch(source_ids, mask)
    limit = params.config.max_src_len
    ids, mask = ids[:, :limit], mask[:, :limit]
    if ids.shape[1] == 0 or not np.all(mask.any(axis=1)):
        raise ValueError("empty source sequence")
    fwd, bwd = run_directions(params, ids, mask)
    rows = [ad.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
    states = ad.stack(rows, axis=1)
    if not mask.all():
        states = ad.mul(states, mask[:, :, None].astype(np.float64))
    init = initial_decoder_state(params.init, states, mask)
    return EncoderOutput(states, mask, init)
