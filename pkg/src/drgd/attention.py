"""Deterministic decoder half: GRU layer 1, additive attention, GRU layer 2."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderOutput
from .layers import glorot, gru_step

if TYPE_CHECKING:
    from .model import ModelParams


@dataclass
class DecoderState:
    h_d1: Tensor
    h_d2: Tensor

    def take(self, rows) -> "DecoderState":
        return DecoderState(ad.constant(self.h_d1.value[rows]), ad.constant(self.h_d2.value[rows]))


@dataclass
class AttentionParams:
    W_d: Tensor  # k_h x k_h, applied to the layer-1 decoder state
    W_e: Tensor  # k_h x 2k_h, applied to encoder states
    b_a: Tensor  # 1 x k_h
    v: Tensor  # 1 x k_h

    @classmethod
    def init(cls, rng: np.random.Generator, k_h: int, name: str = "attn") -> "AttentionParams":
        return cls(
            ad.parameter(glorot(rng, k_h, k_h), name=f"{name}.W_d"),
            ad.parameter(glorot(rng, k_h, 2 * k_h), name=f"{name}.W_e"),
            ad.parameter(np.zeros((1, k_h)), name=f"{name}.b_a"),
            ad.parameter(glorot(rng, 1, k_h), name=f"{name}.v"),
        )

    def tensors(self) -> list[Tensor]:
        return [self.W_d, self.W_e, self.b_a, self.v]


def attention_scores(p: AttentionParams, h_d1: Tensor, enc: EncoderOutput) -> Tensor:
    """e_j = v . tanh(W_d h + W_e h_j^e + b_a), one row of T scores per example."""
    B, T = enc.mask.shape
    keys = enc.attention_keys(p.W_e)  # B x T x k_h
    query = ad.linear(h_d1, p.W_d, p.b_a)
    hidden = ad.tanh(ad.add(keys, ad.reshape(query, (B, 1, query.shape[-1]))))
    return ad.reshape(ad.linear(hidden, p.v), (B, T))


def attend(p: AttentionParams, h_d1: Tensor, enc: EncoderOutput) -> tuple[Tensor, Tensor]:
    """Attention weights over source positions and the resulting context."""
    scores = attention_scores(p, h_d1, enc)
    weights = ad.masked_softmax(scores, enc.mask)
    B, T = enc.mask.shape
    context = ad.sum_axis(ad.mul(ad.reshape(weights, (B, T, 1)), enc.states), axis=1)
    return weights, context


def decoder_step(
    params: "ModelParams", y_prev: Tensor, state: DecoderState, enc: EncoderOutput
) -> tuple[DecoderState, Tensor, Tensor]:
    """Advance both decoder layers by one target position.

    Layer 2 takes ``[y_prev ; context]`` as its GRU input.
    """
    h_d1 = gru_step(params.dec1, y_prev, state.h_d1)
    weights, context = attend(params.attn, h_d1, enc)
    h_d2 = gru_step(params.dec2, ad.concat([y_prev, context], axis=-1), state.h_d2)
    return DecoderState(h_d1, h_d2), context, weights
