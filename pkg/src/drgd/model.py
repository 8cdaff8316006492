"""Model assembly: encoder, attentive decoder, latent channel, output layer.

``mode="drgd"`` runs the full latent-augmented decoder; ``mode="stand"`` drops
the latent path and is the deterministic baseline.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import TYPE_CHECKING

import numpy as np

from . import autodiff as ad
from .attention import AttentionParams, DecoderState, decoder_step
from .autodiff import Tensor
from .encoder import EncoderOutput, encode
from .latent import LatentState, VariationalParams, kl_step, posterior_params, reparameterize
from .layers import AffineParams, EmbeddingTable, GRUParams, embed, glorot

if TYPE_CHECKING:
    from .data import Batch

MODES = ("drgd", "stand")


@dataclass(frozen=True)
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    k_w: int = 300
    k_h: int = 500
    k_z: int = 500
    max_src_len: int = 100
    max_tgt_len: int = 50
    mode: str = "drgd"
    shared_vocab: bool = False

    def __post_init__(self):
        for f in ("src_vocab_size", "tgt_vocab_size", "k_w", "k_h", "k_z", "max_src_len"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1, got {getattr(self, f)}")
        if self.max_tgt_len < 2:
            raise ValueError(f"max_tgt_len must be >= 2, got {self.max_tgt_len}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.shared_vocab and self.src_vocab_size != self.tgt_vocab_size:
            raise ValueError("shared_vocab needs equal source and target vocabulary sizes")

    @property
    def k_y(self) -> int:
        return self.tgt_vocab_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "ModelConfig":
        d = self.to_dict()
        d.update(changes)
        return ModelConfig(**d)


@dataclass
class CombinerParams:
    """h^{d_y} = tanh(W_z z + W_h h^{d2} + b); ``W_z`` is None in StanD mode."""

    W_z: Tensor | None
    W_h: Tensor
    b: Tensor

    def tensors(self) -> list[Tensor]:
        return [t for t in (self.W_z, self.W_h, self.b) if t is not None]


class ModelParams:
    """Every learnable weight, addressable by a stable dotted name."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | int | None = 0):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        c = config
        self.config = c
        self.src_embed = EmbeddingTable.init(rng, c.src_vocab_size, c.k_w, "src_embed")
        if c.shared_vocab:
            self.tgt_embed = self.src_embed
        else:
            self.tgt_embed = EmbeddingTable.init(rng, c.tgt_vocab_size, c.k_w, "tgt_embed")
        self.enc_fwd = GRUParams.init(rng, c.k_w, c.k_h, "enc_fwd")
        self.enc_bwd = GRUParams.init(rng, c.k_w, c.k_h, "enc_bwd")
        self.init = AffineParams.init(rng, 2 * c.k_h, c.k_h, "init")
        self.dec1 = GRUParams.init(rng, c.k_w, c.k_h, "dec1")
        self.dec2 = GRUParams.init(rng, c.k_w + 2 * c.k_h, c.k_h, "dec2")
        self.attn = AttentionParams.init(rng, c.k_h, "attn")
        if c.mode == "drgd":
            self.latent = VariationalParams.init(rng, c.k_w, c.k_h, c.k_z, "latent")
            W_z = ad.parameter(glorot(rng, c.k_h, c.k_z), name="combine.W_z")
        else:
            self.latent = None
            W_z = None
        self.combine = CombinerParams(
            W_z,
            ad.parameter(glorot(rng, c.k_h, c.k_h), name="combine.W_h"),
            ad.parameter(np.zeros((1, c.k_h)), name="combine.b"),
        )
        self.out = AffineParams.init(rng, c.k_h, c.tgt_vocab_size, "out")

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        groups = [self.src_embed]
        if not self.config.shared_vocab:
            groups.append(self.tgt_embed)
        groups += [self.enc_fwd, self.enc_bwd, self.init, self.dec1, self.dec2, self.attn]
        if self.latent is not None:
            groups.append(self.latent)
        groups += [self.combine, self.out]
        return [(t.name, t) for g in groups for t in g.tensors()]

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def census(self) -> dict[str, tuple[int, ...]]:
        return {name: t.shape for name, t in self.named_tensors()}

    def num_parameters(self) -> int:
        return sum(t.value.size for t in self.tensors())

    def zero_grad(self) -> None:
        ad.zero_grad(self.tensors())

    def copy(self) -> "ModelParams":
        fresh = ModelParams(self.config, 0)
        for (_, dst), (_, src) in zip(fresh.named_tensors(), self.named_tensors()):
            dst.value = src.value.copy()
        return fresh


@dataclass
class StepOutput:
    log_probs: Tensor  # B x k_y
    state: DecoderState
    latent: LatentState
    weights: Tensor  # B x T^e


@dataclass
class ForwardResult:
    loss: Tensor
    nll: Tensor
    kl: Tensor
    steps: list[StepOutput]
    n_tokens: int


def output_distribution(params: ModelParams, h_d2: Tensor, z: Tensor | None, mode: str | None = None) -> Tensor:
    """Log-probabilities over the target vocabulary for one step."""
    mode = mode or params.config.mode
    c = params.combine
    pre = ad.linear(h_d2, c.W_h, c.b)
    if mode == "drgd":
        pre = ad.add(ad.linear(z, c.W_z), pre)
    h_dy = ad.tanh(pre)
    return ad.log_softmax(ad.linear(h_dy, params.out.W, params.out.b))


def initial_states(params: ModelParams, enc: EncoderOutput) -> tuple[DecoderState, LatentState]:
    h0 = enc.init_state
    return DecoderState(h0, h0), LatentState.initial(enc.batch_size, params.config.k_z)


def _step(params: ModelParams, y_prev: Tensor, state: DecoderState, lat: LatentState, enc: EncoderOutput, eps) -> StepOutput:
    new_state, _, weights = decoder_step(params, y_prev, state, enc)
    if params.config.mode == "drgd":
        mu, log_var = posterior_params(params.latent, y_prev, lat.z, state.h_d2)
        z = mu if eps is None else reparameterize(mu, log_var, eps)
        new_lat = LatentState(z, mu, log_var)
    else:
        new_lat = lat
    log_probs = output_distribution(params, new_state.h_d2, new_lat.z)
    return StepOutput(log_probs, new_state, new_lat, weights)


def step_inference(
    params: ModelParams,
    y_prev_ids,
    state: DecoderState,
    lat: LatentState,
    enc: EncoderOutput,
    deterministic_z: bool = True,
    eps=None,
    rng: np.random.Generator | None = None,
) -> StepOutput:
    """Advance one decode step from previously emitted token ids.

    With ``deterministic_z`` the latent sample is its mean. Otherwise noise
    comes from ``eps`` if given, else from ``rng``.
    """
    ids = np.atleast_1d(np.asarray(y_prev_ids, dtype=np.int64))
    y_prev = embed(params.tgt_embed, ids)
    if deterministic_z or params.config.mode == "stand":
        eps = None
    elif eps is None:
        if rng is None:
            raise ValueError("sampling z needs eps or a random generator")
        eps = rng.standard_normal((ids.shape[0], params.config.k_z))
    return _step(params, y_prev, state, lat, enc, eps)


def forward_teacher_forced(params: ModelParams, batch: "Batch", noise=None, kl_weight: float = 1.0) -> ForwardResult:
    """Teacher-forced objective summed over time, averaged over the batch.

    ``noise`` is a (B, T, k_z) array of standard-normal draws, or None for the
    deterministic z = mu path.
    """
    B, T = batch.tgt_in.shape
    if B == 0:
        raise ValueError("empty batch")
    if T == 0 or not np.all(batch.tgt_mask.any(axis=1)):
        raise ValueError("target of length 0")
    drgd = params.config.mode == "drgd"
    if noise is not None and drgd:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != (B, T, params.config.k_z):
            raise ValueError(f"noise shape {noise.shape} vs expected {(B, T, params.config.k_z)}")

    enc = encode(params, batch.src, batch.src_mask)
    state, lat = initial_states(params, enc)
    y_in = embed(params.tgt_embed, batch.tgt_in)
    mask = batch.tgt_mask.astype(np.float64)

    steps, gold_logp, kls = [], [], []
    for t in range(T):
        eps = None if (noise is None or not drgd) else noise[:, t, :]
        out = _step(params, ad.select(y_in, t, axis=1), state, lat, enc, eps)
        steps.append(out)
        gold_logp.append(ad.pick(out.log_probs, batch.tgt_out[:, t]))
        if drgd:
            kls.append(kl_step(out.latent.mu, out.latent.log_var))
        state, lat = out.state, out.latent

    inv_n = 1.0 / B
    nll = ad.scale(ad.total(ad.mul(ad.concat(gold_logp, axis=1), mask)), -inv_n)
    if drgd:
        kl = ad.scale(ad.total(ad.mul(ad.concat(kls, axis=1), mask)), inv_n)
    else:
        kl = ad.constant(np.zeros((1, 1)))
    loss = ad.add(nll, kl if kl_weight == 1.0 else ad.scale(kl, kl_weight))
    return ForwardResult(loss, nll, kl, steps, int(batch.tgt_mask.sum()))
