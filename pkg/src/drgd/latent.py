"""Recurrent variational latent channel.

The posterior over z_t is a diagonal Gaussian whose parameters come from
(y_{t-1}, z_{t-1}, h_{t-1}^{d2}); the prior is N(0, I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import glorot

LOG_VAR_RANGE = (-8.0, 8.0)


@dataclass
class VariationalParams:
    W_yh: Tensor  # k_h x k_w
    W_zh: Tensor  # k_h x k_z
    W_hh: Tensor  # k_h x k_h
    b_h: Tensor  # 1 x k_h
    W_mu: Tensor  # k_z x k_h
    b_mu: Tensor  # 1 x k_z
    W_sigma: Tensor  # k_z x k_h
    b_sigma: Tensor  # 1 x k_z

    FIELDS = ("W_yh", "W_zh", "W_hh", "b_h", "W_mu", "b_mu", "W_sigma", "b_sigma")

    @classmethod
    def init(cls, rng: np.random.Generator, k_w: int, k_h: int, k_z: int, name: str = "latent") -> "VariationalParams":
        vals = {
            "W_yh": glorot(rng, k_h, k_w),
            "W_zh": glorot(rng, k_h, k_z),
            "W_hh": glorot(rng, k_h, k_h),
            "b_h": np.zeros((1, k_h)),
            "W_mu": glorot(rng, k_z, k_h),
            "b_mu": np.zeros((1, k_z)),
            "W_sigma": glorot(rng, k_z, k_h),
            "b_sigma": np.zeros((1, k_z)),
        }
        return cls(**{f: ad.parameter(vals[f], name=f"{name}.{f}") for f in cls.FIELDS})

    @property
    def k_z(self) -> int:
        return self.W_mu.shape[0]

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class LatentState:
    z: Tensor
    mu: Tensor
    log_var: Tensor

    @classmethod
    def initial(cls, batch: int, k_z: int) -> "LatentState":
        zeros = ad.constant(np.zeros((batch, k_z)))
        return cls(zeros, zeros, zeros)

    def take(self, rows) -> "LatentState":
        return LatentState(*(ad.constant(t.value[rows]) for t in (self.z, self.mu, self.log_var)))


def posterior_params(p: VariationalParams, y_prev: Tensor, z_prev: Tensor, h_prev: Tensor) -> tuple[Tensor, Tensor]:
    hidden = ad.sigmoid(
        ad.add(
            ad.add(ad.linear(y_prev, p.W_yh), ad.linear(z_prev, p.W_zh)),
            ad.linear(h_prev, p.W_hh, p.b_h),
        )
    )
    mu = ad.linear(hidden, p.W_mu, p.b_mu)
    log_var = ad.clamp(ad.linear(hidden, p.W_sigma, p.b_sigma), *LOG_VAR_RANGE)
    return mu, log_var


def reparameterize(mu: Tensor, log_var: Tensor, eps) -> Tensor:
    """z = mu + exp(log_var / 2) * eps."""
    eps = ad.as_tensor(eps)
    if eps.shape != mu.shape or log_var.shape != mu.shape:
        raise ValueError(f"reparameterize: shape mismatch {mu.shape} vs {log_var.shape} vs {eps.shape}")
    return ad.add(mu, ad.mul(ad.exp(ad.scale(log_var, 0.5)), eps))


def kl_step(mu: Tensor, log_var: Tensor) -> Tensor:
    """KL(N(mu, exp(log_var)) || N(0, I)) per row, as a B x 1 column."""
    terms = ad.sub(ad.add(ad.mul(mu, mu), ad.exp(log_var)), ad.add(log_var, 1.0))
    kl = ad.scale(ad.sum_axis(terms, axis=-1), 0.5)
    return ad.reshape(kl, (mu.shape[0], 1))
