"""Parameterized building blocks: embedding table, affine map, GRU cell.

Weight matrices are stored as (out, in). Vectors are rows, so a batch of
``B`` inputs is a ``B x in`` matrix and every layer maps rows independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EMBED_INIT_RANGE = 0.08


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class EmbeddingTable:
    weight: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int, dim: int, name: str) -> "EmbeddingTable":
        w = rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, size=(vocab_size, dim))
        return cls(ad.parameter(w, name=f"{name}.weight"))

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.weight]


def embed(table: EmbeddingTable, ids) -> Tensor:
    """Rows of the table for ``ids``; output shape ``ids.shape + (k_w,)``."""
    return ad.gather_rows(table.weight, ids)


@dataclass
class AffineParams:
    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int, n_out: int, name: str) -> "AffineParams":
        return cls(
            ad.parameter(glorot(rng, n_out, n_in), name=f"{name}.W"),
            ad.parameter(np.zeros((1, n_out)), name=f"{name}.b"),
        )

    def tensors(self) -> list[Tensor]:
        return [self.W, self.b]


def affine(p: AffineParams, x: Tensor) -> Tensor:
    return ad.linear(x, p.W, p.b)


@dataclass
class GRUParams:
    W_xr: Tensor
    W_xz: Tensor
    W_xh: Tensor
    W_hr: Tensor
    W_hz: Tensor
    W_hh: Tensor
    b_r: Tensor
    b_z: Tensor
    b_h: Tensor

    FIELDS = ("W_xr", "W_xz", "W_xh", "W_hr", "W_hz", "W_hh", "b_r", "b_z", "b_h")

    @classmethod
    def init(cls, rng: np.random.Generator, k_in: int, k_h: int, name: str) -> "GRUParams":
        vals = {}
        for f in ("W_xr", "W_xz", "W_xh"):
            vals[f] = glorot(rng, k_h, k_in)
        for f in ("W_hr", "W_hz", "W_hh"):
            vals[f] = glorot(rng, k_h, k_h)
        for f in ("b_r", "b_z", "b_h"):
            vals[f] = np.zeros((1, k_h))
        return cls(**{f: ad.parameter(vals[f], name=f"{name}.{f}") for f in cls.FIELDS})

    @property
    def k_in(self) -> int:
        return self.W_xr.shape[1]

    @property
    def k_h(self) -> int:
        return self.W_xr.shape[0]

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f) for f in self.FIELDS]


def gru_step(p: GRUParams, x: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU update for a batch of rows.

    r = sigmoid(W_xr x + W_hr h + b_r)
    z = sigmoid(W_xz x + W_hz h + b_z)
    g = tanh(W_xh x + W_hh (r * h) + b_h)
    h' = z * h + (1 - z) * g
    """
    if x.shape[-1] != p.k_in or h_prev.shape[-1] != p.k_h:
        raise ValueError(
            f"gru_step: shape mismatch x {x.shape} / h {h_prev.shape} "
            f"vs cell (k_in={p.k_in}, k_h={p.k_h})"
        )
    r = ad.sigmoid(ad.add(ad.linear(x, p.W_xr), ad.linear(h_prev, p.W_hr, p.b_r)))
    z = ad.sigmoid(ad.add(ad.linear(x, p.W_xz), ad.linear(h_prev, p.W_hz, p.b_z)))
    g = ad.tanh(ad.add(ad.linear(x, p.W_xh), ad.linear(ad.mul(r, h_prev), p.W_hh, p.b_h)))
    return ad.add(ad.mul(z, h_prev), ad.mul(ad.sub(1.0, z), g))
