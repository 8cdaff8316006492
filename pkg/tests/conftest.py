import numpy as np
import pytest

from drgd import autodiff as ad
from drgd.data import collate
from drgd.model import ModelConfig, ModelParams


def numerical_grad(f, t: ad.Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``t.value``."""
    num = np.zeros_like(t.value)
    for idx in np.ndindex(t.value.shape):
        old = t.value[idx]
        t.value[idx] = old + step
        fp = f()
        t.value[idx] = old - step
        fm = f()
        t.value[idx] = old
        num[idx] = (fp - fm) / (2 * step)
    return num


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-5) -> float:
    """Norm-relative error; below ``floor`` it degrades to an absolute error."""
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def scalar(f):
    """Evaluate a tensor-returning thunk outside any tape."""

    def g():
        with ad.no_tape():
            return float(f().value.reshape(-1)[0])

    return g


def analytic_grads(f, tensors):
    ad.zero_grad(tensors)
    tape = ad.Tape()
    with tape:
        loss = f()
    tape.backward(loss)
    return [t.grad.copy() for t in tensors]


def widen(params: ModelParams, seed: int, scale: float = 1.0) -> ModelParams:
    """Redraw every weight from U(-scale, scale) so all gradient paths carry signal."""
    rng = np.random.default_rng(seed)
    for _, t in params.named_tensors():
        t.value = rng.uniform(-scale, scale, t.value.shape)
    return params


def tiny_config(mode="drgd", **kw) -> ModelConfig:
    base = dict(src_vocab_size=9, tgt_vocab_size=7, k_w=3, k_h=4, k_z=3, max_src_len=20, max_tgt_len=6, mode=mode)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def tiny_batch():
    return collate([([4, 5, 6, 7], [4, 5, 3]), ([8, 5], [6, 3])], [0, 1])
