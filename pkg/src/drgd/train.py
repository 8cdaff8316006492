"""Mini-batch training with Adadelta, plus the StanD-vs-DRGD ablation."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .beam import decode_corpus
from .checkpoint import save_checkpoint
from .data import ParallelCorpus, Vocab, encode_pair, make_batches
from .model import ModelConfig, ModelParams, forward_teacher_forced
from .rouge import score_tokens

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch\ttrain_nll\ttrain_kl\tvalid_nll\tseconds"


@dataclass
class AdadeltaState:
    sq_grad: list[np.ndarray]
    sq_delta: list[np.ndarray]
    rho: float = 0.95
    eps: float = 1e-6
    skipped: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor], rho: float = 0.95, eps: float = 1e-6) -> "AdadeltaState":
        return cls(
            [np.zeros_like(p.value) for p in params],
            [np.zeros_like(p.value) for p in params],
            rho,
            eps,
        )


def adadelta_update(state: AdadeltaState, params: Sequence[Tensor], grads: Sequence[np.ndarray]) -> bool:
    """Apply one Adadelta step in place. Returns False (and skips) on non-finite grads."""
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        log.warning("non-finite gradient; batch skipped (%d so far)", state.skipped)
        return False
    rho, eps = state.rho, state.eps
    for i, (p, g) in enumerate(zip(params, grads)):
        eg2 = state.sq_grad[i]
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        dx = -np.sqrt(state.sq_delta[i] + eps) / np.sqrt(eg2 + eps) * g
        edx2 = state.sq_delta[i]
        edx2 *= rho
        edx2 += (1.0 - rho) * dx * dx
        p.value = p.value + dx
    return True


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_gradients(grads: Sequence[np.ndarray], clip_norm: float) -> list[np.ndarray]:
    """Rescale so the global L2 norm is at most ``clip_norm``."""
    if clip_norm <= 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    norm = global_norm(grads)
    if norm <= clip_norm:
        return list(grads)
    s = clip_norm / norm
    return [g * s for g in grads]


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 10
    clip_norm: float = 5.0
    seed: int = 0
    kl_warmup_steps: int = 0
    patience: int = 5  # 0 disables early stopping
    valid_every: int = 1
    rho: float = 0.95
    eps: float = 1e-6
    learning: bool = True  # False zeroes every gradient before the update
    record_time: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.valid_every < 1:
            raise ValueError("valid_every must be >= 1")


@dataclass
class EpochMetrics:
    epoch: int
    train_nll: float
    train_kl: float
    valid_nll: float
    seconds: float

    def line(self, record_time: bool = True) -> str:
        secs = f"{self.seconds:.3f}" if record_time else "-"
        return f"{self.epoch}\t{self.train_nll:.6f}\t{self.train_kl:.6f}\t{self.valid_nll:.6f}\t{secs}"


@dataclass
class TrainReport:
    epochs: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_nll: float = float("inf")
    skipped_batches: int = 0
    steps: int = 0
    best_params: ModelParams | None = None

    def metrics_log(self, record_time: bool = True) -> str:
        return "\n".join([METRICS_HEADER] + [m.line(record_time) for m in self.epochs]) + "\n"


def _check_vocab(config: ModelConfig, src_vocab: Vocab, tgt_vocab: Vocab) -> None:
    if len(src_vocab) != config.src_vocab_size or len(tgt_vocab) != config.tgt_vocab_size:
        raise ValueError(
            f"vocabulary sizes (source {len(src_vocab)}, target {len(tgt_vocab)}) do not match "
            f"model config (source {config.src_vocab_size}, target {config.tgt_vocab_size})"
        )


def evaluate_nll(params: ModelParams, corpus: ParallelCorpus, src_vocab: Vocab, tgt_vocab: Vocab, batch_size: int = 256) -> float:
    """Per-token NLL with z = mu."""
    c = params.config
    total, tokens = 0.0, 0
    with ad.no_tape():
        for batch in make_batches(corpus, src_vocab, tgt_vocab, batch_size, c.max_src_len, c.max_tgt_len, seed=None):
            res = forward_teacher_forced(params, batch)
            total += float(res.nll.value[0, 0]) * batch.size
            tokens += res.n_tokens
    return total / max(tokens, 1)


def train_step(params: ModelParams, batch, opt: AdadeltaState, tc: TrainConfig, rng: np.random.Generator, kl_weight: float = 1.0):
    """Forward, backward, clip, update. Returns the forward result."""
    c = params.config
    noise = None
    if c.mode == "drgd":
        noise = rng.standard_normal((batch.size, batch.tgt_in.shape[1], c.k_z))
    tape = ad.Tape()
    with tape:
        res = forward_teacher_forced(params, batch, noise, kl_weight)
    tensors = params.tensors()
    params.zero_grad()
    tape.backward(res.loss)
    grads = [t.grad for t in tensors]
    if not tc.learning:
        grads = [np.zeros_like(g) for g in grads]
    if np.all([np.all(np.isfinite(g)) for g in grads]):
        grads = clip_gradients(grads, tc.clip_norm)
    adadelta_update(opt, tensors, grads)
    tape.clear()
    return res


def train(
    params: ModelParams,
    corpus: ParallelCorpus,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    tc: TrainConfig,
    valid: ParallelCorpus | None = None,
    run_dir: str | os.PathLike | None = None,
) -> TrainReport:
    """Train in place. ``valid`` defaults to the training corpus.

    With ``run_dir``, writes ``metrics.tsv`` and ``checkpoints/{best,last}.ckpt``.
    """
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    c = params.config
    _check_vocab(c, src_vocab, tgt_vocab)
    valid = corpus if valid is None else valid

    metrics_path = ckpt_dir = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        ckpt_dir = run_dir / "checkpoints"
        try:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create checkpoint directory {ckpt_dir}: {e}") from None
        if not os.access(ckpt_dir, os.W_OK):
            raise OSError(f"checkpoint directory {ckpt_dir} is not writable")
        metrics_path = run_dir / "metrics.tsv"
        metrics_path.write_text(METRICS_HEADER + "\n")

    seeds = np.random.SeedSequence(tc.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    noise_rng = np.random.default_rng(seeds[1])
    opt = AdadeltaState.for_params(params.tensors(), tc.rho, tc.eps)
    report = TrainReport()
    since_best = 0

    for epoch in range(1, tc.epochs + 1):
        start = time.perf_counter()
        batches = make_batches(
            corpus, src_vocab, tgt_vocab, tc.batch_size, c.max_src_len, c.max_tgt_len,
            seed=int(shuffle_rng.integers(2**31)),
        )
        nll_sum = kl_sum = 0.0
        tokens = 0
        for batch in batches:
            kl_weight = 1.0
            if tc.kl_warmup_steps > 0:
                kl_weight = min(1.0, (report.steps + 1) / tc.kl_warmup_steps)
            res = train_step(params, batch, opt, tc, noise_rng, kl_weight)
            report.steps += 1
            nll_sum += float(res.nll.value[0, 0]) * batch.size
            kl_sum += float(res.kl.value[0, 0]) * batch.size
            tokens += res.n_tokens
        valid_nll = float("nan")
        if epoch % tc.valid_every == 0 or epoch == tc.epochs:
            valid_nll = evaluate_nll(params, valid, src_vocab, tgt_vocab, tc.batch_size)
        m = EpochMetrics(epoch, nll_sum / tokens, kl_sum / tokens, valid_nll, time.perf_counter() - start)
        report.epochs.append(m)
        log.info(m.line())
        if metrics_path is not None:
            with open(metrics_path, "a") as f:
                f.write(m.line(tc.record_time) + "\n")
        if valid_nll < report.best_valid_nll:
            report.best_valid_nll, report.best_epoch = valid_nll, epoch
            report.best_params = params.copy()
            since_best = 0
            if ckpt_dir is not None:
                save_checkpoint(params, ckpt_dir / "best.ckpt")
        elif not np.isnan(valid_nll):
            since_best += 1
            if tc.patience and since_best >= tc.patience:
                log.info("early stop at epoch %d (best %d)", epoch, report.best_epoch)
                break

    report.skipped_batches = opt.skipped
    if ckpt_dir is not None:
        save_checkpoint(params, ckpt_dir / "last.ckpt")
    return report


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

SYSTEMS = (("StanD", "stand"), ("DRGD", "drgd"))


@dataclass
class AblationRow:
    system: str
    rouge_1: float
    rouge_2: float
    rouge_l: float
    valid_nll: float


@dataclass
class AblationReport:
    rows: list[AblationRow]
    decodes: dict[str, list[list[str]]]

    def table(self) -> str:
        lines = [f"{'System':<8} {'R-1':>7} {'R-2':>7} {'R-L':>7}"]
        for r in self.rows:
            lines.append(f"{r.system:<8} {100 * r.rouge_1:7.2f} {100 * r.rouge_2:7.2f} {100 * r.rouge_l:7.2f}")
        return "\n".join(lines)


def ablate(
    train_corpus: ParallelCorpus,
    valid_corpus: ParallelCorpus,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    model_config: ModelConfig,
    tc: TrainConfig,
    beam_size: int = 10,
    run_dir: str | os.PathLike | None = None,
    workers: int = 1,
) -> AblationReport:
    """Train both decoders with the same seed and budget, then ROUGE their decodes."""
    rows, decodes = [], {}
    for label, mode in SYSTEMS:
        cfg = model_config.replace(mode=mode)
        params = ModelParams(cfg, tc.seed)
        sub = None if run_dir is None else Path(run_dir) / mode
        report = train(params, train_corpus, src_vocab, tgt_vocab, tc, valid_corpus, sub)
        best = report.best_params or params
        sources = [encode_pair(s, t, src_vocab, tgt_vocab, cfg.max_src_len, cfg.max_tgt_len)[0]
                   for s, t in zip(valid_corpus.sources, valid_corpus.targets)]
        ids = decode_corpus(best, sources, beam_size=beam_size, workers=workers)
        hyps = [tgt_vocab.decode(x) for x in ids]
        scores = score_tokens(hyps, [[t] for t in valid_corpus.targets]).corpus
        rows.append(AblationRow(label, scores["rouge-1"].fscore, scores["rouge-2"].fscore,
                                scores["rouge-l"].fscore, report.best_valid_nll))
        decodes[label] = hyps
    return AblationReport(rows, decodes)
