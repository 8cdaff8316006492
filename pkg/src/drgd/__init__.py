"""Attentive GRU sequence-to-sequence summarizer with a recurrent latent decoder."""

from .data import Vocab, build_vocab, make_batches, synth_corpus, tokenize
from .model import ModelConfig, ModelParams, forward_teacher_forced, step_inference

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "ModelParams",
    "Vocab",
    "build_vocab",
    "forward_teacher_forced",
    "make_batches",
    "step_inference",
    "synth_corpus",
    "tokenize",
]
