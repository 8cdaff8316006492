"""Corpus ingestion, vocabularies, batching, and a synthetic headline corpus."""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

_DIGIT = re.compile(r"\d")


def tokenize(text: str | bytes, mode: str = "word") -> list[str]:
    """Split text into tokens.

    ``word`` mode lowercases, splits on whitespace, and masks every digit as
    ``#``. ``char`` mode yields one token per non-whitespace character.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ValueError(f"invalid UTF-8 at byte offset {e.start}") from None
    if mode == "word":
        return [_DIGIT.sub("#", tok) for tok in text.lower().split()]
    if mode == "char":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown tokenizer mode {mode!r}")


class Vocab:
    """Token <-> id map; ids 0..3 are PAD, UNK, BOS, EOS."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        """Ids back to tokens; with ``strip``, stop at EOS and drop PAD/BOS."""
        out = []
        for i in ids:
            i = int(i)
            if strip:
                if i == EOS_ID:
                    break
                if i in (PAD_ID, BOS_ID):
                    continue
            out.append(self.itos[i])
        return out

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for tok in self.itos:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f]
        if tuple(lines[:4]) != RESERVED:
            raise ValueError(f"{path}: first four lines must be the reserved tokens {RESERVED}")
        return cls(lines[4:])


def build_vocab(sequences: Iterable[Sequence[str]], max_size: int, min_count: int = 1) -> Vocab:
    """Keep the most frequent tokens (ties broken lexicographically)."""
    if max_size < 5:
        raise ValueError(f"max_size must be at least 5 (4 reserved ids + 1), got {max_size}")
    counts: Counter[str] = Counter()
    n = 0
    for seq in sequences:
        counts.update(seq)
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept[: max_size - len(RESERVED)])


@dataclass
class ParallelCorpus:
    sources: list[list[str]]
    targets: list[list[str]]
    meta: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.sources) != len(self.targets):
            raise ValueError(f"corpus has {len(self.sources)} sources but {len(self.targets)} targets")
        for i, (s, t) in enumerate(zip(self.sources, self.targets)):
            if not s or not t:
                raise ValueError(f"example {i} has an empty side")

    def __len__(self) -> int:
        return len(self.sources)

    def subset(self, idx: Iterable[int]) -> "ParallelCorpus":
        idx = list(idx)
        meta = [self.meta[i] for i in idx] if self.meta else []
        return ParallelCorpus([self.sources[i] for i in idx], [self.targets[i] for i in idx], meta)

    def split(self, n_valid: int) -> tuple["ParallelCorpus", "ParallelCorpus"]:
        n = len(self)
        return self.subset(range(n - n_valid)), self.subset(range(n - n_valid, n))


def read_lines(path: str | os.PathLike) -> list[str]:
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ValueError(f"{path}: invalid UTF-8 at byte offset {e.start}") from None
    return text.splitlines()


def read_corpus(src_path, tgt_path, mode: str = "word") -> ParallelCorpus:
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    if len(src) != len(tgt):
        raise ValueError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    pairs = [(tokenize(s, mode), tokenize(t, mode)) for s, t in zip(src, tgt)]
    pairs = [(s, t) for s, t in pairs if s and t]
    return ParallelCorpus([s for s, _ in pairs], [t for _, t in pairs])


def write_corpus(corpus: ParallelCorpus, src_path, tgt_path) -> None:
    for path, side in ((src_path, corpus.sources), (tgt_path, corpus.targets)):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for toks in side:
                f.write(" ".join(toks) + "\n")


@dataclass
class Batch:
    src: np.ndarray  # B x S ids
    src_mask: np.ndarray  # B x S bool
    tgt_in: np.ndarray  # B x T ids, BOS first
    tgt_out: np.ndarray  # B x T ids, EOS last
    tgt_mask: np.ndarray  # B x T bool
    index: np.ndarray  # corpus positions of the rows

    @property
    def size(self) -> int:
        return self.src.shape[0]


def _pad(rows: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = True
    return ids, mask


def encode_pair(src: Sequence[str], tgt: Sequence[str], src_vocab: Vocab, tgt_vocab: Vocab, max_src_len: int, max_tgt_len: int):
    """Source ids truncated to ``max_src_len``; target ids keep room for EOS."""
    s = src_vocab.encode(src[:max_src_len])
    t = tgt_vocab.encode(tgt[: max_tgt_len - 1]) + [EOS_ID]
    return s, t


def collate(pairs: list[tuple[list[int], list[int]]], index: Sequence[int]) -> Batch:
    src, src_mask = _pad([s for s, _ in pairs])
    tgt_out, tgt_mask = _pad([t for _, t in pairs])
    tgt_in = np.full_like(tgt_out, PAD_ID)
    tgt_in[:, 0] = BOS_ID
    tgt_in[:, 1:] = tgt_out[:, :-1]
    tgt_in[~tgt_mask] = PAD_ID
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask, np.asarray(index, dtype=np.int64))


def make_batches(
    corpus: ParallelCorpus,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    batch_size: int,
    max_src_len: int = 100,
    max_tgt_len: int = 50,
    seed: int | None = 0,
    window: int = 20,
) -> list[Batch]:
    """Shuffle, then sort by source length inside windows of ``window`` batches.

    ``seed=None`` keeps corpus order (no shuffling, no sorting).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if max_tgt_len < 2:
        raise ValueError("max_tgt_len must leave room for one token plus EOS")
    encoded = [encode_pair(s, t, src_vocab, tgt_vocab, max_src_len, max_tgt_len) for s, t in zip(corpus.sources, corpus.targets)]
    order = np.arange(len(encoded))
    if seed is not None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(encoded))
        span = batch_size * window
        chunks = [order[i : i + span] for i in range(0, len(order), span)]
        order = np.concatenate([sorted(c, key=lambda k: (len(encoded[k][0]), k)) for c in chunks]) if chunks else order
        batch_starts = list(range(0, len(order), batch_size))
        rng.shuffle(batch_starts)
    else:
        batch_starts = list(range(0, len(order), batch_size))
    batches = []
    for start in batch_starts:
        idx = [int(k) for k in order[start : start + batch_size]]
        batches.append(collate([encoded[k] for k in idx], idx))
    return batches


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

ENTITIES = ["apple", "google", "microsoft", "amazon", "samsung", "intel", "nasa", "toyota"]
ACTIONS = ["buys", "sues", "hires", "launches", "recalls", "unveils", "sells", "tests"]
OBJECTS = ["startup", "phone", "robot", "satellite", "chip", "tablet", "car", "drone"]
ADJECTIVES = ["new", "cheap", "faster", "foldable", "smarter", "bigger"]
EVENTS = ["delayed", "banned", "approved", "hacked", "discontinued", "leaked"]

WHEN = ["on monday", "on tuesday", "late friday", "this week", "earlier today", "on sunday"]
SOURCES = ["officials said", "reports say", "according to analysts", "the company confirmed", "sources said"]
DISTRACTORS = [
    "shares closed slightly higher",
    "the move surprised investors",
    "markets were mixed",
    "a spokesman declined to comment",
    "the weather stayed mild",
    "trading volume was light",
]

TEMPLATES = ("who_action_what", "what", "what_happened")
_TEMPLATE_PATTERNS = {
    "who_action_what": (ENTITIES, ACTIONS, OBJECTS),
    "what": (ADJECTIVES, OBJECTS),
    "what_happened": (OBJECTS, EVENTS),
}


def synth_corpus(n_pairs: int, seed: int = 0, templates: Sequence[str] = TEMPLATES) -> ParallelCorpus:
    """Headline-style pairs whose summaries follow fixed latent templates.

    Summaries are "ENTITY ACTION OBJECT", "ADJECTIVE OBJECT", or
    "OBJECT EVENT"; sources restate the same content words inside longer
    sentences padded with time phrases, attributions, and distractor clauses.
    ``meta`` records each pair's template name.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    for t in templates:
        if t not in _TEMPLATE_PATTERNS:
            raise ValueError(f"unknown template {t!r}")
    rng = np.random.default_rng(seed)

    def pick(words):
        return words[int(rng.integers(len(words)))]

    sources, targets, meta = [], [], []
    for _ in range(n_pairs):
        kind = templates[int(rng.integers(len(templates)))]
        when, said, noise = pick(WHEN), pick(SOURCES), pick(DISTRACTORS)
        if kind == "who_action_what":
            who, act, obj = pick(ENTITIES), pick(ACTIONS), pick(OBJECTS)
            summary = [who, act, obj]
            body = f"{when} {who} {act} a {obj} , {said} , and {noise}"
        elif kind == "what":
            adj, obj = pick(ADJECTIVES), pick(OBJECTS)
            summary = [adj, obj]
            body = f"{said} a {adj} {obj} was shown {when} while {noise}"
        else:
            obj, ev = pick(OBJECTS), pick(EVENTS)
            summary = [obj, ev]
            body = f"{when} the {obj} was {ev} , {said} , as {noise}"
        sources.append(body.split())
        targets.append(summary)
        meta.append(kind)
    return ParallelCorpus(sources, targets, meta)


def match_templates(summary: Sequence[str]) -> list[str]:
    """Names of every template the token sequence instantiates."""
    hits = []
    for name, slots in _TEMPLATE_PATTERNS.items():
        if len(summary) == len(slots) and all(tok in words for tok, words in zip(summary, slots)):
            hits.append(name)
    return hits


def synth_lexicon() -> set[str]:
    words: set[str] = set()
    for group in (ENTITIES, ACTIONS, OBJECTS, ADJECTIVES, EVENTS, WHEN, SOURCES, DISTRACTORS):
        for phrase in group:
            words.update(phrase.split())
    words.update(["a", "the", ",", "and", "was", "shown", "while", "as"])
    return words
