"""ROUGE-N, ROUGE-L and ROUGE-SU4 with multi-reference support.

All F-scores use beta = 1. With several references the reference giving
the best score (F, or R in recall mode) is kept, together with its P and R.
Corpus scores are macro-averages over examples.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .data import read_lines, tokenize

METRICS = ("rouge-1", "rouge-2", "rouge-l", "rouge-su4")
SKIP_GAP = 4


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    fscore: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.fscore)


ZERO = Score(0.0, 0.0, 0.0)


def _prf(hits: float, n_cand: int, n_ref: int) -> Score:
    if hits == 0 or n_cand == 0 or n_ref == 0:
        return ZERO
    p, r = hits / n_cand, hits / n_ref
    return Score(p, r, 2 * p * r / (p + r))


def _best(scores: list[Score], by: str) -> Score:
    key = (lambda s: s.recall) if by == "recall" else (lambda s: s.fscore)
    return max(scores, key=key)


def _check_refs(references) -> None:
    if not references:
        raise ValueError("at least one reference is required")


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def skip_units(tokens: Sequence[str], max_gap: int = SKIP_GAP) -> Counter:
    """Unigrams plus ordered pairs with at most ``max_gap`` tokens between."""
    units = Counter((t,) for t in tokens)
    for i in range(len(tokens)):
        for j in range(i + 1, min(len(tokens), i + max_gap + 2)):
            units[(tokens[i], tokens[j])] += 1
    return units


def _overlap(cand: Counter, ref: Counter) -> Score:
    hits = sum((cand & ref).values())
    return _prf(hits, sum(cand.values()), sum(ref.values()))


def rouge_n(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int, by: str = "f") -> Score:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    _check_refs(references)
    if not candidate:
        return ZERO
    cand = ngrams(candidate, n)
    return _best([_ngram_score(candidate, cand, r, n) for r in references], by)


def _ngram_score(candidate, cand: Counter, reference, n: int) -> Score:
    if len(candidate) < n and len(reference) < n:
        # no n-grams on either side (e.g. bigrams of one token): exact match decides
        return Score(1.0, 1.0, 1.0) if list(candidate) == list(reference) else ZERO
    return _overlap(cand, ngrams(reference, n))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], references: Sequence[Sequence[str]], by: str = "f") -> Score:
    _check_refs(references)
    if not candidate:
        return ZERO
    return _best([_prf(lcs_length(candidate, r), len(candidate), len(r)) for r in references], by)


def rouge_su4(candidate: Sequence[str], references: Sequence[Sequence[str]], by: str = "f") -> Score:
    _check_refs(references)
    if not candidate:
        return ZERO
    cand = skip_units(candidate)
    return _best([_overlap(cand, skip_units(r)) for r in references], by)


def score_all(candidate: Sequence[str], references: Sequence[Sequence[str]], by: str = "f") -> dict[str, Score]:
    return {
        "rouge-1": rouge_n(candidate, references, 1, by),
        "rouge-2": rouge_n(candidate, references, 2, by),
        "rouge-l": rouge_l(candidate, references, by),
        "rouge-su4": rouge_su4(candidate, references, by),
    }


def truncate_bytes(text: str, limit: int | None) -> str:
    if limit is None:
        return text
    return text.encode("utf-8")[:limit].decode("utf-8", errors="ignore")


@dataclass
class RougeReport:
    corpus: dict[str, Score]
    examples: list[dict[str, Score]] = field(default_factory=list)
    mode: str = "f"

    def table(self) -> str:
        lines = [f"{'metric':<10} {'P':>8} {'R':>8} {'F':>8}"]
        for m in METRICS:
            s = self.corpus[m]
            lines.append(f"{m:<10} {s.precision:8.4f} {s.recall:8.4f} {s.fscore:8.4f}")
        return "\n".join(lines)

    def records(self) -> list[dict]:
        out = [{"scope": "corpus", "metric": m, **_score_dict(self.corpus[m])} for m in METRICS]
        for i, ex in enumerate(self.examples):
            out += [{"scope": i, "metric": m, **_score_dict(ex[m])} for m in METRICS]
        return out

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "records": self.records()}, sort_keys=True)


def _score_dict(s: Score) -> dict:
    return {"p": s.precision, "r": s.recall, "f": s.fscore}


def score_tokens(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[Sequence[str]]], mode: str = "f") -> RougeReport:
    """``references[i]`` is the list of reference token lists for example i."""
    if mode not in ("f", "recall"):
        raise ValueError(f"mode must be 'f' or 'recall', got {mode!r}")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} reference sets")
    examples = [score_all(c, refs, mode) for c, refs in zip(candidates, references)]
    n = max(len(examples), 1)
    corpus = {}
    for m in METRICS:
        corpus[m] = Score(
            sum(e[m].precision for e in examples) / n,
            sum(e[m].recall for e in examples) / n,
            sum(e[m].fscore for e in examples) / n,
        )
    return RougeReport(corpus, examples, mode)


def score_corpus(
    candidate_file: str | os.PathLike,
    reference_files: Sequence[str | os.PathLike],
    mode: str = "f",
    byte_limit: int | None = None,
    tokenizer: str = "word",
) -> RougeReport:
    """Score aligned candidate/reference files, one example per line."""
    if not reference_files:
        raise ValueError("at least one reference file is required")
    cand_lines = read_lines(candidate_file)
    ref_sets = []
    for path in reference_files:
        lines = read_lines(path)
        if len(lines) != len(cand_lines):
            raise ValueError(f"line count mismatch: {candidate_file} has {len(cand_lines)}, {path} has {len(lines)}")
        ref_sets.append(lines)
    candidates = [tokenize(truncate_bytes(c, byte_limit), tokenizer) for c in cand_lines]
    references = [[tokenize(refs[i], tokenizer) for refs in ref_sets] for i in range(len(cand_lines))]
    return score_tokens(candidates, references, mode)
