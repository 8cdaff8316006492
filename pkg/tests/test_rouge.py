import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drgd.rouge import (
    ZERO,
    lcs_length,
    rouge_l,
    rouge_n,
    rouge_su4,
    score_all,
    score_corpus,
    score_tokens,
    skip_units,
    truncate_bytes,
)

S = str.split
words = st.lists(st.sampled_from(list("abcde")), min_size=1, max_size=9)


def close(score, p, r, f):
    assert score.as_tuple() == pytest.approx((p, r, f), abs=1e-15)


def test_identity():
    close(rouge_n(S("the cat sat"), [S("the cat sat")], 1), 1, 1, 1)


def test_the_cat_fixture():
    cand, ref = S("the cat"), [S("the cat sat")]
    close(rouge_n(cand, ref, 1), 1.0, 2 / 3, 0.8)
    close(rouge_n(cand, ref, 2), 1.0, 0.5, 2 / 3)
    close(rouge_l(cand, ref), 1.0, 2 / 3, 0.8)


def test_disjoint_and_empty():
    assert rouge_n(S("a b"), [S("c d")], 1) == ZERO
    assert rouge_l([], [S("a")]) == ZERO
    assert rouge_su4(["a"], [["b"]]) == ZERO
    with pytest.raises(ValueError, match="reference"):
        rouge_n(S("a"), [], 1)
    with pytest.raises(ValueError):
        rouge_n(S("a"), [S("a")], 0)


def test_clipped_counts():
    # candidate repeats "the" three times; reference has it twice
    close(rouge_n(S("the the the"), [S("the the cat")], 1), 2 / 3, 2 / 3, 2 / 3)


def test_lcs_fixture():
    assert lcs_length(S("a c b"), S("a b c")) == 2
    close(rouge_l(S("a c b"), [S("a b c")]), 2 / 3, 2 / 3, 2 / 3)


def brute_lcs(a, b):
    best = 0
    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            sub = [a[i] for i in idx]
            it = iter(b)
            if all(tok in it for tok in sub):
                return k
    return best


@settings(max_examples=100, deadline=None)
@given(words, words)
def test_lcs_matches_brute_force(a, b):
    assert lcs_length(a, b) == brute_lcs(a, b)


def test_su4_units():
    units = skip_units(S("a b c"))
    assert set(units) == {("a",), ("b",), ("c",), ("a", "b"), ("a", "c"), ("b", "c")}
    assert sum(units.values()) == 6


def test_su4_gap_limit():
    # a ... f has four tokens between; a ... g has five
    units = skip_units(S("a b c d e f g"))
    assert ("a", "f") in units and ("a", "g") not in units


def test_su4_hand_count():
    # cand units: a b c ab ac bc; ref "a c": a c ac -> 3 hits
    close(rouge_su4(S("a b c"), [S("a c")]), 0.5, 1.0, 2 / 3)


def test_multi_reference_takes_best_f():
    s = rouge_n(S("a b"), [S("x y z"), S("a b c"), S("a")], 1)
    close(s, 1.0, 2 / 3, 0.8)
    r = rouge_n(S("a b"), [S("a b c d"), S("a")], 1, by="recall")
    close(r, 0.5, 1.0, 2 / 3)


@settings(max_examples=100, deadline=None)
@given(words)
def test_identity_property(x):
    for s in score_all(x, [x]).values():
        assert s.as_tuple() == (1.0, 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(words, words, words)
def test_properties(c, r1, r2):
    one = score_all(c, [r1])
    two = score_all(c, [r1, r2])
    for m in one:
        assert two[m].fscore >= one[m].fscore
        for v in one[m].as_tuple():
            assert 0 <= v <= 1
        p, r, f = one[m].as_tuple()
        if p + r:
            assert f == pytest.approx(2 * p * r / (p + r))
    assert one["rouge-l"].recall <= one["rouge-1"].recall + 1e-15


def test_truncate_bytes():
    assert truncate_bytes("abc", 10) == "abc"
    assert truncate_bytes("abc", None) == "abc"
    assert truncate_bytes("héllo", 2) == "h"


def test_corpus_mean():
    rep = score_tokens([S("the cat"), S("a b")], [[S("the cat sat")], [S("a x y z w q")]])
    # example f-scores 0.8 and 1/(4) ... hand: a b vs 6 tokens: P=.5 R=1/6 F=.25
    assert rep.corpus["rouge-1"].fscore == pytest.approx((0.8 + 0.25) / 2)
    single = score_tokens([S("the cat")], [[S("the cat sat")]])
    assert single.corpus == single.examples[0]


def write(path, lines):
    path.write_text("".join(l + "\n" for l in lines))
    return path


def test_score_corpus_files(tmp_path):
    c = write(tmp_path / "c.txt", ["the cat  ", "a b"])
    r = write(tmp_path / "r.txt", ["the cat sat", "a b"])
    rep = score_corpus(c, [r])
    assert rep.corpus["rouge-1"].fscore == pytest.approx(0.9)
    assert score_corpus(c, [r], byte_limit=1000).corpus == rep.corpus
    assert "rouge-su4" in rep.table()
    assert rep.to_json().startswith("{")
    same = score_corpus(r, [r])
    assert all(s.fscore == 1.0 for s in same.corpus.values())


def test_score_corpus_line_mismatch(tmp_path):
    c = write(tmp_path / "c.txt", ["a"])
    r = write(tmp_path / "r.txt", ["a", "b"])
    with pytest.raises(ValueError, match="has 1.*has 2"):
        score_corpus(c, [r])


def test_no_units_on_either_side_is_a_match():
    close(rouge_n(["a"], [["a"]], 2), 1, 1, 1)
    assert rouge_n(["a"], [["a", "b"]], 2) == ZERO
    assert rouge_n(["a"], [["b"]], 2) == ZERO
