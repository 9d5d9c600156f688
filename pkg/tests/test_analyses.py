from fractions import Fraction
from math import prod, sqrt

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from ctxattr.aggregation import PartProfile
from ctxattr.analyses import (auroc, bias_report, contribution_ratio, example_contributions, k_dominance,
                              random_baseline, roc_points, source_anomaly_score)
from ctxattr.errors import InputError
from ctxattr.segmentation import OTHER, PREFIX, SOURCE, example_src, example_tgt

PARTS = [example_src(1), example_tgt(1), example_src(2), example_tgt(2), SOURCE, PREFIX, OTHER]


def profile(values, parts=PARTS):
    v = np.asarray(values, dtype=float)
    return PartProfile(parts=list(parts), per_token=v[None, :], sequence_level=v)


def brute_auroc(scores, labels):
    total, pairs = 0.0, 0
    for s_p, l_p in zip(scores, labels):
        if not l_p:
            continue
        for s_n, l_n in zip(scores, labels):
            if l_n:
                continue
            pairs += 1
            total += 1.0 if s_p > s_n else 0.5 if s_p == s_n else 0.0
    return total / pairs


@pytest.mark.parametrize("v, K, expected", [
    ((5, 4, 3, 2, 1), 4, True),
    ((5, 4, 3, 1, 2), 3, True),
    ((5, 4, 3, 1, 2), 4, False),
    ((3, 3, 2, 1, 1), 1, False),
    ((3, 3, 2, 1, 1), 2, False),
    ((1, 5, 4, 3, 2), 1, False),
    ((5, 1, 2, 3, 4), 1, True),
    ((5, 1, 2, 3, 4), 2, False),
])
def test_k_dominance_cases(v, K, expected):
    assert k_dominance(v, K) is expected


def test_k_dominance_range():
    for K in (0, 5):
        with pytest.raises(InputError):
            k_dominance((5, 4, 3, 2, 1), K)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.data())
def test_k_dominance_order_invariant(v, data):
    K = data.draw(st.integers(1, len(v) - 1))
    transformed = [3.0 * x ** 3 + 7.0 for x in v]  # strictly increasing
    assume(len(set(transformed)) == len(set(v)))
    assert k_dominance(v, K) == k_dominance(transformed, K)


def test_baseline_values():
    assert random_baseline(5, 1) == Fraction(1, 5)
    assert random_baseline(5, 4) == Fraction(1, 120)
    rep = bias_report([[5, 4, 3, 2, 1]])
    assert rep.baseline[0] == 0.2
    assert rep.baseline[3] == 1 / 120
    for N in range(2, 12):
        for K in range(1, N):
            assert random_baseline(N, K) == Fraction(1, prod(range(N - K + 1, N + 1)))
    b = bias_report([[1] * 7]).baseline
    assert all(x > y for x, y in zip(b, b[1:-1])) and b[-2] >= b[-1]


def test_bias_report_counts():
    rep = bias_report([[5, 4, 3, 2, 1], [5, 4, 3, 1, 2], [1, 2, 3, 4, 5], [3, 3, 2, 1, 0]], Ks=[1, 3, 4])
    assert rep.counts == [2, 2, 1]
    assert rep.observed == [0.5, 0.5, 0.25]
    assert rep.sample_count == 4
    assert rep.csv().splitlines()[0] == "K,observed,baseline"
    with pytest.raises(InputError):
        bias_report([])
    with pytest.raises(InputError):
        bias_report([[1, 2, 3], [1, 2]])


def test_monte_carlo_matches_baseline():
    vectors = np.random.default_rng(12345).random((10_000, 5))
    rep = bias_report(vectors)
    for K, obs, p in zip(rep.Ks, rep.observed, rep.baseline):
        assert abs(obs - p) <= 3 * sqrt(p * (1 - p) / 10_000), (K, obs, p)


def test_example_contributions_modes():
    prof = profile([.3, .1, .2, .05, .25, .1, 0])
    np.testing.assert_allclose(example_contributions(prof, 2), [.4, .25])
    np.testing.assert_allclose(example_contributions(prof, 2, "src-only"), [.3, .2])
    with pytest.raises(InputError):
        example_contributions(prof, 2, "tgt-only")


def test_contribution_ratio():
    prof = profile([.4, .1, .2, .05, .1, .15, 0])
    r = contribution_ratio(prof, example_src(1))
    assert r[0] == 1.0
    # copy-of-first-example pathology: source worth a quarter of E1|SRC
    assert r[prof.index(SOURCE)] == pytest.approx(0.25)
    assert contribution_ratio(prof, SOURCE)[prof.index(SOURCE)] == 1.0
    flat = profile([1 / 7] * 7)
    np.testing.assert_allclose(contribution_ratio(flat, "E2|TGT"), 1.0)
    with pytest.raises(InputError):
        contribution_ratio(prof, OTHER)


def test_source_anomaly_score():
    assert source_anomaly_score(profile([.1, .1, .1, .1, .5, .1, 0])) == -0.5
    low = source_anomaly_score(profile([.2, .2, .2, .2, .1, .1, 0]))
    high = source_anomaly_score(profile([.1, .1, .1, .1, .4, .2, 0]))
    assert low > high
    assert source_anomaly_score(profile([.1, .1, .2, .1, .4, .1, 0]), combined=True) == pytest.approx(-0.7)


def test_auroc_basic():
    assert auroc([.9, .8, .1, .2], [True, True, False, False]).auroc == 1.0
    assert auroc([.3] * 6, [True, False] * 3).auroc == 0.5
    rep = auroc([.1, .9, .9], [True, False, True])
    assert (rep.positives, rep.negatives) == (2, 1)
    assert rep.auroc == 0.25
    assert "higher score" in rep.orientation
    with pytest.raises(InputError):
        auroc([1, 2], [True, True])
    with pytest.raises(InputError):
        auroc([1, 2, 3], [True, False])


@pytest.mark.parametrize("seed", range(20))
def test_auroc_matches_pair_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    scores = rng.integers(0, 6, size=n).astype(float) if seed % 2 else rng.random(n)
    labels = rng.random(n) < 0.4
    labels[0], labels[1] = True, False
    assert auroc(scores, labels).auroc == brute_auroc(scores.tolist(), labels.tolist())


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40, unique=True), st.data())
def test_auroc_symmetry_and_invariance(scores, data):
    labels = data.draw(st.lists(st.booleans(), min_size=len(scores), max_size=len(scores)))
    assume(any(labels) and not all(labels))
    a = auroc(scores, labels).auroc
    assert a + auroc([-s for s in scores], labels).auroc == pytest.approx(1.0, abs=1e-12)
    squashed = [float(np.arctan(s)) * 5 + 2 for s in scores]
    assume(len(set(squashed)) == len(scores))  # strictly increasing on these floats
    assert auroc(squashed, labels).auroc == a


def test_separable_corpus_gives_perfect_auroc():
    rng = np.random.default_rng(0)
    clean = [profile([.1, .1, .1, .1, s, .6 - s, 0]) for s in rng.uniform(0.3, 0.5, size=30)]
    bad = [profile([.3, .1, .1, .1, s, .4 - s, 0]) for s in rng.uniform(0.01, 0.29, size=8)]
    scores = [source_anomaly_score(p) for p in clean + bad]
    labels = [False] * 30 + [True] * 8
    assert auroc(scores, labels).auroc == 1.0
    assert brute_auroc(scores, labels) == 1.0


def test_roc_points_end_at_one():
    pts = roc_points([.1, .4, .35, .8], [False, True, False, True])
    assert pts[0][1:] == (0.0, 0.0)
    assert pts[-1][1:] == (1.0, 1.0)
    fprs = [p[1] for p in pts]
    assert fprs == sorted(fprs)
