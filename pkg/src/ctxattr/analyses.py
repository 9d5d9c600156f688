"""Positional-bias statistics, contribution ratios and hallucination scoring."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Sequence

import numpy as np

from .aggregation import PartProfile
from .errors import InputError
from .segmentation import SOURCE, PartId, example_src, example_tgt

SCORE_ORIENTATION = "higher score = lower source contribution = more hallucination-like"


def example_contributions(profile: PartProfile, num_examples: int, mode: str = "both-sides") -> np.ndarray:
    """Per-example totals: source + target side (``both-sides``) or source side only (``src-only``)."""
    if mode not in ("both-sides", "src-only"):
        raise InputError(f"unknown dominance mode {mode!r}")
    out = np.empty(num_examples)
    for k in range(1, num_examples + 1):
        out[k - 1] = profile.value(example_src(k))
        if mode == "both-sides":
            out[k - 1] += profile.value(example_tgt(k))
    return out


def k_dominance(v: Sequence[float], K: int) -> bool:
    """First K entries strictly descending and all strictly above every later entry.

    The tail after position K is not required to be sorted.
    """
    v = np.asarray(v, dtype=np.float64)
    N = v.shape[0]
    if not 1 <= K <= N - 1:
        raise InputError(f"K={K} out of range 1..{N - 1}")
    head = v[:K]
    if K > 1 and not np.all(head[:-1] > head[1:]):
        return False
    return bool(head.min() > v[K:].max())


def random_baseline(N: int, K: int) -> Fraction:
    """Probability that a uniformly random ordering is K-dominant: (N-K)!/N!."""
    return Fraction(factorial(N - K), factorial(N))


@dataclass
class BiasReport:
    N: int
    Ks: list[int]
    observed: list[float]
    counts: list[int]
    sample_count: int
    baseline: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "sample_count": self.sample_count,
            "rows": [
                {"K": k, "observed": o, "count": c, "baseline": b}
                for k, o, c, b in zip(self.Ks, self.observed, self.counts, self.baseline)
            ],
        }

    def csv(self) -> str:
        lines = ["K,observed,baseline"]
        lines += [f"{k},{o!r},{b!r}" for k, o, b in zip(self.Ks, self.observed, self.baseline)]
        return "\n".join(lines) + "\n"


def bias_report(vectors: Sequence[Sequence[float]], Ks: Sequence[int] | None = None) -> BiasReport:
    if len(vectors) == 0:
        raise InputError("bias_report needs at least one sample")
    data = [np.asarray(v, dtype=np.float64) for v in vectors]
    N = data[0].shape[0]
    if any(v.shape != (N,) for v in data):
        raise InputError("all contribution vectors must have the same number of examples")
    Ks = list(Ks) if Ks is not None else list(range(1, N))
    counts = [sum(k_dominance(v, K) for v in data) for K in Ks]
    return BiasReport(
        N=N,
        Ks=Ks,
        observed=[c / len(data) for c in counts],
        counts=counts,
        sample_count=len(data),
        baseline=[float(random_baseline(N, K)) for K in Ks],
    )


def contribution_ratio(profile: PartProfile, reference: PartId | str) -> np.ndarray:
    ref = profile.sequence_level[profile.index(reference)]
    if not ref > 0:
        raise InputError(f"reference part {reference} has zero contribution")
    out = profile.sequence_level / ref
    out[profile.index(reference)] = 1.0
    return out


def source_anomaly_score(profile: PartProfile, combined: bool = False) -> float:
    """Negated source contribution, so larger means more anomalous.

    ``combined=True`` also subtracts every example-source contribution.
    """
    total = profile.value(SOURCE)
    if combined:
        total += sum(profile.sequence_level[i] for i, p in enumerate(profile.parts) if p.kind == "example_src")
    return -float(total)


@dataclass
class AurocReport:
    auroc: float
    positives: int
    negatives: int
    orientation: str = SCORE_ORIENTATION

    def to_dict(self) -> dict:
        return {"auroc": self.auroc, "positives": self.positives, "negatives": self.negatives,
                "orientation": self.orientation}


def _split(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise InputError("scores and labels must be 1-d and of equal length")
    pos, neg = scores[labels], scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise InputError("AUROC needs at least one positive and one negative label")
    return pos, neg


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> AurocReport:
    """Mann-Whitney AUROC: P(score_pos > score_neg) with ties counted as one half."""
    pos, neg = _split(scores, labels)
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    not_above = np.searchsorted(neg_sorted, pos, side="right")
    # twice the U statistic, kept integral so the division is the only rounding step
    u2 = int(np.sum(below + not_above))
    return AurocReport(auroc=u2 / (2 * pos.size * neg.size), positives=int(pos.size), negatives=int(neg.size))


def roc_points(scores: Sequence[float], labels: Sequence[bool]) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) for every distinct score, predicting positive when score >= threshold."""
    pos, neg = _split(scores, labels)
    pts = [(float("inf"), 0.0, 0.0)]
    for thr in np.unique(np.concatenate([pos, neg]))[::-1]:
        pts.append((float(thr), float(np.mean(neg >= thr)), float(np.mean(pos >= thr))))
    return pts
