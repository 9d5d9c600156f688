"""Part-level reductions of output contribution rows."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attribution import ROW_TOL, OutputContributionRows
from .errors import InputError
from .segmentation import PREFIX, PartId, PartSpan, PartSpanMap

DEFAULT_BINS = 10


@dataclass
class PartProfile:
    parts: list[PartId]
    per_token: np.ndarray  # (T, P)
    sequence_level: np.ndarray  # (P,)

    def index(self, part: PartId | str) -> int:
        if isinstance(part, str):
            part = PartId.parse(part)
        try:
            return self.parts.index(part)
        except ValueError:
            raise InputError(f"part {part} not in profile") from None

    def value(self, part: PartId | str) -> float:
        return float(self.sequence_level[self.index(part)])

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parts]


@dataclass
class StageProfile:
    parts: list[PartId]
    bins: np.ndarray  # (B, P)
    bin_boundaries: list[tuple[int, int]]  # 0-based half-open token ranges


def part_token_contributions(rows: OutputContributionRows, spans: PartSpanMap,
                             tol: float = ROW_TOL) -> np.ndarray:
    """Sum each generated token's row over the columns of every part.

    Columns follow ``spans.parts()``. The PREFIX entry of token ``t`` (0-based)
    sums the generated positions ``S .. S+t-1``; rows must not place mass on
    the token being explained or anything after it.
    """
    S, T = spans.length, rows.T
    vals = rows.values
    if rows.S != S or vals.shape != (T, S + T):
        raise InputError(f"rows of shape {vals.shape} (S={rows.S}) do not match a span map of length {S}")
    parts = spans.parts()
    col = {p: i for i, p in enumerate(parts)}
    out = np.zeros((T, len(parts)))
    seen = np.zeros(len(parts), dtype=bool)
    for span in spans.spans:
        c = col[span.part]
        s = vals[:, span.start:span.end].sum(axis=1)
        if seen[c]:
            out[:, c] += s
        else:
            out[:, c] = s
            seen[c] = True
    gen = vals[:, S:]
    for t in range(T):
        out[t, col[PREFIX]] = gen[t, :t].sum()
        leak = gen[t, t:].sum()
        if leak > tol:
            raise InputError(
                f"row {t} puts mass {leak:.3g} on the token it explains or later positions;"
                " use the predicting rows (output_rows(..., predicting=True))"
            )
    return out


def sequence_contributions(per_token: np.ndarray) -> np.ndarray:
    per_token = np.asarray(per_token, dtype=np.float64)
    if per_token.ndim != 2 or per_token.shape[0] == 0:
        raise InputError("need a non-empty T x P matrix")
    return per_token.mean(axis=0)


def part_profile(rows: OutputContributionRows, spans: PartSpanMap) -> PartProfile:
    per_token = part_token_contributions(rows, spans)
    return PartProfile(parts=spans.parts(), per_token=per_token,
                       sequence_level=sequence_contributions(per_token))


def stage_bins(T: int, num_bins: int = DEFAULT_BINS) -> list[tuple[int, int]]:
    """Near-equal split of ``0..T-1``: bin b is ``[b*T//B, (b+1)*T//B)``."""
    if num_bins < 1:
        raise InputError("num_bins must be >= 1")
    if T < num_bins:
        raise InputError(f"cannot split {T} tokens into {num_bins} non-empty bins")
    return [(b * T // num_bins, (b + 1) * T // num_bins) for b in range(num_bins)]


def stage_profile(per_token: np.ndarray, num_bins: int = DEFAULT_BINS,
                  parts: Sequence[PartId] | None = None) -> StageProfile:
    per_token = np.asarray(per_token, dtype=np.float64)
    bounds = stage_bins(per_token.shape[0], num_bins)
    bins = np.stack([per_token[a:b].mean(axis=0) for a, b in bounds])
    return StageProfile(parts=list(parts) if parts is not None else [], bins=bins, bin_boundaries=bounds)


def merge_parts(spans: PartSpanMap, merge: Sequence[PartId], into: PartId) -> PartSpanMap:
    """Relabel the spans of ``merge`` as ``into``; spans are kept separate, not coalesced."""
    targets = set(merge)
    return PartSpanMap([PartSpan(into if s.part in targets else s.part, s.start, s.end)
                        for s in spans.spans])


def corpus_mean(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted mean over samples (each sample counts once whatever its length)."""
    if not len(vectors):
        raise InputError("no samples to average")
    return np.mean(np.stack(vectors), axis=0)
