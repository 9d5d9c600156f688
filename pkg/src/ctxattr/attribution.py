"""Token-to-token contribution matrices (ALTI) and their rollout across layers.

Layers are numbered 1..L. Rows are output positions, columns are source
positions; every matrix is row-stochastic and lower-triangular.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import kernels
from .errors import InputError, InvariantError
from .model import LayerTrace, TraceBundle

ROW_TOL = 1e-6


@dataclass
class ContributionMatrix:
    values: np.ndarray
    layer_tag: Union[int, str]  # layer number, or "rollout-through-<L>"

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def check(self, tol: float = ROW_TOL) -> None:
        check_row_stochastic(self.values, tol)
        if np.any(np.triu(self.values, k=1) != 0):
            raise InvariantError(f"{self.layer_tag}: mass above the diagonal")


@dataclass
class OutputContributionRows:
    """Rows of the rollout that explain the generated tokens; ``T x (S + T)``."""

    values: np.ndarray
    S: int
    T: int


def check_row_stochastic(values: np.ndarray, tol: float = ROW_TOL) -> None:
    if values.size and values.min() < 0:
        raise InvariantError("negative contribution")
    err = np.abs(values.sum(axis=1) - 1.0)
    if err.size and err.max() > tol:
        raise InvariantError(f"row sums deviate from 1 by up to {err.max():.3g}")


def normalize_relevance(relevance: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Row-normalize; an all-zero row is replaced by the matching ``fallback`` row."""
    totals = relevance.sum(axis=1, keepdims=True)
    dead = totals[:, 0] <= 0
    out = np.divide(relevance, totals, out=np.zeros_like(relevance), where=~dead[:, None])
    out[dead] = fallback[dead]
    return out


def contributions_from_vectors(outputs: np.ndarray, transformed: np.ndarray,
                               fallback: np.ndarray | None = None) -> np.ndarray:
    """Contribution rows from explicit per-source vectors ``transformed[i, j]`` (n, n, d).

    Slow reference route; the trace-based path goes through :mod:`ctxattr.kernels`.
    """
    n = outputs.shape[0]
    ynorm = np.abs(outputs).sum(axis=1)
    dist = np.abs(outputs[:, None, :] - transformed).sum(axis=-1)
    rel = np.tril(np.maximum(0.0, ynorm[:, None] - dist))
    if fallback is None:
        fallback = np.tril(np.ones((n, n))) / np.arange(1, n + 1)[:, None]
    return normalize_relevance(rel, fallback)


def layer_trace_contributions(lt: LayerTrace, backend: str | None = None) -> np.ndarray:
    rel = kernels.alti_relevance(lt.attn, lt.head_values, lt.residual, lt.outputs, backend=backend)
    return normalize_relevance(rel, lt.attn.mean(axis=0))


def layer_contributions(trace: TraceBundle, layer: int, backend: str | None = None) -> ContributionMatrix:
    if not 1 <= layer <= trace.num_layers:
        raise InputError(f"layer {layer} out of range 1..{trace.num_layers}")
    values = layer_trace_contributions(trace.layers[layer - 1], backend=backend)
    return ContributionMatrix(values=values, layer_tag=layer)


def rollout(layers: Sequence[ContributionMatrix]) -> ContributionMatrix:
    """``M = C^L @ ... @ C^1`` for matrices ordered first layer to last."""
    if not layers:
        raise InputError("rollout needs at least one matrix")
    n = layers[0].n
    if any(c.values.shape != (n, n) for c in layers):
        raise InputError("rollout: matrices must all be n x n with the same n")
    acc = layers[0].values.copy()
    for c in layers[1:]:
        acc = c.values @ acc
    last = layers[-1].layer_tag
    return ContributionMatrix(values=acc, layer_tag=f"rollout-through-{last}")


def all_layer_contributions(trace: TraceBundle, backend: str | None = None) -> list[ContributionMatrix]:
    return [layer_contributions(trace, l, backend=backend) for l in range(1, trace.num_layers + 1)]


def output_rows(rolled: ContributionMatrix, T: int, predicting: bool = False) -> OutputContributionRows:
    """The rows explaining ``T`` generated tokens at the end of an ``n``-position sequence.

    By default these are the last ``T`` rows. With ``predicting=True`` each row is
    shifted back by one position, to the position whose next-token distribution
    emitted the token; the token itself is then outside its own row's support.
    No renormalization is applied in either case.
    """
    n = rolled.n
    shift = 1 if predicting else 0
    if T < 1 or T + shift > n:
        raise InputError(f"cannot take {T} output rows from an {n}-position matrix")
    stop = n - shift
    return OutputContributionRows(values=rolled.values[stop - T:stop].copy(), S=n - T, T=T)


def dump_matrix(matrix: ContributionMatrix | np.ndarray, dest: str | Path | io.TextIOBase | None = None) -> str:
    """Row-major CSV with 17 significant digits; returns the text and writes it if ``dest`` is given."""
    values = matrix.values if isinstance(matrix, ContributionMatrix) else np.asarray(matrix)
    text = "\n".join(",".join(f"{v:.17g}" for v in row) for row in values) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    elif dest is not None:
        dest.write(text)
    return text
