import re
from pathlib import Path

import numpy as np
import pytest

from ctxattr.model import ModelConfig, random_weights


def toy_config(L=2, H=2, d_head=4, V=16, max_seq_len=64, d_ff=None):
    return ModelConfig(num_layers=L, num_heads=H, d_model=H * d_head, d_head=d_head,
                       d_ff=d_ff or 2 * H * d_head, vocab_size=V, max_seq_len=max_seq_len,
                       stop_id=V - 2, bos_id=V - 1)


def toy_weights(seed=0, **kw):
    return random_weights(toy_config(**kw), seed)


def random_causal_stochastic(rng, n):
    m = np.tril(rng.random((n, n)))
    return m / m.sum(axis=1, keepdims=True)


@pytest.fixture
def weights():
    return toy_weights(0)


DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
GOLDEN_ARGS = ["--model", str(DATA / "toy_model.ctxw"), "--dataset", str(DATA / "toy_dataset.jsonl"),
               "--max-new", "40", "--run-name", "toy"]


def _tokens(text):
    return re.split(r"([\s,\[\]{}:\"]+)", text)


def assert_reports_match(out_dir, golden_dir, tol=1e-9):
    """Same files, same text outside numbers, numbers equal within ``tol`` (backends may differ in the last bits)."""
    out_files = sorted(p.name for p in out_dir.iterdir())
    assert out_files == sorted(p.name for p in golden_dir.iterdir())
    for name in out_files:
        a, b = _tokens((out_dir / name).read_text()), _tokens((golden_dir / name).read_text())
        assert len(a) == len(b), name
        for x, y in zip(a, b):
            if x == y:
                continue
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                raise AssertionError(f"{name}: {x!r} != {y!r}") from None
            assert abs(fx - fy) <= tol * max(1.0, abs(fy)), f"{name}: {x} vs {y}"
