"""Seeded toy models and few-shot translation datasets."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelWeights, random_weights
from .modelio import save_model
from .segmentation import Sample, save_dataset

TOY_CONFIG = ModelConfig(num_layers=2, num_heads=2, d_model=16, d_head=8, d_ff=32,
                         vocab_size=258, max_seq_len=512)

_CONSONANTS = "bcdfghklmnprstvz"
_VOWELS = "aeiou"


def _word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                   for _ in range(n))


def _translate(text: str) -> str:
    # a fixed character-level "language": reversed words with shifted vowels
    shift = str.maketrans("aeiou", "eioua")
    return " ".join(w[::-1].translate(shift) for w in text.split())


def _sentence(rng: np.random.Generator, lexicon: list[str]) -> str:
    n = int(rng.integers(2, 4))
    return " ".join(lexicon[i] for i in rng.integers(len(lexicon), size=n))


def synthetic_samples(seed: int, size: int, num_examples: int = 5, language_pair: str = "de-en",
                      hallucination_rate: float = 0.25) -> list[Sample]:
    """``size`` samples with ``num_examples`` examples each; about a quarter carry a positive label."""
    rng = np.random.default_rng([seed, 1])
    lexicon = [_word(rng) for _ in range(40)]
    samples = []
    for i in range(size):
        examples = []
        for _ in range(num_examples):
            s = _sentence(rng, lexicon)
            examples.append((s, _translate(s)))
        source = _sentence(rng, lexicon)
        samples.append(Sample(
            examples=examples,
            source=source,
            reference=_translate(source),
            hallucination_label=bool(rng.random() < hallucination_rate),
            language_pair=language_pair,
            id=f"syn-{i:04d}",
        ))
    return samples


def make_synthetic(seed: int, config: ModelConfig, size: int, model_path: str | Path,
                   dataset_path: str | Path, text: bool = False) -> tuple[ModelWeights, list[Sample]]:
    weights = random_weights(config, seed)
    samples = synthetic_samples(seed, size)
    save_model(weights, model_path, text=text)
    save_dataset(samples, dataset_path)
    return weights, samples
