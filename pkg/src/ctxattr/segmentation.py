"""Few-shot prompt construction and token-span -> context-part mapping.

Prompt layout (one labeled line per text, ending with a bare target label)::

    [Translate the following text from de to en\\n]     TASK (optional)
    de: <example 1 source>\\n                           E1|SRC
    en: <example 1 target>\\n                           E1|TGT
    ...
    de: <test source>\\n                                SRC
    en:                                                OTHER

Spans are 0-based and half-open. Label scaffolding belongs to the part it
introduces; the dangling target label (and an optional BOS token) is OTHER.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import InputError

TASK_TEMPLATE = "Translate the following text from {src} to {tgt}\n"
INTERVENTIONS = ("none", "replace-last-ex")
MAX_TOTAL_TOKENS = 400
MIN_GENERATED_TOKENS = 10


@dataclass(frozen=True, order=True)
class PartId:
    kind: str  # task | example_src | example_tgt | source | prefix | other
    k: int = 0

    _KINDS = ("task", "example_src", "example_tgt", "source", "prefix", "other")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InputError(f"unknown part kind {self.kind!r}")
        if self.kind.startswith("example") != (self.k >= 1):
            raise InputError(f"bad example index {self.k} for {self.kind}")

    @property
    def name(self) -> str:
        if self.kind == "example_src":
            return f"E{self.k}|SRC"
        if self.kind == "example_tgt":
            return f"E{self.k}|TGT"
        return {"task": "TASK", "source": "SRC", "prefix": "PREFIX", "other": "OTHER"}[self.kind]

    @classmethod
    def parse(cls, name: str) -> "PartId":
        simple = {"TASK": "task", "SRC": "source", "PREFIX": "prefix", "OTHER": "other"}
        if name in simple:
            return cls(simple[name])
        if name.startswith("E") and "|" in name:
            idx, side = name[1:].split("|", 1)
            if idx.isdigit() and side in ("SRC", "TGT"):
                return cls("example_src" if side == "SRC" else "example_tgt", int(idx))
        raise InputError(f"unknown part name {name!r}")

    def __str__(self):
        return self.name


TASK = PartId("task")
SOURCE = PartId("source")
PREFIX = PartId("prefix")
OTHER = PartId("other")


def example_src(k: int) -> PartId:
    return PartId("example_src", k)


def example_tgt(k: int) -> PartId:
    return PartId("example_tgt", k)


class ByteTokenizer:
    """One token per UTF-8 byte; ids >= 256 are reserved specials."""

    def __init__(self, stop_id: int = 256, bos_id: int = 257):
        if stop_id < 256 or bos_id < 256 or stop_id == bos_id:
            raise InputError("special ids must be distinct and >= 256")
        self.stop_id = stop_id
        self.bos_id = bos_id

    @classmethod
    def for_config(cls, config) -> "ByteTokenizer":
        return cls(stop_id=config.stop_id, bos_id=config.bos_id)

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids) -> str:
        return bytes(int(i) for i in ids if int(i) < 256).decode("utf-8", errors="replace")


@dataclass
class Sample:
    examples: list[tuple[str, str]]
    source: str
    language_pair: str
    reference: Optional[str] = None
    hallucination_label: Optional[bool] = None
    id: Optional[str] = None

    def __post_init__(self):
        self.examples = [(str(s), str(t)) for s, t in self.examples]
        if not self.examples:
            raise InputError("sample needs at least one example")
        texts = [t for pair in self.examples for t in pair] + [self.source]
        if self.reference is not None:
            texts.append(self.reference)
        if any(not t for t in texts):
            raise InputError("sample texts must be non-empty")
        split_language_pair(self.language_pair)

    @property
    def num_examples(self) -> int:
        return len(self.examples)

    @classmethod
    def from_dict(cls, obj: dict, default_id: Optional[str] = None) -> "Sample":
        try:
            examples = [(e["src"], e["tgt"]) for e in obj["examples"]]
            label = obj.get("hallucination_label")
            raw_id = obj.get("id", default_id)
            if label is not None and not isinstance(label, bool):
                raise InputError("hallucination_label must be a boolean")
            return cls(
                examples=examples,
                source=obj["source"],
                language_pair=obj["language_pair"],
                reference=obj.get("reference"),
                hallucination_label=label,
                id=None if raw_id is None else str(raw_id),
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed sample record: {exc!r}") from exc

    def to_dict(self) -> dict:
        out = {"examples": [{"src": s, "tgt": t} for s, t in self.examples], "source": self.source}
        if self.reference is not None:
            out["reference"] = self.reference
        if self.hallucination_label is not None:
            out["hallucination_label"] = self.hallucination_label
        out["language_pair"] = self.language_pair
        if self.id is not None:
            out["id"] = self.id
        return out


def split_language_pair(tag: str) -> tuple[str, str]:
    src, sep, tgt = str(tag).partition("-")
    if not sep or not src or not tgt:
        raise InputError(f"language_pair must look like 'src-tgt', got {tag!r}")
    return src, tgt


def iter_dataset(path: str | Path) -> Iterator[Sample]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        idx = 0
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise InputError(f"{path}:{lineno}: record must be an object")
            try:
                yield Sample.from_dict(obj, default_id=str(idx))
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            idx += 1


def load_dataset(path: str | Path) -> list[Sample]:
    return list(iter_dataset(path))


def save_dataset(samples, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def shuffle_examples(sample: Sample, rng: np.random.Generator) -> Sample:
    order = rng.permutation(sample.num_examples)
    return Sample(
        examples=[sample.examples[i] for i in order],
        source=sample.source,
        language_pair=sample.language_pair,
        reference=sample.reference,
        hallucination_label=sample.hallucination_label,
        id=sample.id,
    )


@dataclass(frozen=True)
class PartSpan:
    part: PartId
    start: int
    end: int

    def __len__(self):
        return self.end - self.start


@dataclass
class PartSpanMap:
    """Spans covering prompt positions ``0..S-1``; generated positions are PREFIX."""

    spans: list[PartSpan] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.spans[-1].end if self.spans else 0

    def parts(self) -> list[PartId]:
        """Profile column order: prompt parts in span order, then PREFIX and OTHER."""
        seen: list[PartId] = []
        for s in self.spans:
            if s.part not in seen and s.part != OTHER:
                seen.append(s.part)
        return seen + [PREFIX, OTHER]

    def part_of(self, position: int) -> PartId:
        if position >= self.length:
            return PREFIX
        for s in self.spans:
            if s.start <= position < s.end:
                return s.part
        raise InputError(f"position {position} not covered")

    def validate(self) -> None:
        pos = 0
        for s in self.spans:
            if s.start != pos or s.end <= s.start:
                raise InputError(f"span {s} breaks the partition at position {pos}")
            pos = s.end


def prompt_pieces(sample: Sample, with_task_description: bool = False,
                  intervention: str = "none") -> list[tuple[PartId, str]]:
    """The prompt as ordered (part, text) pieces; their concatenation is the prompt text."""
    if intervention not in INTERVENTIONS:
        raise InputError(f"unknown intervention {intervention!r}")
    src_lang, tgt_lang = split_language_pair(sample.language_pair)
    examples = list(sample.examples)
    if intervention == "replace-last-ex":
        if sample.reference is None:
            raise InputError("replace-last-ex needs a reference translation")
        examples[-1] = (sample.source, sample.reference)
    pieces: list[tuple[PartId, str]] = []
    if with_task_description:
        pieces.append((TASK, TASK_TEMPLATE.format(src=src_lang, tgt=tgt_lang)))
    for k, (s, t) in enumerate(examples, 1):
        pieces.append((example_src(k), f"{src_lang}: {s}\n"))
        pieces.append((example_tgt(k), f"{tgt_lang}: {t}\n"))
    pieces.append((SOURCE, f"{src_lang}: {sample.source}\n"))
    pieces.append((OTHER, f"{tgt_lang}:"))
    return pieces


def build_prompt(sample: Sample, with_task_description: bool = False, intervention: str = "none",
                 tokenizer: ByteTokenizer | None = None, bos: bool = False) -> tuple[list[int], PartSpanMap]:
    tok = tokenizer or ByteTokenizer()
    tokens: list[int] = []
    spans: list[PartSpan] = []
    if bos:
        tokens.append(tok.bos_id)
        spans.append(PartSpan(OTHER, 0, 1))
    for part, text in prompt_pieces(sample, with_task_description, intervention):
        ids = tok.encode(text)
        spans.append(PartSpan(part, len(tokens), len(tokens) + len(ids)))
        tokens.extend(ids)
    smap = PartSpanMap(spans)
    smap.validate()
    return tokens, smap


def admit_sample(sample: Sample | None, prompt_len: int, generated_len: int,
                 max_total: int = MAX_TOTAL_TOKENS, min_generated: int = MIN_GENERATED_TOKENS) -> bool:
    return rejection_reason(prompt_len, generated_len, max_total, min_generated) is None


def rejection_reason(prompt_len: int, generated_len: int, max_total: int = MAX_TOTAL_TOKENS,
                     min_generated: int = MIN_GENERATED_TOKENS) -> Optional[str]:
    """``None`` if admitted, else ``"length"`` or ``"short"`` (length is checked first)."""
    if prompt_len + generated_len > max_total:
        return "length"
    if generated_len <= min_generated:
        return "short"
    return None
