"""generate -> attribute -> segment -> aggregate -> analyze, over a dataset file."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import aggregation, analyses, attribution
from .errors import InputError
from .model import ModelWeights, greedy_generate
from .modelio import load_model
from .segmentation import (INTERVENTIONS, ByteTokenizer, PartSpanMap, Sample, build_prompt,
                           load_dataset, rejection_reason, shuffle_examples)

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    model_path: str
    dataset_path: str
    output_dir: str
    intervention: str = "none"
    task_description: bool = False
    shuffle_seed: Optional[int] = None
    max_total_tokens: int = 400
    min_generated_tokens: int = 10
    num_bins: int = 10
    dominance_mode: str = "both-sides"
    score_mode: str = "source"
    max_new: int = 300
    per_token: bool = False
    run_name: Optional[str] = None

    def validate(self) -> None:
        if self.intervention not in INTERVENTIONS:
            raise InputError(f"intervention must be one of {INTERVENTIONS}")
        if self.max_total_tokens < 1 or self.min_generated_tokens < 0 or self.max_new < 1:
            raise InputError("thresholds must be positive")
        if self.num_bins < 1:
            raise InputError("num_bins must be >= 1")
        if self.dominance_mode not in ("both-sides", "src-only"):
            raise InputError("dominance mode must be both-sides or src-only")
        if self.score_mode not in ("source", "combined"):
            raise InputError("score mode must be source or combined")

    @property
    def name(self) -> str:
        return self.run_name or f"{Path(self.model_path).stem}/{self.intervention}"


@dataclass
class SampleResult:
    sample: Sample
    tokens: list[int]
    spans: PartSpanMap
    generated: list[int] = field(default_factory=list)
    reason: Optional[str] = None  # rejection reason, None if admitted
    profile: Optional[aggregation.PartProfile] = None
    stages: Optional[aggregation.StageProfile] = None

    @property
    def admitted(self) -> bool:
        return self.reason is None


def analyze_sample(weights: ModelWeights, sample: Sample, cfg: RunConfig,
                   tokenizer: ByteTokenizer | None = None) -> SampleResult:
    tok = tokenizer or ByteTokenizer.for_config(weights.config)
    tokens, spans = build_prompt(sample, cfg.task_description, cfg.intervention, tok)
    res = SampleResult(sample=sample, tokens=tokens, spans=spans)
    S = len(tokens)
    # generating past max_total - S + 1 tokens cannot change the filter outcome
    cap = min(cfg.max_new, weights.config.max_seq_len - S, cfg.max_total_tokens - S + 1)
    if cap < 1:
        res.reason = "length"
        return res
    generated, trace = greedy_generate(weights, tokens, cap, stop_ids={tok.stop_id})
    res.generated = generated
    res.reason = rejection_reason(S, len(generated), cfg.max_total_tokens, cfg.min_generated_tokens)
    if res.reason is not None:
        return res
    layers = attribution.all_layer_contributions(trace)
    for c in layers:
        c.check()
    rolled = attribution.rollout(layers)
    rolled.check()
    rows = attribution.output_rows(rolled, len(generated), predicting=True)
    res.profile = aggregation.part_profile(rows, spans)
    attribution.check_row_stochastic(res.profile.per_token)
    if len(generated) >= cfg.num_bins:
        res.stages = aggregation.stage_profile(res.profile.per_token, cfg.num_bins, res.profile.parts)
    return res


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _sample_record(res: SampleResult, cfg: RunConfig, tok: ByteTokenizer) -> dict:
    p = res.profile
    rec = {
        "id": res.sample.id,
        "prompt_len": len(res.tokens),
        "generated_len": len(res.generated),
        "generated_text": tok.decode(res.generated),
        "parts": p.names,
        "sequence_level": _floats(p.sequence_level),
        "example_contributions": _floats(
            analyses.example_contributions(p, res.sample.num_examples, cfg.dominance_mode)),
        "anomaly_score": analyses.source_anomaly_score(p, combined=cfg.score_mode == "combined"),
        "hallucination_label": res.sample.hallucination_label,
    }
    if cfg.per_token:
        rec["per_token"] = [_floats(r) for r in p.per_token]
    if res.stages is not None:
        rec["stage_profile"] = {"bins": [_floats(r) for r in res.stages.bins],
                                "bin_boundaries": [list(b) for b in res.stages.bin_boundaries]}
    return rec


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every sample and write the reports into ``cfg.output_dir``; returns the summary."""
    cfg.validate()
    weights = load_model(cfg.model_path)
    samples = load_dataset(cfg.dataset_path)
    tok = ByteTokenizer.for_config(weights.config)
    rng = np.random.default_rng(cfg.shuffle_seed) if cfg.shuffle_seed is not None else None

    results = []
    for sample in samples:
        if rng is not None:
            sample = shuffle_examples(sample, rng)
        res = analyze_sample(weights, sample, cfg, tok)
        log.info("sample %s: S=%d T=%d %s", sample.id, len(res.tokens), len(res.generated),
                 "admitted" if res.admitted else f"rejected ({res.reason})")
        results.append(res)

    admitted = [r for r in results if r.admitted]
    summary = {
        "run": cfg.name,
        "dataset_size": len(results),
        "admitted": len(admitted),
        "rejected_length": sum(r.reason == "length" for r in results),
        "rejected_short": sum(r.reason == "short" for r in results),
        "rejected": [{"id": r.sample.id, "reason": r.reason} for r in results if not r.admitted],
        "config": {k: v for k, v in asdict(cfg).items()
                   if k not in ("model_path", "dataset_path", "output_dir")},
    }
    if not admitted:
        raise InputError("no admitted samples")

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "samples.jsonl", "w", encoding="utf-8") as fh:
        for r in admitted:
            fh.write(json.dumps(_sample_record(r, cfg, tok), sort_keys=True, ensure_ascii=False) + "\n")

    # corpus part means, keyed by part name so prompts with different layouts can share a table
    names: list[str] = []
    for r in admitted:
        names += [n for n in r.profile.names if n not in names]
    lines = ["run,part,mean_contribution,samples"]
    for name in names:
        vals = [r.profile.value(name) for r in admitted if name in r.profile.names]
        lines.append(f"{cfg.name},{name},{float(np.mean(vals))!r},{len(vals)}")
    (out / "parts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    by_n: dict[int, list] = {}
    for r in admitted:
        by_n.setdefault(r.sample.num_examples, []).append(r)
    if len(by_n) == 1 and next(iter(by_n)) >= 2:
        vectors = [analyses.example_contributions(r.profile, r.sample.num_examples, cfg.dominance_mode)
                   for r in admitted]
        report = analyses.bias_report(vectors)
        _dump_json({"dominance_mode": cfg.dominance_mode, **report.to_dict()}, out / "bias_report.json")
        (out / "bias_report.csv").write_text(report.csv(), encoding="utf-8")
        summary["bias_report"] = True
    else:
        summary["bias_report"] = False

    staged = [r for r in admitted if r.stages is not None]
    if staged and len({tuple(r.profile.names) for r in staged}) == 1:
        parts = staged[0].profile.names
        mean_bins = aggregation.corpus_mean([r.stages.bins for r in staged])
        _dump_json({"parts": parts, "num_bins": cfg.num_bins, "samples": len(staged),
                    "bins": [_floats(b) for b in mean_bins]}, out / "stage_profile.json")
        rows = ["bin,part,mean_contribution"]
        for b, vec in enumerate(mean_bins, 1):
            rows += [f"{b},{name},{float(v)!r}" for name, v in zip(parts, vec)]
        (out / "stage_profile.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    summary["stage_samples"] = len(staged)

    labeled = [r for r in admitted if r.sample.hallucination_label is not None]
    labels = [r.sample.hallucination_label for r in labeled]
    if labeled and any(labels) and not all(labels):
        scores = [analyses.source_anomaly_score(r.profile, combined=cfg.score_mode == "combined")
                  for r in labeled]
        rep = analyses.auroc(scores, labels)
        _dump_json({"score_mode": cfg.score_mode, **rep.to_dict()}, out / "auroc_report.json")
        pts = ["threshold,fpr,tpr"] + [f"{t!r},{f!r},{p!r}" for t, f, p in analyses.roc_points(scores, labels)]
        (out / "roc_points.csv").write_text("\n".join(pts) + "\n", encoding="utf-8")
        summary["auroc"] = rep.auroc
    else:
        summary["auroc"] = None

    _dump_json(summary, out / "summary.json")
    return summary
