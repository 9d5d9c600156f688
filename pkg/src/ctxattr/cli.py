"""Command line: ``ctxattr run | synth | inspect``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import analyses
from .errors import InputError, InvariantError
from .model import ModelConfig
from .modelio import load_model
from .pipeline import RunConfig, analyze_sample, run_pipeline
from .segmentation import INTERVENTIONS, ByteTokenizer, PartId, load_dataset, shuffle_examples
from .synth import TOY_CONFIG, make_synthetic


def _prompt_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model weights file (binary or text manifest)")
    p.add_argument("--dataset", required=True, help="JSONL dataset")
    p.add_argument("--intervention", choices=INTERVENTIONS, default="none")
    p.add_argument("--task-description", action="store_true")
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--max-total-tokens", type=int, default=400)
    p.add_argument("--min-generated-tokens", type=int, default=10)
    p.add_argument("--max-new", type=int, default=300)
    p.add_argument("--num-bins", type=int, default=10)
    p.add_argument("--dominance-mode", choices=("both-sides", "src-only"), default="both-sides")
    p.add_argument("--score-mode", choices=("source", "combined"), default="source")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxattr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline over a dataset")
    _prompt_flags(run)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--per-token", action="store_true", help="include per-token matrices in samples.jsonl")
    run.add_argument("--run-name", default=None)

    synth = sub.add_parser("synth", help="write a seeded toy model and dataset")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--size", type=int, default=20)
    synth.add_argument("--model-out", required=True)
    synth.add_argument("--dataset-out", required=True)
    synth.add_argument("--text", action="store_true", help="write the model as a text manifest")
    synth.add_argument("--layers", type=int, default=TOY_CONFIG.num_layers)
    synth.add_argument("--heads", type=int, default=TOY_CONFIG.num_heads)
    synth.add_argument("--d-head", type=int, default=TOY_CONFIG.d_head)
    synth.add_argument("--d-ff", type=int, default=TOY_CONFIG.d_ff)
    synth.add_argument("--max-seq-len", type=int, default=TOY_CONFIG.max_seq_len)

    insp = sub.add_parser("inspect", help="print one sample's part profile and contribution ratios")
    _prompt_flags(insp)
    insp.add_argument("--index", type=int, default=0, help="0-based record index in the dataset")
    insp.add_argument("--reference", default="E1|SRC", help="part the ratios are taken against")
    return parser


def _run_config(args, out_dir: str = "") -> RunConfig:
    return RunConfig(
        model_path=args.model,
        dataset_path=args.dataset,
        output_dir=out_dir,
        intervention=args.intervention,
        task_description=args.task_description,
        shuffle_seed=args.shuffle_seed,
        max_total_tokens=args.max_total_tokens,
        min_generated_tokens=args.min_generated_tokens,
        num_bins=args.num_bins,
        dominance_mode=args.dominance_mode,
        score_mode=args.score_mode,
        max_new=args.max_new,
        per_token=getattr(args, "per_token", False),
        run_name=getattr(args, "run_name", None),
    )


def cmd_run(args) -> int:
    summary = run_pipeline(_run_config(args, args.out))
    print(f"{summary['admitted']}/{summary['dataset_size']} samples admitted "
          f"(rejected: {summary['rejected_length']} length, {summary['rejected_short']} short); "
          f"reports in {args.out}")
    return 0


def cmd_synth(args) -> int:
    config = ModelConfig(
        num_layers=args.layers, num_heads=args.heads, d_model=args.heads * args.d_head,
        d_head=args.d_head, d_ff=args.d_ff, vocab_size=TOY_CONFIG.vocab_size,
        max_seq_len=args.max_seq_len,
    )
    make_synthetic(args.seed, config, args.size, args.model_out, args.dataset_out, text=args.text)
    print(f"wrote {args.model_out} and {args.dataset_out} ({args.size} samples)")
    return 0


def cmd_inspect(args) -> int:
    cfg = _run_config(args)
    cfg.validate()
    weights = load_model(cfg.model_path)
    samples = load_dataset(cfg.dataset_path)
    if not 0 <= args.index < len(samples):
        raise InputError(f"index {args.index} out of range (dataset has {len(samples)} records)")
    sample = samples[args.index]
    if cfg.shuffle_seed is not None:
        rng = np.random.default_rng(cfg.shuffle_seed)
        for s in samples[: args.index + 1]:
            sample = shuffle_examples(s, rng)
    tok = ByteTokenizer.for_config(weights.config)
    res = analyze_sample(weights, sample, cfg, tok)
    print(f"sample {sample.id}: prompt {len(res.tokens)} tokens, generated {len(res.generated)}")
    print(f"output: {tok.decode(res.generated)!r}")
    if not res.admitted:
        print(f"rejected by filter ({res.reason})")
        return 1
    reference = PartId.parse(args.reference)
    ratios = analyses.contribution_ratio(res.profile, reference)
    print(f"{'part':<10}{'contribution':>14}{'ratio to ' + reference.name:>20}")
    for name, v, r in zip(res.profile.names, res.profile.sequence_level, ratios):
        print(f"{name:<10}{v:>14.6f}{r:>20.4f}")
    print(f"anomaly score ({cfg.score_mode}): "
          f"{analyses.source_anomaly_score(res.profile, cfg.score_mode == 'combined'):.6f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "synth": cmd_synth, "inspect": cmd_inspect}[args.command]
    try:
        return handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
