"""Part-level context attribution for few-shot translation prompts on small decoder-only models."""
from .aggregation import PartProfile, StageProfile, part_profile, part_token_contributions, \
    sequence_contributions, stage_profile
from .analyses import AurocReport, BiasReport, auroc, bias_report, contribution_ratio, k_dominance, \
    source_anomaly_score
from .attribution import ContributionMatrix, OutputContributionRows, layer_contributions, output_rows, rollout
from .errors import InputError, InvariantError
from .kernels import BACKEND
from .model import ModelConfig, ModelWeights, TraceBundle, forward_trace, greedy_generate, random_weights
from .segmentation import PartId, PartSpanMap, Sample, admit_sample, build_prompt

__version__ = "0.1.0"

__all__ = [
    "PartProfile", "StageProfile", "part_profile", "part_token_contributions", "sequence_contributions",
    "stage_profile", "AurocReport", "BiasReport", "auroc", "bias_report", "contribution_ratio", "k_dominance",
    "source_anomaly_score", "ContributionMatrix", "OutputContributionRows", "layer_contributions",
    "output_rows", "rollout", "InputError", "InvariantError", "BACKEND", "ModelConfig", "ModelWeights",
    "TraceBundle", "forward_trace", "greedy_generate", "random_weights", "PartId", "PartSpanMap", "Sample",
    "admit_sample", "build_prompt",
]
