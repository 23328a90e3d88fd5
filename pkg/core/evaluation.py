#!/usr/bin/env python3

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.alert_model import to_values
from core.artifacts import (
    ConditionalEntropyEntry,
    FidelityReport,
    JointEntropyEntry,
    ModeCoverageEntry,
    ScoreEntry,
    StageComparisonEntry,
    StageEntry,
)
from core.gan import ModelCheckpoint, sample_array
from core.metrics import (
    ConditionalEntropyResult,
    DependencyGraph,
    IntersectionScore,
    Normalizer,
    TupleHistogram,
    all_mtuple_scores,
    build_histogram,
    conditional_entropy_table,
    dependency_graph,
    joint_entropy_table,
    mode_coverage,
)
from core.models import FEATURES, EncodedDataset, ProcessedAlert
from core.stages import StageTable, compare_distributions, signatures_of, stage_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Evaluation:
    report: FidelityReport
    graph: DependencyGraph
    gt_histogram: TupleHistogram
    generated_histogram: TupleHistogram
    generated: np.ndarray


def scores_from_report(report: FidelityReport) -> List[IntersectionScore]:
    return [
        IntersectionScore(features=tuple(entry.features), g_score=entry.g, stddev=entry.std, n_resamples=0)
        for entry in report.scores
    ]


def entropy_rows_from_report(
        report: FidelityReport,
) -> Tuple[List[ConditionalEntropyResult], List[ConditionalEntropyResult]]:
    """(ground-truth rows, generated rows) of a report's conditional-entropy table."""
    gt_rows, gen_rows = [], []
    for entry in report.conditional_entropy:
        gt_rows.append(ConditionalEntropyResult(entry.y, tuple(entry.x), entry.weighted, entry.normalized, 0))
        gen_rows.append(ConditionalEntropyResult(
            entry.y, tuple(entry.x), entry.generated_weighted, entry.generated_normalized, 0))
    return gt_rows, gen_rows


def evaluate_target(
        ground_truth: EncodedDataset,
        checkpoint: ModelCheckpoint,
        stage_table: StageTable,
        n_resamples: int = 1000,
        seed: int = 0,
        ce_normalizer: Normalizer = "joint",
        graph_threshold: float = 0.05,
        provenance: Optional[Dict[str, Any]] = None,
) -> Evaluation:
    """
    Runs every fidelity metric of one model against its target's ground truth.

    Intersection scores come from n_resamples generated sets of ground-truth
    size; entropies, mode coverage and stage proportions from one further
    generated set of the same size.

    Args:
        ground_truth: Encoded alerts of the target
        checkpoint: Trained model for that target
        stage_table: Signature to attack-stage rules
        n_resamples: Bootstrap resamples for the intersection scores
        seed: Seed of all sampling
        ce_normalizer: "joint" or "target"
        graph_threshold: Score drop marking a lost dependency
        provenance: Recorded in the report

    Returns:
        Evaluation holding the report, the dependency graph and the 4-tuple histograms
    """
    fs = checkpoint.feature_space
    gt = ground_truth.index_array()
    n = gt.shape[0]

    scores = all_mtuple_scores(gt, checkpoint, n_resamples=n_resamples, seed=seed)
    generated = sample_array(checkpoint.generator, n, np.random.default_rng(seed + 1))

    gt_ce = conditional_entropy_table(gt, ce_normalizer)
    gen_ce = conditional_entropy_table(generated, ce_normalizer)
    gt_je = joint_entropy_table(gt)
    gen_je = joint_entropy_table(generated)
    coverage = mode_coverage(gt, generated)

    gt_stages = stage_distribution(signatures_of(ground_truth.source_alerts, fs), stage_table)
    gen_stages = stage_distribution(signatures_of(generated, fs), stage_table)
    stage_diff = compare_distributions(gt_stages, gen_stages)

    report = FidelityReport(
        target_ip=fs.target_ip,
        variant=checkpoint.config.variant,
        n_ground_truth=n,
        n_generated=int(generated.shape[0]),
        ce_normalizer=ce_normalizer,
        scores=[ScoreEntry(features=list(s.features), g=s.g_score, std=s.stddev) for s in scores],
        conditional_entropy=[
            ConditionalEntropyEntry(
                y=g.target_feature,
                x=list(g.condition_features),
                weighted=g.weighted_value,
                normalized=g.normalized_value,
                generated_weighted=s.weighted_value,
                generated_normalized=s.normalized_value,
            )
            for g, s in zip(gt_ce, gen_ce)
        ],
        joint_entropy=[
            JointEntropyEntry(
                features=list(g.features),
                value=g.value,
                normalized=g.normalized,
                generated_value=s.value,
                generated_normalized=s.normalized,
            )
            for g, s in zip(gt_je, gen_je)
        ],
        mode_coverage=ModeCoverageEntry(
            gt_unique=coverage.gt_unique,
            covered=len(coverage.covered),
            dropped=len(coverage.dropped),
            noisy=len(coverage.noisy),
            pct_dropped=coverage.pct_dropped,
            noise_ratio=coverage.noise_ratio,
            covered_mass=coverage.covered_mass,
            noisy_mass=coverage.noisy_mass,
            dropped_modes=[list(to_values(ProcessedAlert(*mode), fs)) for mode in sorted(coverage.dropped)],
        ),
        stages=StageComparisonEntry(
            stages=[
                StageEntry(
                    stage=stage,
                    ground_truth=gt_stages.proportions.get(stage, 0.0),
                    generated=gen_stages.proportions.get(stage, 0.0),
                    difference=difference,
                )
                for stage, difference in stage_diff.differences.items()
            ],
            total_variation=stage_diff.total_variation,
        ),
        provenance=provenance,
    )
    logger.info(
        f"{fs.target_ip} {checkpoint.config.variant}: 4-tuple G={scores[-1].g_score:.3f}, "
        f"{len(coverage.dropped)}/{coverage.gt_unique} modes dropped, stage TV={stage_diff.total_variation:.3f}"
    )
    return Evaluation(
        report=report,
        graph=dependency_graph(scores, graph_threshold),
        gt_histogram=build_histogram(gt, FEATURES),
        generated_histogram=build_histogram(generated, FEATURES),
        generated=generated,
    )
