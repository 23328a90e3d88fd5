#!/usr/bin/env python3
"""
Fidelity metrics between ground-truth and generated alert sets.

Alerts are ProcessedAlert sequences or (n, 4) integer index arrays in
A, D, S, T column order. Feature subsets are tuples of feature letters.
"""

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, FrozenSet, List, Literal, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy.stats import entropy

from core.errors import EmptyDatasetError, MetricError
from core.gan import ModelCheckpoint, sample_array
from core.models import FEATURE_NAMES, FEATURES, FeatureSpace, ProcessedAlert

logger = logging.getLogger(__name__)

AlertArray = Union[np.ndarray, Sequence[ProcessedAlert]]
FeatureSubset = Tuple[str, ...]
Normalizer = Literal["joint", "target"]

EDGE_BLUE = "blue"
EDGE_RED = "red"
EDGE_PURPLE = "purple"


def canonical_subsets(min_size: int = 1) -> List[FeatureSubset]:
    """Nonempty subsets of A, D, S, T ordered by size, then lexicographically in feature order."""
    return [subset for size in range(min_size, len(FEATURES) + 1) for subset in combinations(FEATURES, size)]


def _columns(features: Sequence[str]) -> List[int]:
    if not features:
        raise MetricError("Feature subset must not be empty")
    if len(set(features)) != len(features) or any(f not in FEATURES for f in features):
        raise MetricError(f"Invalid feature subset {tuple(features)}")
    return [FEATURES.index(f) for f in features]


def as_index_array(alerts: AlertArray) -> np.ndarray:
    array = np.asarray(alerts, dtype=np.int64)
    if array.size == 0:
        raise EmptyDatasetError("No alerts to measure")
    if array.ndim != 2 or array.shape[1] != len(FEATURES):
        raise MetricError(f"Alerts must be an (n, {len(FEATURES)}) index array, got shape {array.shape}")
    return array


def _tuple_counts(array: np.ndarray, columns: List[int]) -> Tuple[np.ndarray, np.ndarray]:
    return np.unique(array[:, columns], axis=0, return_counts=True)


@dataclass(frozen=True)
class TupleHistogram:
    features: FeatureSubset
    counts: Dict[Tuple[int, ...], int]
    total: int


def build_histogram(alerts: AlertArray, features: Sequence[str]) -> TupleHistogram:
    """
    Counts value tuples of a feature subset.

    Args:
        alerts: Alerts to count
        features: Feature letters, e.g. ("A", "T")

    Returns:
        TupleHistogram keyed by index tuples in the given feature order
    """
    columns = _columns(features)
    array = as_index_array(alerts)
    keys, counts = _tuple_counts(array, columns)
    return TupleHistogram(
        features=tuple(features),
        counts={tuple(int(v) for v in key): int(count) for key, count in zip(keys, counts)},
        total=int(array.shape[0]),
    )


def histogram_intersection(P: TupleHistogram, Q: TupleHistogram) -> float:
    """Sum of per-tuple minima over the larger of the two totals."""
    if P.features != Q.features:
        raise MetricError(f"Histograms over different features {P.features} and {Q.features}")
    if P.total == 0 and Q.total == 0:
        raise MetricError("Intersection of two empty histograms is undefined")
    overlap = sum(min(count, Q.counts.get(key, 0)) for key, count in P.counts.items())
    return overlap / max(P.total, Q.total)


@dataclass(frozen=True)
class IntersectionScore:
    features: FeatureSubset
    g_score: float
    stddev: float
    n_resamples: int


def _bootstrap_scores(
        gt: AlertArray,
        checkpoint: ModelCheckpoint,
        subsets: Sequence[FeatureSubset],
        n_resamples: int,
        sample_size: Optional[int],
        seed: int,
) -> List[IntersectionScore]:
    if n_resamples < 1:
        raise MetricError("Need at least one resample")
    gt_array = as_index_array(gt)
    size = sample_size or gt_array.shape[0]
    gt_hists = [build_histogram(gt_array, subset) for subset in subsets]

    rng = np.random.default_rng(seed)
    scores = np.zeros((n_resamples, len(subsets)))
    for r in range(n_resamples):
        generated = sample_array(checkpoint.generator, size, rng)
        for j, subset in enumerate(subsets):
            scores[r, j] = histogram_intersection(gt_hists[j], build_histogram(generated, subset))

    ddof = 1 if n_resamples > 1 else 0
    means = scores.mean(axis=0)
    stds = scores.std(axis=0, ddof=ddof)
    return [
        IntersectionScore(features=tuple(subset), g_score=float(mean), stddev=float(std), n_resamples=n_resamples)
        for subset, mean, std in zip(subsets, means, stds)
    ]


def intersection_with_bootstrap(
        gt: AlertArray,
        checkpoint: ModelCheckpoint,
        features: Sequence[str],
        n_resamples: int = 1000,
        sample_size: Optional[int] = None,
        seed: int = 0,
) -> IntersectionScore:
    """
    Mean and standard deviation of the intersection score over independent generated sets.

    Args:
        gt: Ground-truth alerts
        checkpoint: Trained generator
        features: Feature subset to histogram
        n_resamples: Number of generated sets
        sample_size: Alerts per generated set; defaults to the ground-truth size
        seed: Seed of the sampling generator

    Returns:
        IntersectionScore
    """
    _columns(features)
    return _bootstrap_scores(gt, checkpoint, [tuple(features)], n_resamples, sample_size, seed)[0]


def all_mtuple_scores(
        gt: AlertArray,
        checkpoint: ModelCheckpoint,
        n_resamples: int = 1000,
        sample_size: Optional[int] = None,
        seed: int = 0,
) -> List[IntersectionScore]:
    """Bootstrap scores of all 15 feature subsets; every resample is shared across subsets."""
    scores = _bootstrap_scores(gt, checkpoint, canonical_subsets(), n_resamples, sample_size, seed)
    logger.info(f"Scored {len(scores)} feature subsets over {n_resamples} resamples")
    return scores


@dataclass(frozen=True)
class ConditionalEntropyResult:
    target_feature: str
    condition_features: FeatureSubset
    weighted_value: float
    normalized_value: float
    support: int


def _normalize(value: float, cardinality: int) -> float:
    return 0.0 if cardinality <= 1 else value / math.log2(cardinality)


def weighted_conditional_entropy(
        alerts: AlertArray,
        y: str,
        x: Sequence[str],
        normalizer: Normalizer = "joint",
) -> ConditionalEntropyResult:
    """
    Entropy of Y within each observed X tuple, averaged with the tuple frequencies as weights.

    Args:
        alerts: Alerts to measure
        y: Target feature
        x: Conditioning features, not containing y
        normalizer: "joint" divides by log2 of the number of observed (X, Y) tuples,
            "target" by log2 of the number of observed Y values

    Returns:
        ConditionalEntropyResult in bits
    """
    if y in x:
        raise MetricError(f"Target feature {y} is also a condition")
    x_columns = _columns(x)
    y_column = _columns([y])[0]
    array = as_index_array(alerts)
    total = array.shape[0]

    keys, counts = _tuple_counts(array, x_columns + [y_column])
    condition_totals: Dict[Tuple[int, ...], int] = defaultdict(int)
    for key, count in zip(keys, counts):
        condition_totals[tuple(key[:-1])] += int(count)

    value = 0.0
    for key, count in zip(keys, counts):
        value -= (count / total) * math.log2(count / condition_totals[tuple(key[:-1])])
    value = max(value, 0.0)

    if normalizer == "joint":
        cardinality = len(keys)
    elif normalizer == "target":
        cardinality = len(np.unique(array[:, y_column]))
    else:
        raise MetricError(f"Unknown conditional-entropy normalizer {normalizer!r}")

    return ConditionalEntropyResult(
        target_feature=y,
        condition_features=tuple(x),
        weighted_value=value,
        normalized_value=_normalize(value, cardinality),
        support=cardinality,
    )


def conditional_entropy_table(alerts: AlertArray, normalizer: Normalizer = "joint") -> List[ConditionalEntropyResult]:
    """Every (Y, X) pair with Y not in X: 28 rows ordered by |X|, then Y, then X."""
    rows = []
    for size in range(1, len(FEATURES)):
        for y in FEATURES:
            others = [f for f in FEATURES if f != y]
            for x in combinations(others, size):
                rows.append(weighted_conditional_entropy(alerts, y, x, normalizer))
    return rows


@dataclass(frozen=True)
class JointEntropyResult:
    features: FeatureSubset
    value: float
    normalized: float
    support: int


def normalized_joint_entropy(alerts: AlertArray, features: Sequence[str]) -> JointEntropyResult:
    """Plug-in joint entropy in bits, normalized by log2 of the observed support size."""
    columns = _columns(features)
    array = as_index_array(alerts)
    _, counts = _tuple_counts(array, columns)
    value = float(entropy(counts, base=2))
    return JointEntropyResult(
        features=tuple(features),
        value=value,
        normalized=_normalize(value, len(counts)),
        support=len(counts),
    )


def joint_entropy_table(alerts: AlertArray) -> List[JointEntropyResult]:
    return [normalized_joint_entropy(alerts, subset) for subset in canonical_subsets(min_size=2)]


@dataclass(frozen=True)
class ModeCoverage:
    features: FeatureSubset
    covered: FrozenSet[Tuple[int, ...]]
    dropped: FrozenSet[Tuple[int, ...]]
    noisy: FrozenSet[Tuple[int, ...]]
    gt_unique: int
    pct_dropped: float
    noise_ratio: float
    covered_mass: float
    noisy_mass: float


def mode_coverage(gt: AlertArray, gen: AlertArray, features: Sequence[str] = FEATURES) -> ModeCoverage:
    """
    Splits unique value tuples into covered, dropped (ground truth only) and noisy (generated only).

    covered_mass and noisy_mass are the fractions of generated alerts that land
    on covered and on noisy tuples.

    Args:
        gt: Ground-truth alerts
        gen: Generated alerts
        features: Feature subset defining a mode; the full 4-tuple by default

    Returns:
        ModeCoverage
    """
    gt_hist = build_histogram(gt, features)
    gen_hist = build_histogram(gen, features)
    gt_modes = frozenset(gt_hist.counts)
    gen_modes = frozenset(gen_hist.counts)
    covered = gt_modes & gen_modes
    noisy = gen_modes - gt_modes

    return ModeCoverage(
        features=tuple(features),
        covered=covered,
        dropped=gt_modes - gen_modes,
        noisy=noisy,
        gt_unique=len(gt_modes),
        pct_dropped=len(gt_modes - gen_modes) / len(gt_modes),
        noise_ratio=len(noisy) / len(gt_modes),
        covered_mass=sum(gen_hist.counts[m] for m in covered) / gen_hist.total,
        noisy_mass=sum(gen_hist.counts[m] for m in noisy) / gen_hist.total,
    )


@dataclass(frozen=True)
class UnionEdge:
    """Two m-subsets feeding the (m+1)-subset that is their union."""
    parents: Tuple[FeatureSubset, FeatureSubset]
    child: FeatureSubset
    drops: Tuple[float, float]
    color: str


def _label(subset: FeatureSubset) -> str:
    return ",".join(subset)


@dataclass(frozen=True)
class DependencyGraph:
    scores: Dict[FeatureSubset, float]
    unions: Tuple[UnionEdge, ...]
    threshold: float

    def edge_color(self, parent: Sequence[str], child: Sequence[str]) -> str:
        parent, child = tuple(parent), tuple(child)
        for union in self.unions:
            if union.child == child and parent in union.parents:
                return union.color
        raise KeyError(f"No edge {_label(parent)} -> {_label(child)}")

    def to_dot(self) -> str:
        lines = ["digraph intersections {", "  rankdir=LR;"]
        for subset, score in self.scores.items():
            lines.append(f'  "{_label(subset)}" [label="{_label(subset)}\\n{score:.3f}"];')
        for i, union in enumerate(self.unions):
            node = f"u{i}"
            lines.append(f'  "{node}" [shape=point];')
            for parent in union.parents:
                lines.append(f'  "{_label(parent)}" -> "{node}" [color={union.color}];')
            lines.append(f'  "{node}" -> "{_label(union.child)}" [color={union.color}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def dependency_graph(scores: Sequence[IntersectionScore], threshold: float = 0.05) -> DependencyGraph:
    """
    Colors every union of two m-subsets by how far the union's score drops below each parent.

    blue: neither parent drops by threshold or more; red: both do; purple: exactly one.
    The colour belongs to the union, so both parent edges into a child share it:
    a large drop from {X} to {X,Y} reads red only when {Y} also drops by the
    threshold, and purple otherwise.

    Args:
        scores: IntersectionScores of all 15 feature subsets
        threshold: Score drop that counts as a lost dependency

    Returns:
        DependencyGraph
    """
    by_subset = {tuple(score.features): score.g_score for score in scores}
    expected = canonical_subsets()
    if set(by_subset) != set(expected):
        missing = [_label(s) for s in expected if s not in by_subset]
        raise MetricError(f"Dependency graph needs all 15 subset scores; missing {missing}")

    unions = []
    for child in canonical_subsets(min_size=2):
        for left, right in combinations(combinations(child, len(child) - 1), 2):
            drops = (by_subset[left] - by_subset[child], by_subset[right] - by_subset[child])
            dropped = sum(drop >= threshold for drop in drops)
            color = EDGE_BLUE if dropped == 0 else EDGE_RED if dropped == 2 else EDGE_PURPLE
            unions.append(UnionEdge(parents=(left, right), child=child, drops=drops, color=color))

    return DependencyGraph(
        scores={subset: by_subset[subset] for subset in expected},
        unions=tuple(unions),
        threshold=threshold,
    )


@dataclass(frozen=True)
class ScoreComparison:
    features: FeatureSubset
    score_a: float
    score_b: float
    winner: Optional[str]


def compare_scores(
        scores_a: Sequence[IntersectionScore],
        scores_b: Sequence[IntersectionScore],
        margin: float = 0.05,
) -> List[ScoreComparison]:
    """Per subset, "a" or "b" when one model beats the other by at least margin, else None."""
    by_subset_b = {tuple(s.features): s.g_score for s in scores_b}
    rows = []
    for score in scores_a:
        features = tuple(score.features)
        if features not in by_subset_b:
            raise MetricError(f"Subset {_label(features)} missing from second score set")
        other = by_subset_b[features]
        winner = None
        if score.g_score - other >= margin:
            winner = "a"
        elif other - score.g_score >= margin:
            winner = "b"
        rows.append(ScoreComparison(features, score.g_score, other, winner))
    return rows


@dataclass(frozen=True)
class EntropyComparison:
    target_feature: str
    condition_features: FeatureSubset
    ground_truth: float
    generated: float
    within_tolerance: bool


def compare_entropies(
        gt_rows: Sequence[ConditionalEntropyResult],
        gen_rows: Sequence[ConditionalEntropyResult],
        tolerance: float = 0.10,
) -> List[EntropyComparison]:
    """Flags normalized conditional entropies within a relative tolerance of ground truth."""
    gen_by_key = {(r.target_feature, r.condition_features): r.normalized_value for r in gen_rows}
    rows = []
    for row in gt_rows:
        key = (row.target_feature, row.condition_features)
        if key not in gen_by_key:
            raise MetricError(f"Conditional entropy of {key[0]}|{_label(key[1])} missing from generated rows")
        generated = gen_by_key[key]
        within = abs(generated - row.normalized_value) <= tolerance * row.normalized_value + 1e-12
        rows.append(EntropyComparison(key[0], key[1], row.normalized_value, generated, within))
    return rows


def write_histogram_csv(histogram: TupleHistogram, fs: FeatureSpace, handle: TextIO) -> None:
    """Feature value columns followed by count, most frequent tuple first."""
    writer = csv.writer(handle)
    writer.writerow([FEATURE_NAMES[f] for f in histogram.features] + ["count"])
    ordered = sorted(histogram.counts.items(), key=lambda item: (-item[1], item[0]))
    for key, count in ordered:
        values = [fs.vocab(f)[index] for f, index in zip(histogram.features, key)]
        writer.writerow(values + [count])
