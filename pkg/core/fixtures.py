#!/usr/bin/env python3
"""
Synthetic alert corpora with planted dependency structure and closed-form truth.

A PlantedSpec defines a joint distribution over (A, D, S, T) as a chain in
feature order: A has its own marginal, and each later feature is uniform,
follows fixed categorical probabilities, or is a deterministic function of an
earlier feature. Rare modes are then mixed in with their target probabilities.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from itertools import combinations
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.stats import entropy

from core.errors import SpecError
from core.models import FEATURES, FeatureSpace, ProcessedAlert
from core.parsers.base_parser import parse_timestamp
from core.preprocess import (
    ServiceTable,
    TimeBinningParams,
    assign_time_bin,
    bin_labels,
    compute_time_bins,
    load_service_table,
)
from core.stages import StageDistribution, StageTable, map_signature

logger = logging.getLogger(__name__)

# 2017-11-04T10:00:00Z
FIXTURE_START = 1509789600.0

SIGNATURE_PREFIXES: Tuple[str, ...] = (
    "ET SCAN Nmap Scripting Engine",
    "GPL ICMP_INFO PING",
    "ET WEB_SERVER Script tag in URI",
    "ET EXPLOIT Possible overflow",
    "ET POLICY Outgoing Basic Auth",
    "ET TROJAN Generic beacon",
    "ET INFO Session Traversal",
    "ET SCAN Potential SSH Scan",
    "ET DOS Possible flood",
    "ET ATTACK_RESPONSE Output of id command",
)


class DependencyRule(BaseModel):
    """How one of D, S, T is drawn given the features before it."""
    model_config = ConfigDict(extra="forbid")

    feature: Literal["D", "S", "T"]
    kind: Literal["uniform", "categorical", "deterministic"]
    parent: Optional[Literal["A", "D", "S"]] = None
    mapping: Optional[List[int]] = Field(None, description="Child value per parent value; parent % size when omitted")
    probabilities: Optional[List[float]] = None


class RareMode(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Tuple[int, int, int, int]
    probability: float = Field(..., gt=0, lt=1)


class PlantedSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vocab_sizes: Tuple[int, int, int, int]
    a_probabilities: Optional[List[float]] = Field(None, description="Marginal of A; uniform when omitted")
    rules: List[DependencyRule] = Field(default_factory=list, description="Features without a rule are uniform")
    rare_modes: List[RareMode] = Field(default_factory=list)
    n_alerts: int = Field(3000, ge=1)
    seed: int = 0
    target_ip: str = "10.0.0.22"
    signatures: Optional[List[str]] = None


def load_planted_spec(path: str) -> PlantedSpec:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return PlantedSpec.model_validate_json(handle.read())
    except ValidationError as e:
        raise SpecError(f"Invalid planted spec {path}: {e}") from e


def _check_probabilities(probabilities: Sequence[float], size: int, what: str) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape != (size,):
        raise SpecError(f"{what}: expected {size} probabilities, got {len(probabilities)}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise SpecError(f"{what}: probabilities must be non-negative and sum to 1")
    return p


def _axis_shape(axes: Dict[int, int]) -> Tuple[int, ...]:
    return tuple(axes.get(i, 1) for i in range(len(FEATURES)))


def joint_distribution(spec: PlantedSpec) -> np.ndarray:
    """
    Exact joint probability tensor of shape vocab_sizes.

    Raises:
        SpecError: when the spec is inconsistent
    """
    sizes = spec.vocab_sizes
    if any(size < 1 for size in sizes):
        raise SpecError(f"Vocabulary sizes must be positive, got {sizes}")

    if spec.a_probabilities is None:
        p_a = np.full(sizes[0], 1.0 / sizes[0])
    else:
        p_a = _check_probabilities(spec.a_probabilities, sizes[0], "A marginal")
    joint = p_a.reshape(_axis_shape({0: sizes[0]}))

    rules: Dict[str, DependencyRule] = {}
    for rule in spec.rules:
        if rule.feature in rules:
            raise SpecError(f"Two rules for feature {rule.feature}")
        rules[rule.feature] = rule

    for axis, feature in enumerate(FEATURES[1:], start=1):
        size = sizes[axis]
        rule = rules.get(feature)
        if rule is None or rule.kind == "uniform":
            factor = np.full(_axis_shape({axis: size}), 1.0 / size)
        elif rule.kind == "categorical":
            if rule.probabilities is None:
                raise SpecError(f"Categorical rule for {feature} needs probabilities")
            factor = _check_probabilities(rule.probabilities, size, f"{feature} rule").reshape(_axis_shape({axis: size}))
        else:
            if rule.parent is None or FEATURES.index(rule.parent) >= axis:
                raise SpecError(f"Deterministic rule for {feature} needs an earlier parent feature")
            parent_axis = FEATURES.index(rule.parent)
            parent_size = sizes[parent_axis]
            mapping = rule.mapping if rule.mapping is not None else [v % size for v in range(parent_size)]
            if len(mapping) != parent_size or any(not 0 <= v < size for v in mapping):
                raise SpecError(f"Mapping for {feature} must send each of {parent_size} parent values into [0, {size})")
            table = np.zeros((parent_size, size))
            table[np.arange(parent_size), mapping] = 1.0
            factor = table.reshape(_axis_shape({parent_axis: parent_size, axis: size}))
        joint = joint * factor

    rare_total = sum(rare.probability for rare in spec.rare_modes)
    if rare_total >= 1.0:
        raise SpecError(f"Rare modes take probability {rare_total} >= 1")
    joint = (1.0 - rare_total) * joint
    for rare in spec.rare_modes:
        if any(not 0 <= v < size for v, size in zip(rare.mode, sizes)):
            raise SpecError(f"Rare mode {rare.mode} is outside vocab sizes {sizes}")
        if rare.probability * spec.n_alerts < 1.0:
            raise SpecError(f"Rare mode {rare.mode} at p={rare.probability} is not achievable with n={spec.n_alerts}")
        joint[rare.mode] += rare.probability
    return joint


@dataclass(frozen=True)
class AnalyticTruth:
    """Closed-form statistics of a planted joint distribution, entropies in bits."""
    joint: np.ndarray

    def _marginal(self, features: Sequence[str]) -> np.ndarray:
        keep = [FEATURES.index(f) for f in features]
        drop = tuple(i for i in range(len(FEATURES)) if i not in keep)
        marginal = self.joint.sum(axis=drop)
        # sum keeps axes in feature order; reorder to the requested order
        order = np.argsort(np.argsort(keep))
        return np.transpose(marginal, order) if marginal.ndim > 1 else marginal

    def marginal(self, feature: str) -> np.ndarray:
        return self._marginal([feature])

    def joint_entropy(self, features: Sequence[str]) -> Tuple[float, float]:
        """(entropy, entropy / log2 of support size) of the marginal over features."""
        p = self._marginal(features).ravel()
        p = p[p > 0]
        value = float(entropy(p, base=2))
        return value, (0.0 if p.size <= 1 else value / math.log2(p.size))

    def conditional_entropy(self, y: str, x: Sequence[str]) -> Tuple[float, float]:
        """(H(Y | X), normalized by log2 of the (X, Y) support size)."""
        joint_value, _ = self.joint_entropy(tuple(x) + (y,))
        condition_value, _ = self.joint_entropy(tuple(x))
        support = int(np.count_nonzero(self._marginal(tuple(x) + (y,))))
        value = max(joint_value - condition_value, 0.0)
        return value, (0.0 if support <= 1 else value / math.log2(support))

    @property
    def modes(self) -> frozenset:
        return frozenset(tuple(int(v) for v in index) for index in np.argwhere(self.joint > 0))

    def stage_distribution(self, fs: FeatureSpace, table: StageTable) -> StageDistribution:
        p_a = self.marginal("A")
        proportions = {stage: 0.0 for stage in table.stages}
        for signature, p in zip(fs.vocab_A, p_a):
            proportions[map_signature(signature, table)] += float(p)
        return StageDistribution(proportions=proportions, total=0)

    def to_json(self) -> Dict:
        joint_rows = []
        for size in range(1, len(FEATURES) + 1):
            for subset in combinations(FEATURES, size):
                value, normalized = self.joint_entropy(subset)
                joint_rows.append({"features": list(subset), "value": value, "normalized": normalized})
        conditional_rows = []
        for size in range(1, len(FEATURES)):
            for y in FEATURES:
                for x in combinations([f for f in FEATURES if f != y], size):
                    value, normalized = self.conditional_entropy(y, x)
                    conditional_rows.append({"y": y, "x": list(x), "weighted": value, "normalized": normalized})
        return {
            "modes": sorted(list(mode) for mode in self.modes),
            "joint_entropy": joint_rows,
            "conditional_entropy": conditional_rows,
        }


@dataclass(frozen=True)
class PlantedCorpus:
    alerts: List[ProcessedAlert]
    truth: AnalyticTruth
    feature_space: FeatureSpace


def fixture_feature_space(spec: PlantedSpec, table: Optional[ServiceTable] = None) -> FeatureSpace:
    """
    Real-world names for the planted indices, sorted so index i is the i-th name.

    Signatures reuse common Suricata prefixes, services come from the service
    table and source IPs from 172.16.0.0/16.
    """
    table = table or load_service_table()
    n_a, n_d, n_s, n_t = spec.vocab_sizes

    if spec.signatures is not None:
        if len(set(spec.signatures)) != n_a:
            raise SpecError(f"Need {n_a} distinct signatures, got {len(set(spec.signatures))}")
        signatures = sorted(spec.signatures)
    else:
        signatures = sorted(
            f"{SIGNATURE_PREFIXES[i % len(SIGNATURE_PREFIXES)]} fixture signature {i:03d}" for i in range(n_a)
        )

    services = sorted(s for s in table.services() if s != "icmp")
    if n_d > len(services):
        raise SpecError(f"|D|={n_d} exceeds the {len(services)} services in the service table")

    sources = sorted(f"172.16.{i // 200}.{i % 200 + 10}" for i in range(n_s))
    try:
        return FeatureSpace(
            target_ip=spec.target_ip,
            vocab_A=tuple(signatures),
            vocab_D=tuple(services[:n_d]),
            vocab_S=tuple(sources),
            vocab_T=bin_labels(n_t),
        )
    except ValidationError as e:
        raise SpecError(f"Fixture feature space is invalid: {e}") from e


def generate_corpus(spec: PlantedSpec, table: Optional[ServiceTable] = None) -> PlantedCorpus:
    """
    Samples n alerts from the planted distribution.

    Args:
        spec: Planted structure
        table: Service table naming the D values

    Returns:
        PlantedCorpus with the alerts, the analytic truth and a matching FeatureSpace
    """
    joint = joint_distribution(spec)
    fs = fixture_feature_space(spec, table)
    rng = np.random.default_rng(spec.seed)
    flat = joint.ravel()
    draws = rng.choice(flat.size, size=spec.n_alerts, p=flat / flat.sum())
    indices = np.stack(np.unravel_index(draws, joint.shape), axis=1)
    alerts = [ProcessedAlert(*map(int, row)) for row in indices]
    logger.info(
        f"Planted corpus: {len(alerts)} alerts over {len(Counter(alerts))} observed modes "
        f"({int(np.count_nonzero(joint))} planted)"
    )
    return PlantedCorpus(alerts=alerts, truth=AnalyticTruth(joint), feature_space=fs)


def _rfc3339(timestamp: float) -> str:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f+0000")


def _burst_timestamps(
        corpus: PlantedCorpus,
        seed: int,
        start: float,
        burst_spacing: float,
        burst_width: float,
) -> List[float]:
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, burst_width, size=len(corpus.alerts))
    return [round(start + alert.t * burst_spacing + float(offset), 6) for alert, offset in zip(corpus.alerts, offsets)]


def corpus_to_json_lines(
        corpus: PlantedCorpus,
        table: Optional[ServiceTable] = None,
        seed: int = 0,
        start: float = FIXTURE_START,
        burst_spacing: float = 3600.0,
        burst_width: float = 600.0,
) -> List[str]:
    """
    Renders the corpus as EVE-style alert lines.

    Time bin t becomes a burst of alerts starting at start + t * burst_spacing
    and spread over burst_width seconds, so quiet gaps separate the bins.
    Destination ports are the first port of each service in the table.

    Returns:
        One JSON document per alert, ordered by timestamp
    """
    table = table or load_service_table()
    fs = corpus.feature_space
    timestamps = _burst_timestamps(corpus, seed, start, burst_spacing, burst_width)

    events = []
    for alert, timestamp in zip(corpus.alerts, timestamps):
        port, protocol = table.port_for(fs.vocab_D[alert.d])
        events.append((timestamp, {
            "timestamp": _rfc3339(timestamp),
            "event_type": "alert",
            "src_ip": fs.vocab_S[alert.s],
            "dest_ip": fs.target_ip,
            "dest_port": port,
            "proto": protocol.upper(),
            "alert": {"signature": fs.vocab_A[alert.a]},
        }))
    events.sort(key=lambda item: item[0])
    return [json.dumps(event, sort_keys=True) for _, event in events]


def rebin_as_preprocessed(
        corpus: PlantedCorpus,
        seed: int = 0,
        start: float = FIXTURE_START,
        burst_spacing: float = 3600.0,
        burst_width: float = 600.0,
        params: Optional[TimeBinningParams] = None,
) -> PlantedCorpus:
    """
    The corpus as preprocessing sees its JSON-lines rendering.

    The time cutter only keeps stages holding min_stage_fraction of the alerts,
    so neighbouring planted bursts can end up in one time bin. Each planted
    time value is mapped to the bin its burst falls in, and the alerts, the
    analytic truth and the feature space are merged accordingly. Arguments
    other than params must match the corpus_to_json_lines call.

    Returns:
        PlantedCorpus whose T values are the preprocessed time-bin indices
    """
    # Round-trip through the rendered text so the cuts equal the ones preprocess computes.
    timestamps = [parse_timestamp(_rfc3339(ts))
                  for ts in _burst_timestamps(corpus, seed, start, burst_spacing, burst_width)]
    binning = compute_time_bins(timestamps, params)

    joint = corpus.truth.joint
    n_planted = joint.shape[3]
    mapping = [assign_time_bin(start + t * burst_spacing + burst_width / 2, binning) for t in range(n_planted)]
    merged = np.zeros(joint.shape[:3] + (len(binning.bin_labels),))
    for t, b in enumerate(mapping):
        merged[..., b] += joint[..., t]

    alerts = [alert._replace(t=assign_time_bin(ts, binning)) for alert, ts in zip(corpus.alerts, timestamps)]
    fs = corpus.feature_space.model_copy(
        update={"vocab_T": binning.bin_labels, "time_cut_points": binning.cut_points}
    )
    logger.info(f"Planted {n_planted} time values fall into {len(binning.bin_labels)} preprocessed time bin(s)")
    return PlantedCorpus(alerts=alerts, truth=AnalyticTruth(merged), feature_space=fs)


def competition_scale_spec(seed: int = 0, n_alerts: int = 3000, rare_probability: Optional[float] = None) -> PlantedSpec:
    """
    Planted spec at the scale of a real competition target.

    34 signatures with a skewed marginal; service, source and time bin are
    deterministic functions of the signature, giving 34 modes; every service,
    source and time value is used. An optional rare mode off that support is
    mixed in with rare_probability.

    The 30 planted time values are far more than the time cutter keeps, see
    rebin_as_preprocessed.
    """
    sizes = (34, 21, 6, 30)
    weights = 1.0 / np.arange(1, sizes[0] + 1) ** 0.8
    rules = [
        DependencyRule(feature="D", kind="deterministic", parent="A"),
        DependencyRule(feature="S", kind="deterministic", parent="A", mapping=[(5 * a) % sizes[2] for a in range(sizes[0])]),
        DependencyRule(feature="T", kind="deterministic", parent="A", mapping=[(7 * a) % sizes[3] for a in range(sizes[0])]),
    ]
    rare = []
    if rare_probability is not None:
        rare.append(RareMode(mode=(sizes[0] - 1, 0, 1, 29), probability=rare_probability))
    return PlantedSpec(
        vocab_sizes=sizes,
        a_probabilities=list(weights / weights.sum()),
        rules=rules,
        rare_modes=rare,
        n_alerts=n_alerts,
        seed=seed,
    )
