#!/usr/bin/env python3

import csv
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from core.errors import EmptyDatasetError
from core.models import FeatureSpace, ProcessedAlert

logger = logging.getLogger(__name__)

DEFAULT_STAGE_RULES = os.path.join(os.path.dirname(__file__), "data", "stage_rules.csv")

# Spelling kept as published so reports stay greppable.
STAGES: Tuple[str, ...] = (
    "IP Scan",
    "Service Scan",
    "Targeted Scan",
    "Social Engineering",
    "Surfing",
    "Specific Exploits",
    "Escalate Privledges",
    "Zero Day",
    "Malware Injection",
    "Degrade Operations",
    "Data Exfiltration",
)
UNKNOWN_STAGE = "Unknown"


@dataclass(frozen=True)
class StageRule:
    pattern: str
    match_type: Literal["exact", "substring"]
    stage: str


@dataclass(frozen=True)
class StageTable:
    """
    Signature to attack-stage rules.

    Exact rules win over substring rules. Among matching substring rules the
    longest pattern wins, then the earliest in file order.
    """
    rules: Tuple[StageRule, ...]
    stages: Tuple[str, ...] = STAGES + (UNKNOWN_STAGE,)
    _exact: Dict[str, str] = field(init=False, repr=False, compare=False)
    _substring: Tuple[StageRule, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        exact: Dict[str, str] = {}
        for rule in self.rules:
            if rule.stage not in self.stages:
                raise ValueError(f"Unknown attack stage {rule.stage!r} for pattern {rule.pattern!r}")
            if rule.match_type not in ("exact", "substring"):
                raise ValueError(f"Unknown match type {rule.match_type!r} for pattern {rule.pattern!r}")
            if rule.match_type == "exact":
                exact.setdefault(rule.pattern, rule.stage)
        ordered = sorted(
            (r for r in self.rules if r.match_type == "substring"),
            key=lambda r: -len(r.pattern),
        )
        object.__setattr__(self, "_exact", exact)
        object.__setattr__(self, "_substring", tuple(ordered))


def load_stage_table(path: Optional[str] = None) -> StageTable:
    """Reads a rule CSV with columns pattern,match_type,stage; the bundled starter set when path is None."""
    path = path or DEFAULT_STAGE_RULES
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rules = [
            StageRule(row["pattern"], row["match_type"].strip().lower(), row["stage"].strip())
            for row in csv.DictReader(handle)
        ]
    logger.debug(f"Loaded {len(rules)} stage rules from {path}")
    return StageTable(tuple(rules))


def map_signature(signature: str, table: StageTable) -> str:
    if signature in table._exact:
        return table._exact[signature]
    for rule in table._substring:
        if rule.pattern in signature:
            return rule.stage
    return UNKNOWN_STAGE


@dataclass(frozen=True)
class StageDistribution:
    proportions: Dict[str, float]
    total: int


def stage_distribution(signatures: Sequence[str], table: StageTable) -> StageDistribution:
    """
    Empirical attack-stage proportions of a set of alert signatures.

    Args:
        signatures: One signature string per alert
        table: Stage rules

    Returns:
        StageDistribution listing every stage of the table, zero proportions included
    """
    if not signatures:
        raise EmptyDatasetError("No alerts to map to attack stages")
    counts = Counter(map_signature(signature, table) for signature in signatures)
    total = len(signatures)
    return StageDistribution(
        proportions={stage: counts.get(stage, 0) / total for stage in table.stages},
        total=total,
    )


def signatures_of(alerts: Sequence[ProcessedAlert], fs: FeatureSpace) -> List[str]:
    vocab = fs.vocab_A
    return [vocab[int(alert[0])] for alert in alerts]


@dataclass(frozen=True)
class StageComparison:
    differences: Dict[str, float]
    total_variation: float


def compare_distributions(gt: StageDistribution, gen: StageDistribution) -> StageComparison:
    """Per-stage absolute differences and half their sum (total variation distance)."""
    stages = list(gt.proportions)
    stages += [stage for stage in gen.proportions if stage not in gt.proportions]
    differences = {
        stage: abs(gt.proportions.get(stage, 0.0) - gen.proportions.get(stage, 0.0))
        for stage in stages
    }
    return StageComparison(differences=differences, total_variation=0.5 * sum(differences.values()))
