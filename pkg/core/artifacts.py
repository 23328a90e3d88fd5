#!/usr/bin/env python3
"""
Files exchanged between CLI commands.

Every artifact carries provenance {tool_version, seed, config_hash}: JSON files
under a "provenance" key, CSV files as a leading '#' comment line.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, Iterator, List, Optional, TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.alert_model import encode_dataset
from core.checkpoint import provenance_comment
from core.errors import MissingArtifactError
from core.models import FEATURES, EncodedDataset, FeatureSpace, ProcessedAlert

logger = logging.getLogger(__name__)

INDEX_COLUMNS = ("a", "d", "s", "t")


def features_path(output_dir: str, target_ip: str) -> str:
    return os.path.join(output_dir, f"{target_ip}.features.json")


def alerts_path(output_dir: str, target_ip: str) -> str:
    return os.path.join(output_dir, f"{target_ip}.alerts.csv")


def model_prefix(output_dir: str, target_ip: str, variant: str) -> str:
    """Common path prefix of the checkpoint, training log and evaluation outputs of one model."""
    return os.path.join(output_dir, f"{target_ip}.{variant}")


def write_json(document: Dict[str, Any], path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2)
        handle.write("\n")
    return path


def open_csv_for_write(path: str, provenance: Optional[Dict[str, Any]]) -> TextIO:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    handle = open(path, "w", encoding="utf-8", newline="")
    if provenance:
        handle.write(provenance_comment(provenance))
    return handle


def _data_lines(handle: TextIO) -> Iterator[str]:
    for line in handle:
        if not line.startswith("#"):
            yield line


def read_csv_rows(path: str) -> List[Dict[str, str]]:
    """DictReader rows of an artifact CSV, skipping provenance comment lines."""
    if not os.path.exists(path):
        raise MissingArtifactError(f"Artifact {path} does not exist")
    with open(path, "r", encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(_data_lines(handle)))


def write_feature_space(fs: FeatureSpace, path: str, provenance: Optional[Dict[str, Any]] = None) -> str:
    document = fs.model_dump(mode="json")
    if provenance:
        document["provenance"] = provenance
    return write_json(document, path)


def read_feature_space(path: str) -> FeatureSpace:
    if not os.path.exists(path):
        raise MissingArtifactError(f"Feature space {path} does not exist")
    with open(path, "r", encoding="utf-8") as handle:
        document = json.load(handle)
    document.pop("provenance", None)
    try:
        return FeatureSpace.model_validate(document)
    except ValidationError as e:
        raise MissingArtifactError(f"Feature space {path} is invalid: {e}") from e


def write_encoded_dataset(dataset: EncodedDataset, path: str, provenance: Optional[Dict[str, Any]] = None) -> str:
    """Stores the index form of the dataset; the one-hot rows are rebuilt on load."""
    with open_csv_for_write(path, provenance) as handle:
        writer = csv.writer(handle)
        writer.writerow(INDEX_COLUMNS)
        writer.writerows(dataset.source_alerts)
    return path


def read_encoded_dataset(fs: FeatureSpace, path: str) -> EncodedDataset:
    rows = read_csv_rows(path)
    alerts = [ProcessedAlert(*(int(row[c]) for c in INDEX_COLUMNS)) for row in rows]
    return encode_dataset(alerts, fs)


def load_target(output_dir: str, target_ip: str) -> EncodedDataset:
    fs = read_feature_space(features_path(output_dir, target_ip))
    return read_encoded_dataset(fs, alerts_path(output_dir, target_ip))


def discover_targets(output_dir: str) -> List[str]:
    """Target IPs with a feature-space artifact in output_dir, sorted."""
    if not os.path.isdir(output_dir):
        raise MissingArtifactError(f"Output directory {output_dir} does not exist")
    suffix = ".features.json"
    return sorted(name[:-len(suffix)] for name in os.listdir(output_dir) if name.endswith(suffix))


def write_decoded_alerts(alerts: np.ndarray, fs: FeatureSpace, path: str,
                         provenance: Optional[Dict[str, Any]] = None) -> str:
    """Decoded alerts as signature,service,src_ip,time_bin rows."""
    with open_csv_for_write(path, provenance) as handle:
        writer = csv.writer(handle)
        writer.writerow(["signature", "service", "src_ip", "time_bin"])
        for row in np.asarray(alerts):
            writer.writerow([fs.vocab(f)[int(i)] for f, i in zip(FEATURES, row)])
    return path


class ScoreEntry(BaseModel):
    features: List[str]
    g: float = Field(..., ge=0, le=1)
    std: float = Field(..., ge=0)


class ConditionalEntropyEntry(BaseModel):
    y: str
    x: List[str]
    weighted: float
    normalized: float
    generated_weighted: float
    generated_normalized: float


class JointEntropyEntry(BaseModel):
    features: List[str]
    value: float
    normalized: float
    generated_value: float
    generated_normalized: float


class ModeCoverageEntry(BaseModel):
    gt_unique: int
    covered: int
    dropped: int
    noisy: int
    pct_dropped: float
    noise_ratio: float
    covered_mass: float
    noisy_mass: float
    dropped_modes: List[List[str]]


class StageEntry(BaseModel):
    stage: str
    ground_truth: float
    generated: float
    difference: float


class StageComparisonEntry(BaseModel):
    stages: List[StageEntry]
    total_variation: float


class FidelityReport(BaseModel):
    """Evaluation of one trained model against its target's ground truth."""
    model_config = ConfigDict(extra="forbid")

    target_ip: str
    variant: str
    n_ground_truth: int
    n_generated: int
    ce_normalizer: str
    scores: List[ScoreEntry]
    conditional_entropy: List[ConditionalEntropyEntry]
    joint_entropy: List[JointEntropyEntry]
    mode_coverage: ModeCoverageEntry
    stages: StageComparisonEntry
    provenance: Optional[Dict[str, Any]] = None


def write_report(report: FidelityReport, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(report.model_dump_json(indent=2))
        handle.write("\n")
    return path


def read_report(path: str) -> FidelityReport:
    if not os.path.exists(path):
        raise MissingArtifactError(f"Report {path} does not exist")
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return FidelityReport.model_validate_json(handle.read())
        except ValidationError as e:
            raise MissingArtifactError(f"Report {path} does not match the report schema: {e}") from e
