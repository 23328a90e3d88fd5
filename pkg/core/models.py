#!/usr/bin/env python3

import hashlib
import ipaddress
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core import __version__

# Generated features, in one-hot segment order.
FEATURES: Tuple[str, ...] = ("A", "D", "S", "T")

FEATURE_NAMES: Dict[str, str] = {
    "A": "signature",
    "D": "service",
    "S": "src_ip",
    "T": "time_bin",
}

Protocol = Literal["tcp", "udp", "icmp", "other"]
Variant = Literal["wgan_gp", "wgan_gpmi"]


def _check_ipv4(value: str) -> str:
    ipaddress.IPv4Address(value)
    return value


class AlertRecord(BaseModel):
    """One NIDS alert as read from a sensor log."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    timestamp: float = Field(..., description="Seconds since the Unix epoch")
    src_ip: str = Field(..., description="Attacker-side IPv4 address")
    dst_ip: str = Field(..., description="Target IPv4 address")
    dst_port: int = Field(..., ge=0, le=65535, description="Destination port")
    protocol: Protocol = Field(..., description="Transport protocol")
    signature: str = Field(..., min_length=1, description="Alert signature text")
    team: Optional[str] = Field(None, description="Competition team that triggered the alert, when known")

    @field_validator("timestamp")
    @classmethod
    def _finite_timestamp(cls, value: float) -> float:
        if not math.isfinite(value) or value < 0:
            raise ValueError("timestamp must be finite and non-negative")
        return value

    @field_validator("src_ip", "dst_ip")
    @classmethod
    def _ipv4(cls, value: str) -> str:
        return _check_ipv4(value)


class AlertFeatures(NamedTuple):
    """Categorical values of one alert after port and time reduction."""
    dst_ip: str
    signature: str
    service: str
    src_ip: str
    time_bin: str


class ProcessedAlert(NamedTuple):
    """Vocabulary indices of the four generated features."""
    a: int
    d: int
    s: int
    t: int


class FeatureSpace(BaseModel):
    """
    Per-target vocabularies of the four features and their one-hot layout.

    Field order is the JSON layout written next to every encoded dataset.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    target_ip: str
    vocab_A: Tuple[str, ...]
    vocab_D: Tuple[str, ...]
    vocab_S: Tuple[str, ...]
    vocab_T: Tuple[str, ...]
    time_cut_points: Tuple[float, ...] = ()

    @field_validator("target_ip")
    @classmethod
    def _ipv4(cls, value: str) -> str:
        return _check_ipv4(value)

    @field_validator("vocab_A", "vocab_D", "vocab_S", "vocab_T")
    @classmethod
    def _sorted_unique(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if not value:
            raise ValueError("vocabulary must not be empty")
        if list(value) != sorted(set(value)):
            raise ValueError("vocabulary must be duplicate-free and sorted")
        return value

    def vocab(self, feature: str) -> Tuple[str, ...]:
        return getattr(self, f"vocab_{feature}")

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(self.vocab(f)) for f in FEATURES)

    @property
    def offsets(self) -> Tuple[int, ...]:
        starts = [0]
        for size in self.sizes[:-1]:
            starts.append(starts[-1] + size)
        return tuple(starts)

    @property
    def width(self) -> int:
        return sum(self.sizes)

    def segment(self, feature_index: int) -> slice:
        start = self.offsets[feature_index]
        return slice(start, start + self.sizes[feature_index])


@dataclass(frozen=True)
class EncodedDataset:
    """One-hot rows for a single target, with the alerts they encode."""
    feature_space: FeatureSpace
    rows: np.ndarray
    source_alerts: Tuple[ProcessedAlert, ...]

    def __len__(self) -> int:
        return len(self.source_alerts)

    def index_array(self) -> np.ndarray:
        return np.asarray(self.source_alerts, dtype=np.int64).reshape(-1, len(FEATURES))


@dataclass
class RawCorpus:
    """Alerts parsed from one log file, in file order."""
    alerts: List[AlertRecord]
    source_path: str
    parse_warnings: List[Tuple[int, str]] = field(default_factory=list)


class GanConfig(BaseModel):
    """Hyperparameters for WGAN-GP and WGAN-GPMI training."""
    model_config = ConfigDict(extra="forbid")

    variant: Variant = "wgan_gp"
    hidden_dim: int = Field(128, gt=0)
    batch_size: int = Field(100, gt=0)
    noise_dim: int = Field(64, gt=0)
    critic_ratio: int = Field(5, gt=0)
    epochs_wgan_gp: int = Field(200, gt=0)
    epochs_wgan_gpmi: int = Field(300, gt=0)
    epochs: Optional[int] = Field(None, gt=0, description="Overrides the variant's epoch count")
    lambda_gp: Optional[float] = Field(None, ge=0, description="Defaults to 0.1 (wgan_gp) or 0.4 (wgan_gpmi)")
    lr: float = Field(5e-5, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.8, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    seed: int = 0
    gp_point: Literal["interpolate", "noise"] = "interpolate"

    @model_validator(mode="after")
    def _variant_defaults(self) -> "GanConfig":
        if self.lambda_gp is None:
            self.lambda_gp = 0.1 if self.variant == "wgan_gp" else 0.4
        if self.epochs is None:
            self.epochs = self.epochs_wgan_gp if self.variant == "wgan_gp" else self.epochs_wgan_gpmi
        return self


class RunConfig(BaseModel):
    """Everything one CLI invocation needs; see config.load_config."""
    model_config = ConfigDict(extra="forbid")

    inputs: List[str] = Field(default_factory=list)
    format: Literal["json_lines", "csv"] = "json_lines"
    target_ip: Optional[str] = None
    team: Optional[str] = None
    min_alerts: int = Field(500, ge=1)
    service_table: Optional[str] = None
    stage_rules: Optional[str] = None
    ce_normalizer: Literal["joint", "target"] = "joint"
    n_resamples: int = Field(1000, ge=1)
    n_samples: int = Field(1000, ge=1)
    graph_threshold: float = Field(0.05, gt=0)
    seed: int = 0
    output_dir: str = "alertforge-out"
    gan: GanConfig = Field(default_factory=GanConfig)

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def provenance(self) -> Dict[str, object]:
        return {
            "tool_version": __version__,
            "seed": self.seed,
            "config_hash": self.config_hash(),
        }
