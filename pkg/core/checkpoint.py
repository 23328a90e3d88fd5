#!/usr/bin/env python3
"""Checkpoint JSON envelope and the per-epoch training log."""

import base64
import csv
import logging
import os
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.errors import MissingArtifactError
from core.gan import (
    CHECKPOINT_FORMAT_VERSION,
    DiscriminatorModel,
    GeneratorModel,
    MiEstimatorModel,
    ModelCheckpoint,
    TrainingHistory,
)
from core.models import FeatureSpace, GanConfig
from core.numerics import MlpParams

logger = logging.getLogger(__name__)

TRAINING_LOG_COLUMNS = ("epoch", "wasserstein_estimate", "gp_term", "mi_estimate", "g_loss")


class ArrayPayload(BaseModel):
    """A 2-D float64 array as little-endian bytes in base64."""
    model_config = ConfigDict(extra="forbid")

    rows: int = Field(..., ge=0)
    cols: int = Field(..., ge=0)
    data: str

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ArrayPayload":
        matrix = np.asarray(array, dtype="<f8")
        if matrix.ndim == 1:
            matrix = matrix.reshape(1, -1)
        return cls(
            rows=matrix.shape[0],
            cols=matrix.shape[1],
            data=base64.b64encode(np.ascontiguousarray(matrix).tobytes()).decode("ascii"),
        )

    def to_array(self) -> np.ndarray:
        raw = base64.b64decode(self.data)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(self.rows, self.cols)


class CheckpointEnvelope(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int = CHECKPOINT_FORMAT_VERSION
    config: GanConfig
    feature_space: FeatureSpace
    epoch: int = Field(..., ge=0)
    arrays: Dict[str, ArrayPayload]
    rng_state: Dict[str, Any]
    provenance: Optional[Dict[str, Any]] = None


def _named_arrays(prefix: str, params: MlpParams) -> Dict[str, ArrayPayload]:
    return {
        f"{prefix}.{name}": ArrayPayload.from_array(array)
        for name, array in zip(params.names(), params.arrays())
    }


def _load_params(prefix: str, arrays: Dict[str, ArrayPayload]) -> Optional[MlpParams]:
    named = {}
    for key, payload in arrays.items():
        owner, _, name = key.partition(".")
        if owner != prefix:
            continue
        array = payload.to_array()
        named[name] = array[0] if name.startswith("b") else array
    return MlpParams.from_named(named) if named else None


def checkpoint_to_json(checkpoint: ModelCheckpoint, provenance: Optional[Dict[str, Any]] = None) -> str:
    arrays = _named_arrays("G", checkpoint.generator.params)
    arrays.update(_named_arrays("D", checkpoint.discriminator.params))
    if checkpoint.estimator is not None:
        arrays.update(_named_arrays("T", checkpoint.estimator.params))
    envelope = CheckpointEnvelope(
        format_version=checkpoint.format_version,
        config=checkpoint.config,
        feature_space=checkpoint.feature_space,
        epoch=checkpoint.epoch,
        arrays=arrays,
        rng_state=checkpoint.rng_state,
        provenance=provenance,
    )
    return envelope.model_dump_json(indent=2)


def checkpoint_from_json(text: str) -> ModelCheckpoint:
    envelope = CheckpointEnvelope.model_validate_json(text)
    if envelope.format_version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"Unsupported checkpoint format version {envelope.format_version}")

    G = _load_params("G", envelope.arrays)
    D = _load_params("D", envelope.arrays)
    T = _load_params("T", envelope.arrays)
    if G is None or D is None:
        raise ValueError("Checkpoint lacks generator or critic arrays")
    return ModelCheckpoint(
        config=envelope.config,
        feature_space=envelope.feature_space,
        generator=GeneratorModel(G, envelope.feature_space),
        discriminator=DiscriminatorModel(D),
        estimator=MiEstimatorModel(T, envelope.config.noise_dim) if T is not None else None,
        epoch=envelope.epoch,
        rng_state=envelope.rng_state,
        format_version=envelope.format_version,
    )


def save_checkpoint(checkpoint: ModelCheckpoint, path: str, provenance: Optional[Dict[str, Any]] = None) -> str:
    """
    Writes the checkpoint envelope.

    Args:
        checkpoint: Models to persist
        path: Destination file
        provenance: tool_version, seed and config_hash of the run

    Returns:
        The path written
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(checkpoint_to_json(checkpoint, provenance))
        handle.write("\n")
    logger.info(f"Saved epoch-{checkpoint.epoch} checkpoint to {path}")
    return path


def load_checkpoint(path: str) -> ModelCheckpoint:
    if not os.path.exists(path):
        raise MissingArtifactError(f"Checkpoint {path} does not exist")
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        return checkpoint_from_json(text)
    except (ValidationError, ValueError) as e:
        raise MissingArtifactError(f"Checkpoint {path} is not a valid checkpoint: {e}") from e


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_training_log(history: TrainingHistory, path: str, provenance: Optional[Dict[str, Any]] = None) -> str:
    """One CSV row per epoch; mi_estimate is empty for WGAN-GP."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if provenance:
            handle.write(provenance_comment(provenance))
        writer = csv.writer(handle)
        writer.writerow(TRAINING_LOG_COLUMNS)
        for record in history.epochs:
            writer.writerow([
                record.epoch,
                _cell(record.wasserstein_estimate),
                _cell(record.gp_term),
                _cell(record.mi_estimate),
                _cell(record.g_loss),
            ])
    return path


def provenance_comment(provenance: Dict[str, Any]) -> str:
    """Leading '#' line that CSV artifacts carry; readers skip it."""
    return "# " + " ".join(f"{key}={value}" for key, value in provenance.items()) + "\n"
