#!/usr/bin/env python3

from typing import Iterable, List, Sequence, Tuple

import numpy as np

from core.errors import EmptyDatasetError, EncodingError
from core.models import FEATURES, AlertFeatures, EncodedDataset, FeatureSpace, ProcessedAlert


def build_feature_space(
        alerts: Sequence[AlertFeatures],
        target_ip: str,
        time_cut_points: Iterable[float] = (),
) -> FeatureSpace:
    """
    Collects the vocabulary of every feature observed for one target.

    Args:
        alerts: Reduced alerts, all addressed to target_ip
        target_ip: The destination IP the alerts were segmented on
        time_cut_points: Bin boundaries that produced the time-bin labels

    Returns:
        FeatureSpace with lexicographically sorted vocabularies
    """
    if not alerts:
        raise EmptyDatasetError(f"No alerts for target {target_ip}")

    strays = {alert.dst_ip for alert in alerts if alert.dst_ip != target_ip}
    if strays:
        raise EncodingError(f"Alerts for {sorted(strays)} passed to feature space of {target_ip}")

    return FeatureSpace(
        target_ip=target_ip,
        vocab_A=tuple(sorted({alert.signature for alert in alerts})),
        vocab_D=tuple(sorted({alert.service for alert in alerts})),
        vocab_S=tuple(sorted({alert.src_ip for alert in alerts})),
        vocab_T=tuple(sorted({alert.time_bin for alert in alerts})),
        time_cut_points=tuple(float(c) for c in time_cut_points),
    )


def index_alert(alert: AlertFeatures, fs: FeatureSpace) -> ProcessedAlert:
    """Looks up the vocabulary index of each feature value."""
    values = (alert.signature, alert.service, alert.src_ip, alert.time_bin)
    indices = []
    for feature, value in zip(FEATURES, values):
        try:
            indices.append(fs.vocab(feature).index(value))
        except ValueError:
            raise EncodingError(f"Value {value!r} is not in vocabulary {feature}") from None
    return ProcessedAlert(*indices)


def _check_indices(p: Sequence[int], fs: FeatureSpace) -> None:
    if len(p) != len(FEATURES):
        raise EncodingError(f"Expected {len(FEATURES)} feature indices, got {len(p)}")
    for feature, index, size in zip(FEATURES, p, fs.sizes):
        if not 0 <= index < size:
            raise EncodingError(f"Index {index} out of range for {feature} (size {size})")


def encode(p: ProcessedAlert, fs: FeatureSpace) -> np.ndarray:
    """
    One-hot encodes an alert and concatenates the four segments.

    Args:
        p: Feature indices
        fs: Feature space fixing the segment layout

    Returns:
        Vector of length fs.width with exactly one 1 per segment
    """
    _check_indices(p, fs)
    vector = np.zeros(fs.width, dtype=np.float64)
    for offset, index in zip(fs.offsets, p):
        vector[offset + index] = 1.0
    return vector


def encode_batch(alerts: Sequence[ProcessedAlert], fs: FeatureSpace) -> np.ndarray:
    rows = np.zeros((len(alerts), fs.width), dtype=np.float64)
    for i, alert in enumerate(alerts):
        _check_indices(alert, fs)
        for offset, index in zip(fs.offsets, alert):
            rows[i, offset + index] = 1.0
    return rows


def decode(v: np.ndarray, fs: FeatureSpace) -> ProcessedAlert:
    """
    Takes the argmax of each feature segment; ties go to the lowest index.

    Args:
        v: Real vector of length fs.width (one-hot or soft)
        fs: Feature space fixing the segment layout

    Returns:
        ProcessedAlert of per-segment argmax indices
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != fs.width:
        raise EncodingError(f"Vector of shape {v.shape} does not match width {fs.width}")
    return ProcessedAlert(*(int(np.argmax(v[fs.segment(i)])) for i in range(len(FEATURES))))


def decode_batch(rows: np.ndarray, fs: FeatureSpace) -> np.ndarray:
    """Row-wise decode; returns an (n, 4) integer array."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != fs.width:
        raise EncodingError(f"Batch of shape {rows.shape} does not match width {fs.width}")
    columns = [np.argmax(rows[:, fs.segment(i)], axis=1) for i in range(len(FEATURES))]
    return np.stack(columns, axis=1).astype(np.int64)


def encode_dataset(alerts: Sequence[ProcessedAlert], fs: FeatureSpace) -> EncodedDataset:
    if not alerts:
        raise EmptyDatasetError(f"No alerts to encode for target {fs.target_ip}")
    return EncodedDataset(
        feature_space=fs,
        rows=encode_batch(alerts, fs),
        source_alerts=tuple(ProcessedAlert(*map(int, a)) for a in alerts),
    )


def to_values(p: ProcessedAlert, fs: FeatureSpace) -> Tuple[str, str, str, str]:
    """Maps indices back to real-world values (signature, service, src_ip, time_bin)."""
    _check_indices(p, fs)
    return tuple(fs.vocab(feature)[index] for feature, index in zip(FEATURES, p))


def as_processed(rows: np.ndarray) -> List[ProcessedAlert]:
    return [ProcessedAlert(*map(int, row)) for row in np.asarray(rows)]
