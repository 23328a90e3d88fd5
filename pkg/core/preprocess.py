#!/usr/bin/env python3

import bisect
import csv
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.alert_model import build_feature_space, encode_dataset, index_alert
from core.errors import EmptyDatasetError, EncodingError
from core.models import AlertFeatures, AlertRecord, EncodedDataset, FeatureSpace

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
DEFAULT_SERVICE_TABLE = os.path.join(DATA_DIR, "service_table.csv")


@dataclass(frozen=True)
class ServiceRange:
    port_start: int
    port_end: int
    protocol: str
    service: str


@dataclass(frozen=True)
class ServiceTable:
    """Port ranges per protocol mapped to service names; lookups fall back to default_label."""
    entries: Tuple[ServiceRange, ...]
    default_label: str = "unregistered"

    def __post_init__(self):
        by_protocol: Dict[str, List[ServiceRange]] = {}
        for entry in self.entries:
            if not 0 <= entry.port_start <= entry.port_end <= 65535:
                raise ValueError(f"Invalid port range {entry.port_start}-{entry.port_end} for {entry.service}")
            by_protocol.setdefault(entry.protocol, []).append(entry)
        for protocol, ranges in by_protocol.items():
            ranges.sort(key=lambda r: r.port_start)
            for left, right in zip(ranges, ranges[1:]):
                if right.port_start <= left.port_end:
                    raise ValueError(
                        f"Overlapping {protocol} ranges for {left.service} and {right.service}"
                    )

    def services(self) -> List[str]:
        """Distinct service names in table order."""
        seen: Dict[str, None] = {}
        for entry in self.entries:
            seen.setdefault(entry.service, None)
        return list(seen)

    def port_for(self, service: str) -> Tuple[int, str]:
        """First (port, protocol) that maps to service."""
        for entry in self.entries:
            if entry.service == service:
                return entry.port_start, entry.protocol
        raise KeyError(service)


def load_service_table(path: Optional[str] = None, default_label: str = "unregistered") -> ServiceTable:
    """
    Loads a service table CSV with columns port_start,port_end,protocol,service.

    Args:
        path: CSV path; the bundled IANA subset when None
        default_label: Service name for ports no range covers

    Returns:
        ServiceTable
    """
    path = path or DEFAULT_SERVICE_TABLE
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            entries.append(ServiceRange(
                port_start=int(row["port_start"]),
                port_end=int(row["port_end"]),
                protocol=row["protocol"].strip().lower(),
                service=row["service"].strip(),
            ))
    return ServiceTable(entries=tuple(entries), default_label=default_label)


def map_port_to_service(port: int, protocol: str, table: ServiceTable) -> str:
    for entry in table.entries:
        if entry.protocol == protocol and entry.port_start <= port <= entry.port_end:
            return entry.service
    return table.default_label


class TimeBinningParams(BaseModel):
    """Knobs of the smoothed-histogram stage cutter."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    histogram_width_seconds: float = Field(300.0, gt=0)
    smoothing_window_bins: int = Field(5, ge=1)
    min_stage_fraction: float = Field(0.10, gt=0, lt=1)
    max_boundary_fraction: float = Field(0.005, gt=0, lt=1)
    max_histogram_bins: int = Field(100_000, ge=1, description="Wider histogram bins beyond this many")


@dataclass(frozen=True)
class TimeBinning:
    cut_points: Tuple[float, ...]
    bin_labels: Tuple[str, ...]
    params: TimeBinningParams

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.cut_points, self.cut_points[1:])):
            raise ValueError("cut points must be strictly increasing")
        if len(self.bin_labels) != len(self.cut_points) + 1:
            raise ValueError("need exactly one more bin label than cut points")


def bin_labels(n_bins: int) -> Tuple[str, ...]:
    # Zero padding keeps lexicographic order equal to time order.
    digits = max(2, len(str(n_bins - 1)))
    return tuple(f"T{i:0{digits}d}" for i in range(n_bins))


def histogram_width(span: float, params: TimeBinningParams) -> float:
    """histogram_width_seconds, widened so a span of this many seconds fits max_histogram_bins."""
    return max(params.histogram_width_seconds, span / params.max_histogram_bins)


def smoothed_histogram(timestamps: Sequence[float], params: TimeBinningParams) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Fixed-width count histogram over [min, max] with bins of histogram_width,
    padded with one smoothing window of empty bins on each side, and its
    centered moving average.

    Returns:
        (left edge of the first padded bin, raw counts, smoothed counts)
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.size == 0:
        raise EmptyDatasetError("No timestamps to bin")

    window = params.smoothing_window_bins
    lo, hi = float(ts.min()), float(ts.max())
    width = histogram_width(hi - lo, params)
    n_bins = int(np.floor((hi - lo) / width)) + 1
    indices = np.minimum(((ts - lo) // width).astype(np.int64), n_bins - 1) + window

    counts = np.bincount(indices, minlength=n_bins + 2 * window).astype(np.float64)
    smoothed = np.convolve(counts, np.ones(window) / window, mode="same")
    return lo - window * width, counts, smoothed


def compute_time_bins(timestamps: Sequence[float], params: Optional[TimeBinningParams] = None) -> TimeBinning:
    """
    Cuts the alert timeline at quiet local minima of the smoothed histogram.

    A candidate is a bin where the first difference of the smoothed series
    turns from <= 0 to > 0. Candidates are accepted greedily left to right when
    the stage they close and everything after them each hold at least
    min_stage_fraction of the alerts, and the candidate bin's smoothed mass is
    below max_boundary_fraction of the alerts. Cuts sit at candidate bin centers.

    Args:
        timestamps: Alert epoch seconds
        params: Binning parameters

    Returns:
        TimeBinning with the accepted cut points
    """
    params = params or TimeBinningParams()
    ts = np.sort(np.asarray(timestamps, dtype=np.float64))
    if ts.size == 0:
        raise EmptyDatasetError("No timestamps to bin")
    if ts[0] == ts[-1]:
        return TimeBinning((), bin_labels(1), params)

    origin, _, smoothed = smoothed_histogram(ts, params)
    width = histogram_width(float(ts[-1] - ts[0]), params)
    total = ts.size
    diff = np.diff(smoothed)

    accepted: List[float] = []
    stage_start = 0
    for i in range(1, diff.size):
        if not (diff[i - 1] <= 0 < diff[i]):
            continue
        cut = origin + (i + 0.5) * width
        if accepted and cut <= accepted[-1]:
            continue
        split = int(np.searchsorted(ts, cut, side="left"))
        left, right = split - stage_start, total - split
        if (left >= params.min_stage_fraction * total
                and right >= params.min_stage_fraction * total
                and smoothed[i] < params.max_boundary_fraction * total):
            accepted.append(float(cut))
            stage_start = split

    logger.debug(f"Time binning accepted {len(accepted)} cut(s) over {total} alerts")
    return TimeBinning(tuple(accepted), bin_labels(len(accepted) + 1), params)


def assign_time_bin(timestamp: float, binning: TimeBinning) -> int:
    """Index of the half-open bin [cut[i-1], cut[i]) holding timestamp; the ends are open."""
    return bisect.bisect_right(binning.cut_points, timestamp)


def preprocess_target(
        alerts: Sequence[AlertRecord],
        table: ServiceTable,
        params: Optional[TimeBinningParams] = None,
) -> Tuple[FeatureSpace, EncodedDataset]:
    """
    Reduces one target's alerts to the four categorical features and encodes them.

    Args:
        alerts: Alerts sharing a destination IP
        table: Port to service mapping
        params: Time binning parameters

    Returns:
        (FeatureSpace, EncodedDataset) with one row per alert, in input order
    """
    if not alerts:
        raise EmptyDatasetError("No alerts to preprocess")
    target_ip = alerts[0].dst_ip
    if any(alert.dst_ip != target_ip for alert in alerts):
        raise EncodingError("preprocess_target expects alerts of a single destination IP")

    binning = compute_time_bins([alert.timestamp for alert in alerts], params)
    features = [
        AlertFeatures(
            dst_ip=alert.dst_ip,
            signature=alert.signature,
            service=map_port_to_service(alert.dst_port, alert.protocol, table),
            src_ip=alert.src_ip,
            time_bin=binning.bin_labels[assign_time_bin(alert.timestamp, binning)],
        )
        for alert in alerts
    ]

    fs = build_feature_space(features, target_ip, binning.cut_points)
    dataset = encode_dataset([index_alert(feature, fs) for feature in features], fs)
    logger.info(
        f"Target {target_ip}: {len(dataset)} alerts, |A|={fs.sizes[0]} |D|={fs.sizes[1]} "
        f"|S|={fs.sizes[2]} |T|={fs.sizes[3]}"
    )
    return fs, dataset
