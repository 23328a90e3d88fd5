#!/usr/bin/env python3

import logging
from typing import Dict, List, Optional

from core.errors import EmptyDatasetError, LogReadError
from core.models import AlertRecord, RawCorpus
from core.parsers import get_parser

logger = logging.getLogger(__name__)


def parse_log(path: str, log_format: str = "json_lines") -> RawCorpus:
    """
    Reads an alert log, skipping (and recording) lines that cannot be parsed.

    Args:
        path: Path of the log file
        log_format: "json_lines" or "csv"

    Returns:
        RawCorpus holding the alerts in file order
    """
    parser = get_parser(log_format)
    alerts: List[AlertRecord] = []
    warnings = []

    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            for parsed in parser.parse(handle):
                if parsed.record is not None:
                    alerts.append(parsed.record)
                else:
                    warnings.append((parsed.line_number, parsed.warning))
    except (OSError, UnicodeDecodeError) as e:
        raise LogReadError(f"Cannot read alert log {path}: {e}") from e

    if warnings:
        logger.warning(f"Skipped {len(warnings)} malformed line(s) in {path}")
        for line_number, message in warnings:
            logger.debug(f"{path}:{line_number}: {message}")

    if not alerts:
        raise EmptyDatasetError(f"No parseable alerts in {path}")

    logger.info(f"Parsed {len(alerts)} alerts from {path} using {parser.name}")
    return RawCorpus(alerts=alerts, source_path=path, parse_warnings=warnings)


def filter_team(corpus: RawCorpus, team: Optional[str]) -> RawCorpus:
    """Keeps only alerts raised by one team; None keeps the pooled corpus."""
    if team is None:
        return corpus
    kept = [alert for alert in corpus.alerts if alert.team == team]
    if not kept:
        raise EmptyDatasetError(f"No alerts for team {team!r} in {corpus.source_path}")
    return RawCorpus(alerts=kept, source_path=corpus.source_path, parse_warnings=list(corpus.parse_warnings))


def segment_by_target(corpus: RawCorpus) -> Dict[str, List[AlertRecord]]:
    """
    Splits the corpus per destination IP, keeping file order within each segment.

    Args:
        corpus: Parsed alerts

    Returns:
        Mapping of destination IP to its alerts, keys in order of first appearance
    """
    if not corpus.alerts:
        raise EmptyDatasetError(f"Corpus {corpus.source_path} is empty")

    segments: Dict[str, List[AlertRecord]] = {}
    for alert in corpus.alerts:
        segments.setdefault(alert.dst_ip, []).append(alert)
    return segments
