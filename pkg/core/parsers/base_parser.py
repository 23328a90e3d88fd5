#!/usr/bin/env python3

import math
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, NamedTuple, Optional, TextIO

from pydantic import ValidationError

from core.models import AlertRecord

_TIMESTAMP_FORMATS = (
    "%Y-%m-%dT%H:%M:%S.%f%z",
    "%Y-%m-%dT%H:%M:%S%z",
    "%Y-%m-%d %H:%M:%S.%f%z",
    "%Y-%m-%d %H:%M:%S%z",
)

_PROTOCOLS = {"tcp", "udp", "icmp"}


class ParsedLine(NamedTuple):
    line_number: int
    record: Optional[AlertRecord]
    warning: Optional[str]


def parse_timestamp(value: Any) -> float:
    """
    Converts an RFC3339 string or numeric epoch value to epoch seconds.

    Naive datetimes are taken as UTC.

    Args:
        value: Timestamp as found in the log

    Returns:
        Seconds since the epoch
    """
    if isinstance(value, bool):
        raise ValueError(f"Unsupported timestamp {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"Unsupported timestamp {value!r}")

    text = value.strip()
    try:
        number = float(text)
        if math.isfinite(number):
            return number
    except ValueError:
        pass

    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = None
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError:
        for fmt in _TIMESTAMP_FORMATS:
            try:
                parsed = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
    if parsed is None:
        raise ValueError(f"Unparseable timestamp {value!r}")
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.timestamp()


def normalize_protocol(value: Any) -> str:
    proto = str(value).strip().lower()
    return proto if proto in _PROTOCOLS else "other"


class BaseLogParser(ABC):
    """
    Base class for alert log parsers.
    Each parser turns one log format into a stream of ParsedLine items.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.name = self.__class__.__name__

    @abstractmethod
    def parse(self, handle: TextIO) -> Iterator[ParsedLine]:
        """
        Parse an open log file.

        Args:
            handle: Text handle positioned at the start of the log

        Returns:
            Iterator of ParsedLine, one per data line, with either a record or a warning
        """
        pass

    def _build_record(self, fields: Dict[str, Any], line_number: int) -> ParsedLine:
        """Validates extracted fields; a failure becomes a warning, not an exception."""
        try:
            record = AlertRecord(
                timestamp=parse_timestamp(fields["timestamp"]),
                src_ip=str(fields["src_ip"]).strip(),
                dst_ip=str(fields["dest_ip"]).strip(),
                dst_port=int(fields["dest_port"]),
                protocol=normalize_protocol(fields["proto"]),
                signature=str(fields["signature"]).strip(),
                team=fields.get("team") or None,
            )
        except KeyError as e:
            return ParsedLine(line_number, None, f"missing field {e.args[0]}")
        except ValidationError as e:
            problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
            return ParsedLine(line_number, None, problems)
        except (TypeError, ValueError) as e:
            return ParsedLine(line_number, None, str(e))
        return ParsedLine(line_number, record, None)
