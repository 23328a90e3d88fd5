"""
Alert log parsers.

Available parsers:
- JsonLinesParser: Suricata EVE-style JSON lines
- CsvParser: CSV with timestamp,src_ip,dest_ip,dest_port,proto,signature columns
"""

from typing import Any, Dict, Optional

from core.parsers.base_parser import BaseLogParser, ParsedLine
from core.parsers.csv_parser import CsvParser
from core.parsers.json_lines_parser import JsonLinesParser

PARSERS = {
    "json_lines": JsonLinesParser,
    "csv": CsvParser,
}


def get_parser(log_format: str, config: Optional[Dict[str, Any]] = None) -> BaseLogParser:
    if log_format not in PARSERS:
        raise ValueError(f"Unknown log format '{log_format}'")
    return PARSERS[log_format](config)


__all__ = [
    'BaseLogParser',
    'CsvParser',
    'JsonLinesParser',
    'ParsedLine',
    'get_parser',
]
