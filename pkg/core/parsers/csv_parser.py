#!/usr/bin/env python3

import csv
from typing import Iterator, TextIO

from core.parsers.base_parser import BaseLogParser, ParsedLine

REQUIRED_COLUMNS = ("timestamp", "src_ip", "dest_ip", "dest_port", "proto", "signature")


class CsvParser(BaseLogParser):
    """Parser for alert CSV exports with a header row."""

    def parse(self, handle: TextIO) -> Iterator[ParsedLine]:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [column for column in REQUIRED_COLUMNS if column not in header]
        if missing:
            # Without the columns no row can be read; report once against the header.
            yield ParsedLine(1, None, f"header lacks columns {', '.join(missing)}")
            return

        for row in reader:
            if None in row or any(row.get(column) in (None, "") for column in REQUIRED_COLUMNS):
                yield ParsedLine(reader.line_num, None, "wrong number of columns or empty required value")
                continue
            yield self._build_record(row, reader.line_num)
