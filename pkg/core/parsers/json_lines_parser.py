#!/usr/bin/env python3

import json
from typing import Iterator, TextIO

from core.parsers.base_parser import BaseLogParser, ParsedLine


class JsonLinesParser(BaseLogParser):
    """Parser for Suricata EVE-style JSON lines (one event object per line)."""

    def parse(self, handle: TextIO) -> Iterator[ParsedLine]:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as e:
                yield ParsedLine(line_number, None, f"invalid JSON: {e.msg}")
                continue
            if not isinstance(event, dict):
                yield ParsedLine(line_number, None, "event is not a JSON object")
                continue

            event_type = event.get("event_type")
            if event_type is not None and event_type != "alert":
                yield ParsedLine(line_number, None, f"skipped event_type {event_type!r}")
                continue

            alert = event.get("alert")
            fields = {key: event[key] for key in ("timestamp", "src_ip", "dest_ip", "dest_port", "proto") if key in event}
            if isinstance(alert, dict) and "signature" in alert:
                fields["signature"] = alert["signature"]
            if event.get("team") is not None:
                fields["team"] = str(event["team"])
            yield self._build_record(fields, line_number)
