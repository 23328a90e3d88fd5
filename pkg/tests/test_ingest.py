import calendar
import json
import os
import random
import tempfile
import unittest

from core.errors import EmptyDatasetError, LogReadError
from core.ingest import filter_team, parse_log, segment_by_target
from core.models import AlertRecord, RawCorpus
from core.parsers import CsvParser, JsonLinesParser, get_parser
from core.parsers.base_parser import normalize_protocol, parse_timestamp

EVE_LINE = {
    "timestamp": "2017-11-04T10:00:00.000000+0000",
    "src_ip": "10.0.0.5",
    "dest_ip": "10.0.0.22",
    "dest_port": 443,
    "proto": "TCP",
    "alert": {"signature": "ET SCAN"},
}


def eve(**overrides) -> str:
    event = dict(EVE_LINE)
    event.update(overrides)
    return json.dumps(event)


def record(dst_ip: str, signature: str = "ET SCAN") -> AlertRecord:
    return AlertRecord(timestamp=0.0, src_ip="10.0.0.5", dst_ip=dst_ip, dst_port=80, protocol="tcp",
                       signature=signature)


class IngestTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name: str, text: str) -> str:
        path = os.path.join(self.tmp.name, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path


class TestTimestamps(unittest.TestCase):
    def test_eve_timestamp(self):
        expected = calendar.timegm((2017, 11, 4, 10, 0, 0))
        self.assertEqual(parse_timestamp("2017-11-04T10:00:00.000000+0000"), expected)
        self.assertEqual(parse_timestamp("2017-11-04T10:00:00Z"), expected)
        self.assertEqual(parse_timestamp("2017-11-04T12:00:00+02:00"), expected)

    def test_naive_timestamps_are_utc(self):
        self.assertEqual(parse_timestamp("2017-11-04 10:00:00"), calendar.timegm((2017, 11, 4, 10, 0, 0)))

    def test_numeric_epochs(self):
        self.assertEqual(parse_timestamp(1509789600), 1509789600.0)
        self.assertEqual(parse_timestamp("1509789600.5"), 1509789600.5)

    def test_rejects_garbage(self):
        for value in ["yesterday", "", None, True]:
            with self.assertRaises(ValueError):
                parse_timestamp(value)

    def test_protocols(self):
        self.assertEqual(normalize_protocol("TCP"), "tcp")
        self.assertEqual(normalize_protocol("IPv6-ICMP"), "other")


class TestParsers(unittest.TestCase):
    def test_registry(self):
        self.assertIsInstance(get_parser("json_lines"), JsonLinesParser)
        self.assertIsInstance(get_parser("csv"), CsvParser)
        with self.assertRaises(ValueError):
            get_parser("pcap")


class TestParseLog(IngestTestCase):
    def test_json_line_becomes_record(self):
        corpus = parse_log(self.write("eve.json", eve() + "\n"))
        alert = corpus.alerts[0]
        self.assertEqual(alert.timestamp, 1509789600.0)
        self.assertEqual((alert.src_ip, alert.dst_ip, alert.dst_port), ("10.0.0.5", "10.0.0.22", 443))
        self.assertEqual(alert.protocol, "tcp")
        self.assertEqual(alert.signature, "ET SCAN")

    def test_malformed_lines_are_skipped_with_warnings(self):
        lines = [eve(), "{not json", eve(src_ip="10.0.0.6"), eve(dest_port=443), ""]
        corpus = parse_log(self.write("eve.json", "\n".join(lines)))
        self.assertEqual(len(corpus.alerts), 3)
        self.assertEqual([line for line, _ in corpus.parse_warnings], [2])

    def test_invalid_fields_and_other_events_are_warnings(self):
        lines = [
            eve(dest_port=99999),
            json.dumps({k: v for k, v in EVE_LINE.items() if k != "alert"}),
            json.dumps({"event_type": "flow", "src_ip": "10.0.0.5"}),
            eve(team="t3"),
        ]
        corpus = parse_log(self.write("eve.json", "\n".join(lines)))
        self.assertEqual(len(corpus.alerts), 1)
        self.assertEqual(corpus.alerts[0].team, "t3")
        self.assertEqual(len(corpus.parse_warnings), 3)

    def test_csv_log(self):
        text = (
            "timestamp,src_ip,dest_ip,dest_port,proto,signature,team\n"
            "2017-11-04T10:00:00Z,10.0.0.5,10.0.0.22,80,tcp,ET POLICY curl,t1\n"
            "2017-11-04T10:00:01Z,10.0.0.5,10.0.0.22,,tcp,ET POLICY curl,t1\n"
            "1509789602,10.0.0.6,10.0.0.23,53,udp,ET INFO dns,\n"
        )
        corpus = parse_log(self.write("alerts.csv", text), "csv")
        self.assertEqual(len(corpus.alerts), 2)
        self.assertEqual(corpus.alerts[1].protocol, "udp")
        self.assertIsNone(corpus.alerts[1].team)
        self.assertEqual([line for line, _ in corpus.parse_warnings], [3])

    def test_csv_without_required_columns(self):
        with self.assertRaises(EmptyDatasetError):
            parse_log(self.write("alerts.csv", "timestamp,src_ip\n1,10.0.0.5\n"), "csv")

    def test_empty_file(self):
        with self.assertRaises(EmptyDatasetError):
            parse_log(self.write("empty.json", ""))

    def test_missing_file(self):
        with self.assertRaises(LogReadError):
            parse_log(os.path.join(self.tmp.name, "missing.json"))

    def test_parsing_twice_gives_the_same_corpus(self):
        path = self.write("eve.json", "\n".join([eve(), "oops", eve(src_ip="10.0.0.7")]))
        first, second = parse_log(path), parse_log(path)
        self.assertEqual(first.alerts, second.alerts)
        self.assertEqual(first.parse_warnings, second.parse_warnings)


class TestSegmentation(unittest.TestCase):
    def test_groups_by_destination_in_order(self):
        alerts = [record("10.0.0.1", "s0"), record("10.0.0.2", "s1"), record("10.0.0.1", "s2")]
        segments = segment_by_target(RawCorpus(alerts=alerts, source_path="x"))
        self.assertEqual(list(segments), ["10.0.0.1", "10.0.0.2"])
        self.assertEqual([a.signature for a in segments["10.0.0.1"]], ["s0", "s2"])
        self.assertEqual([a.signature for a in segments["10.0.0.2"]], ["s1"])

    def test_single_destination(self):
        alerts = [record("10.0.0.1")] * 5
        self.assertEqual(len(segment_by_target(RawCorpus(alerts=alerts, source_path="x"))["10.0.0.1"]), 5)

    def test_segments_partition_random_corpora(self):
        rng = random.Random(0)
        for _ in range(100):
            alerts = [record(f"10.0.0.{rng.randint(1, 6)}", f"s{i}") for i in range(rng.randint(1, 50))]
            segments = segment_by_target(RawCorpus(alerts=alerts, source_path="x"))
            self.assertEqual(sum(len(s) for s in segments.values()), len(alerts))
            regrouped = sorted(a.signature for s in segments.values() for a in s)
            self.assertEqual(regrouped, sorted(a.signature for a in alerts))

    def test_empty_corpus(self):
        with self.assertRaises(EmptyDatasetError):
            segment_by_target(RawCorpus(alerts=[], source_path="x"))


class TestTeamFilter(unittest.TestCase):
    def setUp(self):
        self.corpus = RawCorpus(
            alerts=[record("10.0.0.1").model_copy(update={"team": "t1"}), record("10.0.0.1")],
            source_path="x",
        )

    def test_none_keeps_pooled_corpus(self):
        self.assertIs(filter_team(self.corpus, None), self.corpus)

    def test_keeps_one_team(self):
        self.assertEqual(len(filter_team(self.corpus, "t1").alerts), 1)

    def test_unknown_team(self):
        with self.assertRaises(EmptyDatasetError):
            filter_team(self.corpus, "t9")


if __name__ == "__main__":
    unittest.main()
