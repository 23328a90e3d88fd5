import os
import tempfile
import unittest

from core.errors import EmptyDatasetError
from core.models import ProcessedAlert
from core.stages import (
    STAGES,
    UNKNOWN_STAGE,
    StageDistribution,
    StageRule,
    StageTable,
    compare_distributions,
    load_stage_table,
    map_signature,
    signatures_of,
    stage_distribution,
)
from tests.test_gan import small_space


class TestStageTable(unittest.TestCase):
    def test_eleven_stages_plus_unknown(self):
        table = load_stage_table()
        self.assertEqual(len(STAGES), 11)
        self.assertIn("Escalate Privledges", STAGES)
        self.assertEqual(table.stages[-1], UNKNOWN_STAGE)

    def test_rejects_unknown_stage(self):
        with self.assertRaises(ValueError):
            StageTable((StageRule("ET SCAN", "substring", "Recon"),))

    def test_rejects_unknown_match_type(self):
        with self.assertRaises(ValueError):
            StageTable((StageRule("ET SCAN", "regex", "Service Scan"),))

    def test_custom_rule_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "rules.csv")
            with open(path, "w") as handle:
                handle.write("pattern,match_type,stage\nfoo,Substring,Zero Day\n")
            table = load_stage_table(path)
        self.assertEqual(map_signature("xx foo yy", table), "Zero Day")


class TestMapSignature(unittest.TestCase):
    def setUp(self):
        self.table = load_stage_table()

    def test_bundled_rules(self):
        self.assertEqual(map_signature("ET SCAN Nmap Scripting Engine User-Agent Detected", self.table), "Service Scan")
        self.assertEqual(map_signature("GPL ICMP_INFO PING *NIX", self.table), "IP Scan")
        self.assertEqual(map_signature("ET SCAN Potential SSH Scan OUTBOUND", self.table), "Targeted Scan")

    def test_unmatched_signature_is_unknown(self):
        self.assertEqual(map_signature("zz garbage 123", self.table), UNKNOWN_STAGE)
        self.assertEqual(map_signature("", self.table), UNKNOWN_STAGE)

    def test_exact_rule_beats_substring(self):
        table = StageTable((
            StageRule("ET EXPLOIT", "substring", "Specific Exploits"),
            StageRule("ET EXPLOIT Zero", "exact", "Zero Day"),
        ))
        self.assertEqual(map_signature("ET EXPLOIT Zero", table), "Zero Day")
        self.assertEqual(map_signature("ET EXPLOIT Zero 2", table), "Specific Exploits")

    def test_longest_substring_wins(self):
        table = StageTable((
            StageRule("ET SCAN", "substring", "Service Scan"),
            StageRule("ET SCAN Potential VNC", "substring", "Targeted Scan"),
        ))
        self.assertEqual(map_signature("ET SCAN Potential VNC Scan 5900-5920", table), "Targeted Scan")

    def test_equal_length_patterns_keep_file_order(self):
        table = StageTable((
            StageRule("abc", "substring", "Surfing"),
            StageRule("bcd", "substring", "Zero Day"),
        ))
        self.assertEqual(map_signature("abcd", table), "Surfing")


class TestStageDistribution(unittest.TestCase):
    def setUp(self):
        self.table = load_stage_table()
        self.signatures = [
            "ET SCAN Nmap Scripting Engine",
            "ET SCAN Nmap Scripting Engine",
            "ET POLICY curl User-Agent Outbound",
            "zz garbage",
            "ET TROJAN Possible Metasploit Payload",
        ]

    def test_single_stage(self):
        dist = stage_distribution(["ET EXPLOIT foo"] * 4, self.table)
        self.assertEqual(dist.proportions["Specific Exploits"], 1.0)
        self.assertEqual(dist.total, 4)

    def test_even_split(self):
        dist = stage_distribution(["ET EXPLOIT foo", "ET PHISHING bar"], self.table)
        self.assertEqual(dist.proportions["Specific Exploits"], 0.5)
        self.assertEqual(dist.proportions["Social Engineering"], 0.5)

    def test_matches_recount_and_sums_to_one(self):
        dist = stage_distribution(self.signatures, self.table)
        self.assertAlmostEqual(sum(dist.proportions.values()), 1.0, delta=1e-9)
        for stage in self.table.stages:
            expected = sum(map_signature(s, self.table) == stage for s in self.signatures) / len(self.signatures)
            self.assertEqual(dist.proportions[stage], expected)

    def test_duplication_leaves_distribution_unchanged(self):
        once = stage_distribution(self.signatures, self.table)
        twice = stage_distribution(self.signatures * 2, self.table)
        self.assertEqual(once.proportions, twice.proportions)

    def test_empty_input_raises(self):
        with self.assertRaises(EmptyDatasetError):
            stage_distribution([], self.table)

    def test_signatures_of_decodes_signature_index(self):
        fs = small_space()
        self.assertEqual(signatures_of([ProcessedAlert(2, 0, 0, 0), ProcessedAlert(0, 1, 1, 1)], fs),
                         ["sig 2", "sig 0"])


class TestCompareDistributions(unittest.TestCase):
    def test_identical(self):
        dist = StageDistribution({"IP Scan": 0.4, "Surfing": 0.6}, 10)
        comparison = compare_distributions(dist, dist)
        self.assertEqual(comparison.total_variation, 0.0)
        self.assertEqual(set(comparison.differences.values()), {0.0})

    def test_disjoint(self):
        comparison = compare_distributions(StageDistribution({"a": 1.0}, 1), StageDistribution({"b": 1.0}, 1))
        self.assertEqual(comparison.total_variation, 1.0)

    def test_hand_example(self):
        comparison = compare_distributions(
            StageDistribution({"a": 0.7, "b": 0.3}, 10),
            StageDistribution({"a": 0.6, "b": 0.4}, 10),
        )
        self.assertAlmostEqual(comparison.total_variation, 0.1)
        self.assertAlmostEqual(comparison.differences["a"], 0.1)


if __name__ == "__main__":
    unittest.main()
