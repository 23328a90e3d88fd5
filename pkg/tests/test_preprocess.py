import bisect
import os
import tempfile
import unittest

import numpy as np

from core.errors import EmptyDatasetError, EncodingError
from core.models import AlertRecord
from core.preprocess import (
    ServiceRange,
    ServiceTable,
    TimeBinning,
    TimeBinningParams,
    assign_time_bin,
    bin_labels,
    compute_time_bins,
    histogram_width,
    load_service_table,
    map_port_to_service,
    preprocess_target,
    smoothed_histogram,
)

START = 1509789600.0


def burst(n: int, start: float, width: float = 600.0) -> list:
    return list(np.linspace(start, start + width, n))


def alert(timestamp: float, signature: str, port: int, src: str, dst: str = "10.0.0.22") -> AlertRecord:
    return AlertRecord(timestamp=timestamp, src_ip=src, dst_ip=dst, dst_port=port, protocol="tcp",
                       signature=signature)


class TestServiceTable(unittest.TestCase):
    def setUp(self):
        self.table = load_service_table()

    def test_bundled_lookups(self):
        self.assertEqual(map_port_to_service(443, "tcp", self.table), "https")
        self.assertEqual(map_port_to_service(80, "tcp", self.table), "http")
        self.assertEqual(map_port_to_service(49321, "tcp", self.table), "unregistered")

    def test_protocol_matters(self):
        self.assertEqual(map_port_to_service(443, "other", self.table), "unregistered")

    def test_port_for_inverts_lookup(self):
        for service in self.table.services():
            port, protocol = self.table.port_for(service)
            self.assertEqual(map_port_to_service(port, protocol, self.table), service)

    def test_overlapping_ranges_are_rejected(self):
        with self.assertRaises(ValueError):
            ServiceTable((ServiceRange(80, 90, "tcp", "a"), ServiceRange(85, 95, "tcp", "b")))

    def test_same_ports_on_other_protocols_are_fine(self):
        table = ServiceTable((ServiceRange(53, 53, "tcp", "dns"), ServiceRange(53, 53, "udp", "dns")))
        self.assertEqual(map_port_to_service(53, "udp", table), "dns")

    def test_custom_table_and_default_label(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "services.csv")
            with open(path, "w") as handle:
                handle.write("port_start,port_end,protocol,service\n8000,8999,TCP,alt-web\n")
            table = load_service_table(path, default_label="other-port")
        self.assertEqual(map_port_to_service(8443, "tcp", table), "alt-web")
        self.assertEqual(map_port_to_service(22, "tcp", table), "other-port")


class TestTimeBinning(unittest.TestCase):
    def test_identical_timestamps_give_one_bin(self):
        binning = compute_time_bins([START] * 10)
        self.assertEqual(binning.cut_points, ())
        self.assertEqual(binning.bin_labels, ("T00",))

    def test_two_bursts_give_one_cut_in_the_gap(self):
        timestamps = burst(500, START) + burst(500, START + 20000)
        binning = compute_time_bins(timestamps)
        self.assertEqual(len(binning.cut_points), 1)
        self.assertGreater(binning.cut_points[0], START + 600)
        self.assertLess(binning.cut_points[0], START + 20000)

    def test_small_burst_is_not_its_own_stage(self):
        timestamps = burst(950, START) + burst(50, START + 20000)
        self.assertEqual(compute_time_bins(timestamps).cut_points, ())

    def test_every_stage_holds_the_minimum_fraction(self):
        rng = np.random.default_rng(0)
        sizes = [120, 300, 40, 200, 340]
        timestamps = sum((burst(n, START + i * 7200.0) for i, n in enumerate(sizes)), [])
        binning = compute_time_bins(list(rng.permutation(timestamps)))
        edges = [-np.inf, *binning.cut_points, np.inf]
        ts = np.asarray(timestamps)
        for lo, hi in zip(edges, edges[1:]):
            self.assertGreaterEqual(np.count_nonzero((ts >= lo) & (ts < hi)), 0.10 * len(ts))
        self.assertGreaterEqual(len(binning.cut_points), 2)

    def test_empty_input(self):
        with self.assertRaises(EmptyDatasetError):
            compute_time_bins([])

    def test_smoothing_conserves_mass(self):
        timestamps = burst(400, START) + burst(600, START + 9000)
        _, counts, smoothed = smoothed_histogram(timestamps, TimeBinningParams())
        self.assertEqual(counts.sum(), 1000)
        self.assertAlmostEqual(smoothed.sum(), counts.sum(), delta=0.01 * counts.sum())

    def test_long_spans_cap_the_histogram(self):
        params = TimeBinningParams()
        ten_years = 10 * 365 * 86400.0
        timestamps = burst(500, START) + burst(500, START + ten_years)
        _, counts, _ = smoothed_histogram(timestamps, params)
        self.assertLessEqual(counts.size, params.max_histogram_bins + 1 + 2 * params.smoothing_window_bins)
        self.assertEqual(histogram_width(ten_years, params), ten_years / params.max_histogram_bins)
        self.assertEqual(histogram_width(3600.0, params), params.histogram_width_seconds)

        binning = compute_time_bins(timestamps, params)
        self.assertEqual(len(binning.cut_points), 1)
        self.assertGreater(binning.cut_points[0], START + 600)
        self.assertLess(binning.cut_points[0], START + ten_years)

    def test_params_are_validated(self):
        with self.assertRaises(ValueError):
            TimeBinningParams(min_stage_fraction=1.5)

    def test_binning_invariants(self):
        params = TimeBinningParams()
        with self.assertRaises(ValueError):
            TimeBinning((2.0, 1.0), bin_labels(3), params)
        with self.assertRaises(ValueError):
            TimeBinning((1.0,), bin_labels(1), params)

    def test_labels_sort_in_time_order(self):
        labels = bin_labels(12)
        self.assertEqual(list(labels), sorted(labels))
        self.assertEqual(labels[0], "T00")


class TestAssignTimeBin(unittest.TestCase):
    def setUp(self):
        self.binning = TimeBinning((10.0, 20.0, 30.0), bin_labels(4), TimeBinningParams())

    def test_edges(self):
        self.assertEqual(assign_time_bin(-5.0, self.binning), 0)
        self.assertEqual(assign_time_bin(10.0, self.binning), 1)
        self.assertEqual(assign_time_bin(19.999, self.binning), 1)
        self.assertEqual(assign_time_bin(1e12, self.binning), 3)

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(1)
        for value in rng.uniform(0.0, 40.0, size=1000):
            expected = sum(cut <= value for cut in self.binning.cut_points)
            self.assertEqual(assign_time_bin(float(value), self.binning), expected)
        self.assertEqual(bisect.bisect_right(self.binning.cut_points, 20.0), 2)


class TestPreprocessTarget(unittest.TestCase):
    def setUp(self):
        self.table = load_service_table()
        self.alerts = [
            alert(START + i, f"ET SCAN sig {i % 3}", (80, 443)[i % 2], f"172.16.0.{10 + i % 4 // 2}")
            for i in range(100)
        ]

    def test_single_burst_counts(self):
        fs, dataset = preprocess_target(self.alerts, self.table)
        self.assertEqual(fs.sizes, (3, 2, 2, 1))
        self.assertEqual(fs.vocab_D, ("http", "https"))
        self.assertEqual(len(dataset), 100)
        self.assertEqual(dataset.rows.shape, (100, fs.width))
        self.assertEqual(fs.target_ip, "10.0.0.22")

    def test_rows_follow_input_order(self):
        fs, dataset = preprocess_target(self.alerts, self.table)
        first = dataset.source_alerts[1]
        self.assertEqual(fs.vocab_A[first.a], "ET SCAN sig 1")
        self.assertEqual(fs.vocab_D[first.d], "https")

    def test_rerun_is_identical(self):
        fs_a, data_a = preprocess_target(self.alerts, self.table)
        fs_b, data_b = preprocess_target(self.alerts, self.table)
        self.assertEqual(fs_a.model_dump_json(), fs_b.model_dump_json())
        np.testing.assert_array_equal(data_a.rows, data_b.rows)
        self.assertEqual(data_a.source_alerts, data_b.source_alerts)

    def test_bursts_become_time_bins(self):
        alerts = [alert(t, "ET SCAN", 80, "172.16.0.10") for t in burst(300, START) + burst(300, START + 20000)]
        fs, dataset = preprocess_target(alerts, self.table)
        self.assertEqual(fs.vocab_T, ("T00", "T01"))
        self.assertEqual(len(fs.time_cut_points), 1)
        self.assertEqual([a.t for a in dataset.source_alerts], [0] * 300 + [1] * 300)

    def test_mixed_destinations_raise(self):
        with self.assertRaises(EncodingError):
            preprocess_target(self.alerts + [alert(START, "x", 80, "172.16.0.10", dst="10.0.0.9")], self.table)

    def test_empty_input(self):
        with self.assertRaises(EmptyDatasetError):
            preprocess_target([], self.table)


if __name__ == "__main__":
    unittest.main()
