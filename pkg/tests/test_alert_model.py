import random
import unittest

import numpy as np
from pydantic import ValidationError

from core.alert_model import (
    build_feature_space,
    decode,
    decode_batch,
    encode,
    encode_batch,
    encode_dataset,
    index_alert,
    to_values,
)
from core.errors import EmptyDatasetError, EncodingError
from core.models import AlertFeatures, AlertRecord, FeatureSpace, ProcessedAlert
from tests.test_gan import small_space


def features(signature="X", service="http", src_ip="172.16.0.10", time_bin="T00", dst_ip="10.0.0.22"):
    return AlertFeatures(dst_ip=dst_ip, signature=signature, service=service, src_ip=src_ip, time_bin=time_bin)


class TestAlertRecord(unittest.TestCase):
    def _record(self, **overrides):
        values = dict(timestamp=1509789600.0, src_ip="10.0.0.5", dst_ip="10.0.0.22", dst_port=443,
                      protocol="tcp", signature="ET SCAN")
        values.update(overrides)
        return AlertRecord(**values)

    def test_valid_record(self):
        self.assertEqual(self._record().dst_port, 443)

    def test_rejects_invalid_values(self):
        for overrides in [
            dict(timestamp=-1.0),
            dict(timestamp=float("inf")),
            dict(dst_port=70000),
            dict(src_ip="fe80::1"),
            dict(protocol="sctp"),
            dict(signature=""),
        ]:
            with self.assertRaises(ValidationError, msg=str(overrides)):
                self._record(**overrides)


class TestFeatureSpace(unittest.TestCase):
    def test_vocabularies_are_deduplicated_and_sorted(self):
        fs = build_feature_space([features("Y"), features("X"), features("X")], "10.0.0.22")
        self.assertEqual(fs.vocab_A, ("X", "Y"))
        self.assertEqual(fs.sizes, (2, 1, 1, 1))

    def test_single_alert(self):
        fs = build_feature_space([features()], "10.0.0.22")
        self.assertEqual(fs.sizes, (1, 1, 1, 1))
        self.assertEqual(fs.width, 4)
        self.assertEqual(fs.offsets, (0, 1, 2, 3))

    def test_shuffling_gives_the_same_space(self):
        alerts = [features(f"sig {i % 7}", f"svc{i % 3}", f"172.16.0.{i % 5 + 10}", f"T0{i % 4}") for i in range(60)]
        shuffled = list(alerts)
        random.Random(1).shuffle(shuffled)
        self.assertEqual(build_feature_space(alerts, "10.0.0.22"), build_feature_space(shuffled, "10.0.0.22"))

    def test_empty_input_raises(self):
        with self.assertRaises(EmptyDatasetError):
            build_feature_space([], "10.0.0.22")

    def test_foreign_destination_raises(self):
        with self.assertRaises(EncodingError):
            build_feature_space([features(), features(dst_ip="10.0.0.23")], "10.0.0.22")

    def test_unsorted_vocabulary_is_rejected(self):
        with self.assertRaises(ValidationError):
            FeatureSpace(target_ip="10.0.0.22", vocab_A=("b", "a"), vocab_D=("x",), vocab_S=("y",), vocab_T=("T00",))

    def test_json_field_order(self):
        fs = small_space()
        self.assertEqual(list(fs.model_dump())[:5], ["target_ip", "vocab_A", "vocab_D", "vocab_S", "vocab_T"])

    def test_index_alert(self):
        fs = build_feature_space([features("X"), features("Y", "ssh")], "10.0.0.22")
        self.assertEqual(index_alert(features("Y", "ssh"), fs), ProcessedAlert(1, 1, 0, 0))
        with self.assertRaises(EncodingError):
            index_alert(features("Z"), fs)


class TestEncoding(unittest.TestCase):
    def setUp(self):
        self.fs = small_space((2, 2, 2, 2))

    def test_hand_layout(self):
        np.testing.assert_array_equal(encode(ProcessedAlert(0, 1, 0, 1), self.fs), [1, 0, 0, 1, 1, 0, 0, 1])

    def test_singleton_space(self):
        fs = small_space((1, 1, 1, 1))
        np.testing.assert_array_equal(encode(ProcessedAlert(0, 0, 0, 0), fs), [1, 1, 1, 1])

    def test_out_of_range_index(self):
        with self.assertRaises(EncodingError):
            encode(ProcessedAlert(2, 0, 0, 0), self.fs)
        with self.assertRaises(EncodingError):
            encode(ProcessedAlert(0, -1, 0, 0), self.fs)

    def test_decode_takes_segment_argmax(self):
        v = np.array([0.1, 0.9, 0.7, 0.3, 0.2, 0.2, 0.0, 1.0])
        self.assertEqual(decode(v, self.fs), ProcessedAlert(1, 0, 0, 1))

    def test_ties_go_to_lowest_index(self):
        self.assertEqual(decode(np.full(8, 0.5), self.fs), ProcessedAlert(0, 0, 0, 0))

    def test_decode_rejects_wrong_length(self):
        with self.assertRaises(EncodingError):
            decode(np.zeros(7), self.fs)

    def test_decode_inverts_encode(self):
        fs = small_space((5, 4, 3, 6))
        rng = np.random.default_rng(0)
        alerts = [ProcessedAlert(*(int(rng.integers(0, size)) for size in fs.sizes)) for _ in range(1000)]
        rows = encode_batch(alerts, fs)
        np.testing.assert_array_equal(rows.sum(axis=1), 4.0)
        self.assertTrue(np.all((rows == 0) | (rows == 1)))
        self.assertEqual([decode(row, fs) for row in rows], alerts)
        np.testing.assert_array_equal(decode_batch(rows, fs), np.asarray(alerts))

    def test_encode_dataset(self):
        alerts = [ProcessedAlert(0, 1, 0, 1), ProcessedAlert(1, 0, 1, 0)]
        dataset = encode_dataset(alerts, self.fs)
        self.assertEqual(len(dataset), 2)
        self.assertEqual(dataset.rows.shape, (2, 8))
        np.testing.assert_array_equal(dataset.index_array(), [[0, 1, 0, 1], [1, 0, 1, 0]])
        with self.assertRaises(EmptyDatasetError):
            encode_dataset([], self.fs)

    def test_to_values(self):
        self.assertEqual(to_values(ProcessedAlert(1, 0, 1, 0), self.fs), ("sig 1", "svc0", "172.16.0.11", "T00"))


if __name__ == "__main__":
    unittest.main()
