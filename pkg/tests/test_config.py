import json
import os
import tempfile
import unittest
from unittest import mock

from pydantic import ValidationError

from config import load_config
from core.errors import MissingArtifactError
from core.models import GanConfig, RunConfig
from main import build_parser


def parse(*argv):
    return build_parser().parse_args(list(argv))


class TestVariantDefaults(unittest.TestCase):
    def test_wgan_gp(self):
        config = GanConfig()
        self.assertEqual((config.epochs, config.lambda_gp), (200, 0.1))
        self.assertEqual((config.lr, config.beta1, config.beta2, config.critic_ratio), (5e-5, 0.5, 0.8, 5))

    def test_wgan_gpmi(self):
        config = GanConfig(variant="wgan_gpmi")
        self.assertEqual((config.epochs, config.lambda_gp), (300, 0.4))

    def test_explicit_values_win(self):
        config = GanConfig(variant="wgan_gpmi", epochs=3, lambda_gp=0.0)
        self.assertEqual((config.epochs, config.lambda_gp), (3, 0.0))

    def test_invalid_values(self):
        with self.assertRaises(ValidationError):
            GanConfig(variant="wgan")
        with self.assertRaises(ValidationError):
            GanConfig(beta2=1.0)


@mock.patch.dict(os.environ, {}, clear=True)
class TestLoadConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, document) -> str:
        path = os.path.join(self.tmp.name, "config.json")
        with open(path, "w") as handle:
            json.dump(document, handle)
        return path

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.min_alerts, 500)
        self.assertEqual(config.gan.variant, "wgan_gp")
        self.assertEqual(config.output_dir, "alertforge-out")

    def test_cli_flags(self):
        config = load_config(parse("train", "--variant", "wgan_gpmi", "--epochs", "3", "--lambda", "0.2",
                                   "--gp-point", "noise", "--input", "a.json", "--input", "b.json"))
        self.assertEqual(config.gan.variant, "wgan_gpmi")
        self.assertEqual(config.gan.epochs, 3)
        self.assertEqual(config.gan.lambda_gp, 0.2)
        self.assertEqual(config.gan.gp_point, "noise")
        self.assertEqual(config.inputs, ["a.json", "b.json"])

    def test_variant_flag_brings_its_defaults(self):
        config = load_config(parse("train", "--variant", "wgan_gpmi"))
        self.assertEqual((config.gan.epochs, config.gan.lambda_gp), (300, 0.4))

    def test_environment(self):
        with mock.patch.dict(os.environ, {"ALERTFORGE_SEED": "7", "ALERTFORGE_OUT": "/tmp/x"}):
            config = load_config(parse("train"))
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.gan.seed, 7)
        self.assertEqual(config.output_dir, "/tmp/x")

    def test_file_overrides_environment_and_flags_override_file(self):
        path = self.write_config({"seed": 3, "min_alerts": 50, "gan": {"hidden_dim": 16, "epochs": 9}})
        with mock.patch.dict(os.environ, {"ALERTFORGE_SEED": "7"}):
            config = load_config(parse("train", "--config", path, "--epochs", "4"))
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.min_alerts, 50)
        self.assertEqual(config.gan.hidden_dim, 16)
        self.assertEqual(config.gan.epochs, 4)

    def test_seed_flag_sets_both_seeds(self):
        path = self.write_config({"gan": {"seed": 11}})
        self.assertEqual(load_config(parse("train", "--config", path)).gan.seed, 11)
        config = load_config(parse("train", "--config", path, "--seed", "5"))
        self.assertEqual((config.seed, config.gan.seed), (5, 5))

    def test_missing_config_file(self):
        with self.assertRaises(MissingArtifactError):
            load_config(parse("train", "--config", os.path.join(self.tmp.name, "nope.json")))

    def test_unknown_keys_are_rejected(self):
        path = self.write_config({"epochz": 3})
        with self.assertRaises(ValidationError):
            load_config(parse("train", "--config", path))


class TestProvenance(unittest.TestCase):
    def test_hash_ignores_output_dir(self):
        self.assertEqual(RunConfig(output_dir="a").config_hash(), RunConfig(output_dir="b").config_hash())

    def test_hash_tracks_settings(self):
        self.assertNotEqual(RunConfig(seed=1).config_hash(), RunConfig(seed=2).config_hash())
        self.assertNotEqual(RunConfig().config_hash(), RunConfig(gan=GanConfig(lr=1e-3)).config_hash())

    def test_provenance_fields(self):
        provenance = RunConfig(seed=4).provenance()
        self.assertEqual(set(provenance), {"tool_version", "seed", "config_hash"})
        self.assertEqual(provenance["seed"], 4)


if __name__ == "__main__":
    unittest.main()
