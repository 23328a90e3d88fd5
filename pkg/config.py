#!/usr/bin/env python3

import json
import os
from typing import Any, Dict, Optional

from core.errors import MissingArtifactError
from core.models import RunConfig

# CLI flag (argparse dest) -> RunConfig field
RUN_FLAGS = {
    "input": "inputs",
    "format": "format",
    "target": "target_ip",
    "team": "team",
    "min_alerts": "min_alerts",
    "service_table": "service_table",
    "stage_rules": "stage_rules",
    "ce_normalizer": "ce_normalizer",
    "resamples": "n_resamples",
    "n": "n_samples",
    "threshold": "graph_threshold",
    "out": "output_dir",
}

# CLI flag (argparse dest) -> GanConfig field
GAN_FLAGS = {
    "variant": "variant",
    "epochs": "epochs",
    "lambda_gp": "lambda_gp",
    "lr": "lr",
    "gp_point": "gp_point",
}


def _read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise MissingArtifactError(f"Config file {path} does not exist")
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def load_config(args: Optional[Any] = None) -> RunConfig:
    """
    Loads the run configuration.

    Later sources override earlier ones: defaults, environment variables
    (ALERTFORGE_SEED, ALERTFORGE_OUT, ALERTFORGE_SERVICE_TABLE, ALERTFORGE_STAGE_RULES),
    the JSON file named by --config, and finally explicit CLI flags.

    Args:
        args: Parsed argparse namespace, or None for defaults and environment only

    Returns:
        RunConfig with its GanConfig
    """
    values: Dict[str, Any] = {}
    gan: Dict[str, Any] = {}

    # Environment
    if os.environ.get("ALERTFORGE_SEED"):
        values["seed"] = int(os.environ["ALERTFORGE_SEED"])
    if os.environ.get("ALERTFORGE_OUT"):
        values["output_dir"] = os.environ["ALERTFORGE_OUT"]
    if os.environ.get("ALERTFORGE_SERVICE_TABLE"):
        values["service_table"] = os.environ["ALERTFORGE_SERVICE_TABLE"]
    if os.environ.get("ALERTFORGE_STAGE_RULES"):
        values["stage_rules"] = os.environ["ALERTFORGE_STAGE_RULES"]

    # Config file
    config_path = getattr(args, "config", None)
    if config_path:
        document = _read_config_file(config_path)
        gan.update(document.pop("gan", {}))
        values.update(document)

    # CLI flags; None means "not given"
    if args is not None:
        for flag, key in RUN_FLAGS.items():
            value = getattr(args, flag, None)
            if value is not None:
                values[key] = value
        for flag, key in GAN_FLAGS.items():
            value = getattr(args, flag, None)
            if value is not None:
                gan[key] = value
        if getattr(args, "seed", None) is not None:
            values["seed"] = args.seed
            gan["seed"] = args.seed

    # The training seed follows the run seed unless the config file pins it.
    gan.setdefault("seed", values.get("seed", 0))
    values["gan"] = gan
    return RunConfig.model_validate(values)
