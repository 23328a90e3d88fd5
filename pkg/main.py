#!/usr/bin/env python3

import argparse
import csv
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

import numpy as np

from config import load_config
from core import __version__
from core.artifacts import (
    alerts_path,
    discover_targets,
    features_path,
    load_target,
    model_prefix,
    open_csv_for_write,
    read_report,
    write_decoded_alerts,
    write_encoded_dataset,
    write_feature_space,
    write_json,
    write_report,
)
from core.checkpoint import load_checkpoint, save_checkpoint, write_training_log
from core.errors import AlertForgeError, EmptyDatasetError, LogReadError, MissingArtifactError, NumericsError
from core.evaluation import entropy_rows_from_report, evaluate_target, scores_from_report
from core.fixtures import (
    competition_scale_spec,
    corpus_to_json_lines,
    generate_corpus,
    load_planted_spec,
    rebin_as_preprocessed,
)
from core.gan import sample_alerts, train
from core.ingest import filter_team, parse_log, segment_by_target
from core.metrics import compare_entropies, compare_scores, dependency_graph, write_histogram_csv
from core.models import RawCorpus, RunConfig
from core.preprocess import load_service_table, preprocess_target
from core.stages import load_stage_table

logger = logging.getLogger("alertforge")


def _targets(config: RunConfig) -> List[str]:
    targets = [config.target_ip] if config.target_ip else discover_targets(config.output_dir)
    if not targets:
        raise MissingArtifactError(f"No preprocessed targets in {config.output_dir}")
    return targets


def cmd_preprocess(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """
    Parses the input logs and writes a feature space and encoded dataset per target.

    Targets with fewer than min_alerts alerts are skipped.

    Returns:
        Paths written
    """
    if not config.inputs:
        raise LogReadError("No --input log given")

    table = load_service_table(config.service_table)
    alerts = []
    for path in config.inputs:
        alerts.extend(filter_team(parse_log(path, config.format), config.team).alerts)
    segments = segment_by_target(RawCorpus(alerts=alerts, source_path=",".join(config.inputs)))

    provenance = config.provenance()
    written = []
    for target_ip in sorted(segments):
        if config.target_ip and target_ip != config.target_ip:
            continue
        target_alerts = segments[target_ip]
        if len(target_alerts) < config.min_alerts:
            logger.info(f"Skipping {target_ip}: {len(target_alerts)} alerts < {config.min_alerts}")
            continue
        fs, dataset = preprocess_target(target_alerts, table)
        written.append(write_feature_space(fs, features_path(config.output_dir, target_ip), provenance))
        written.append(write_encoded_dataset(dataset, alerts_path(config.output_dir, target_ip), provenance))

    if not written:
        raise EmptyDatasetError(f"No target reached {config.min_alerts} alerts")
    logger.info(f"Preprocessed {len(written) // 2} target(s) into {config.output_dir}")
    return written


def cmd_train(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Trains one model per preprocessed target; a diverged run still saves its last good checkpoint."""
    provenance = config.provenance()
    written = []
    for target_ip in _targets(config):
        dataset = load_target(config.output_dir, target_ip)
        prefix = model_prefix(config.output_dir, target_ip, config.gan.variant)
        try:
            result = train(dataset, config.gan)
        except NumericsError as e:
            if e.checkpoint is not None:
                save_checkpoint(e.checkpoint, f"{prefix}.checkpoint.json", provenance)
            raise
        written.append(save_checkpoint(result.checkpoint, f"{prefix}.checkpoint.json", provenance))
        written.append(write_training_log(result.history, f"{prefix}.training_log.csv", provenance))
    return written


def _checkpoint_path(config: RunConfig, args: argparse.Namespace) -> str:
    if getattr(args, "checkpoint", None):
        return args.checkpoint
    if not config.target_ip:
        raise MissingArtifactError("Give --checkpoint or --target")
    return f"{model_prefix(config.output_dir, config.target_ip, config.gan.variant)}.checkpoint.json"


def cmd_sample(config: RunConfig, args: argparse.Namespace) -> List[str]:
    checkpoint = load_checkpoint(_checkpoint_path(config, args))
    alerts = sample_alerts(checkpoint, config.n_samples, config.seed)
    fs = checkpoint.feature_space
    path = args.output or f"{model_prefix(config.output_dir, fs.target_ip, checkpoint.config.variant)}.samples.csv"
    write_decoded_alerts(np.asarray(alerts, dtype=np.int64), fs, path, config.provenance())
    logger.info(f"Wrote {len(alerts)} synthetic alerts to {path}")
    return [path]


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """
    Scores each target's model: report JSON, dependency graph DOT, stage CSV and 4-tuple histograms.
    """
    stage_table = load_stage_table(config.stage_rules)
    provenance = config.provenance()
    written = []
    for target_ip in _targets(config):
        dataset = load_target(config.output_dir, target_ip)
        prefix = model_prefix(config.output_dir, target_ip, config.gan.variant)
        checkpoint = load_checkpoint(getattr(args, "checkpoint", None) or f"{prefix}.checkpoint.json")

        evaluation = evaluate_target(
            dataset,
            checkpoint,
            stage_table,
            n_resamples=config.n_resamples,
            seed=config.seed,
            ce_normalizer=config.ce_normalizer,
            graph_threshold=config.graph_threshold,
            provenance=provenance,
        )
        written.append(write_report(evaluation.report, f"{prefix}.report.json"))

        with open(f"{prefix}.graph.dot", "w", encoding="utf-8") as handle:
            handle.write(evaluation.graph.to_dot())
        written.append(f"{prefix}.graph.dot")

        with open_csv_for_write(f"{prefix}.stages.csv", provenance) as handle:
            writer = csv.writer(handle)
            writer.writerow(["stage", "ground_truth", "generated", "difference"])
            for entry in evaluation.report.stages.stages:
                writer.writerow([entry.stage, entry.ground_truth, entry.generated, entry.difference])
        written.append(f"{prefix}.stages.csv")

        for name, histogram in (("hist_gt", evaluation.gt_histogram), ("hist_gen", evaluation.generated_histogram)):
            with open_csv_for_write(f"{prefix}.{name}.csv", provenance) as handle:
                write_histogram_csv(histogram, checkpoint.feature_space, handle)
            written.append(f"{prefix}.{name}.csv")
    return written


def cmd_graph(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Re-draws the dependency graph of a saved report, e.g. at another threshold."""
    if args.report:
        report_path = args.report
    elif config.target_ip:
        report_path = f"{model_prefix(config.output_dir, config.target_ip, config.gan.variant)}.report.json"
    else:
        raise MissingArtifactError("Give --report or --target")
    report = read_report(report_path)
    graph = dependency_graph(scores_from_report(report), config.graph_threshold)
    path = args.output or report_path.replace(".report.json", ".graph.dot")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(graph.to_dot())
    return [path]


def cmd_compare(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """Side-by-side intersection scores and entropy agreement of two reports."""
    report_a = read_report(args.report_a)
    report_b = read_report(args.report_b)
    provenance = config.provenance()
    scores_path = os.path.join(config.output_dir, "compare.scores.csv")
    entropy_path = os.path.join(config.output_dir, "compare.entropy.csv")

    with open_csv_for_write(scores_path, provenance) as handle:
        writer = csv.writer(handle)
        writer.writerow(["features", report_a.variant, report_b.variant, "winner"])
        for row in compare_scores(scores_from_report(report_a), scores_from_report(report_b), args.margin):
            winner = {"a": report_a.variant, "b": report_b.variant}.get(row.winner, "")
            writer.writerow([",".join(row.features), row.score_a, row.score_b, winner])

    gt_rows, gen_a = entropy_rows_from_report(report_a)
    _, gen_b = entropy_rows_from_report(report_b)
    within_a = compare_entropies(gt_rows, gen_a, args.tolerance)
    within_b = compare_entropies(gt_rows, gen_b, args.tolerance)
    with open_csv_for_write(entropy_path, provenance) as handle:
        writer = csv.writer(handle)
        writer.writerow(["y", "x", "ground_truth", report_a.variant, report_b.variant,
                         f"{report_a.variant}_within", f"{report_b.variant}_within"])
        for row_a, row_b in zip(within_a, within_b):
            writer.writerow([row_a.target_feature, ",".join(row_a.condition_features), row_a.ground_truth,
                             row_a.generated, row_b.generated, row_a.within_tolerance, row_b.within_tolerance])
    return [scores_path, entropy_path]


def cmd_fixture(config: RunConfig, args: argparse.Namespace) -> List[str]:
    """
    Writes a planted corpus as a JSON-lines alert log plus its analytic truth.

    The truth is stated over the time bins preprocessing will cut from the log.
    """
    spec = load_planted_spec(args.spec) if args.spec else competition_scale_spec(config.seed)
    table = load_service_table(config.service_table)
    corpus = generate_corpus(spec, table)

    log_path = os.path.join(config.output_dir, "fixture.jsonl")
    os.makedirs(config.output_dir, exist_ok=True)
    with open(log_path, "w", encoding="utf-8") as handle:
        for line in corpus_to_json_lines(corpus, table, seed=spec.seed):
            handle.write(line + "\n")

    truth = rebin_as_preprocessed(corpus, seed=spec.seed).truth.to_json()
    truth["provenance"] = config.provenance()
    truth_path = write_json(truth, os.path.join(config.output_dir, "fixture.truth.json"))
    return [log_path, truth_path]


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], List[str]]] = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "graph": cmd_graph,
    "compare": cmd_compare,
    "fixture": cmd_fixture,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields (and a nested 'gan' object)")
    common.add_argument("--input", action="append", help="Alert log; repeat to pool several logs")
    common.add_argument("--format", choices=["json_lines", "csv"])
    common.add_argument("--target", help="Only this destination IP")
    common.add_argument("--team", help="Only alerts raised by this team")
    common.add_argument("--min-alerts", type=int)
    common.add_argument("--variant", choices=["wgan_gp", "wgan_gpmi"])
    common.add_argument("--epochs", type=int)
    common.add_argument("--lambda", dest="lambda_gp", type=float)
    common.add_argument("--lr", type=float)
    common.add_argument("--seed", type=int, help="Defaults to $ALERTFORGE_SEED, then 0")
    common.add_argument("--service-table")
    common.add_argument("--stage-rules")
    common.add_argument("--gp-point", choices=["interpolate", "noise"])
    common.add_argument("--ce-normalizer", choices=["joint", "target"])
    common.add_argument("--resamples", type=int, help="Bootstrap resamples for intersection scores")
    common.add_argument("--threshold", type=float, help="Dependency-graph score-drop threshold")
    common.add_argument("--out", help="Artifact directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="alertforge", description="Synthesize and evaluate per-target NIDS alerts")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("preprocess", parents=[common], help="Segment, reduce and encode alert logs")
    subparsers.add_parser("train", parents=[common], help="Train a model per target")

    sample = subparsers.add_parser("sample", parents=[common], help="Draw synthetic alerts")
    sample.add_argument("--checkpoint")
    sample.add_argument("--n", type=int)
    sample.add_argument("--output")

    evaluate = subparsers.add_parser("eval", parents=[common], help="Score a model against ground truth")
    evaluate.add_argument("--checkpoint")

    graph = subparsers.add_parser("graph", parents=[common], help="Dependency graph of a saved report")
    graph.add_argument("--report")
    graph.add_argument("--output")

    compare = subparsers.add_parser("compare", parents=[common], help="Compare two reports")
    compare.add_argument("--report-a", required=True)
    compare.add_argument("--report-b", required=True)
    compare.add_argument("--margin", type=float, default=0.05)
    compare.add_argument("--tolerance", type=float, default=0.10)

    fixture = subparsers.add_parser("fixture", parents=[common], help="Write a planted synthetic corpus")
    fixture.add_argument("--spec", help="PlantedSpec JSON; a competition-scale spec when omitted")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Runs one subcommand and returns its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        config = load_config(args)
        written = COMMANDS[args.command](config, args)
        for path in written:
            logger.debug(f"wrote {path}")
    except AlertForgeError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Error in {args.command}: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
