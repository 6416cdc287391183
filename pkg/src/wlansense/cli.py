"""Command-line entry point.

Every subcommand reads newline-delimited JSON from ``--input`` (``-`` for
standard input) and writes it to ``--out`` (standard output by default).
Exit status: 0 on success, 1 on data errors, 2 on configuration errors.
"""

import argparse
import contextlib
import json
import logging
import sys

import numpy as np

from . import __version__
from .channel import Scenario, load_scenario, synthesize_sequence
from .config import PipelineConfig
from .detector import evaluate, train_svm
from .exceptions import ConfigurationError, DataError, StageError, WlanSenseError
from .features import feature_matrix
from .formats import (
    dumps, load_model, parse_events, parse_features, parse_frames, save_model, write_jsonl,
)
from .harness import ExperimentPlan, check_orderings, run_suite, write_reports
from .pipeline import FeatureStream, iter_aoa, run_pipeline
from .publish import publish_events
from .sanitize import sanitize_stream

logger = logging.getLogger("wlansense")

# Two paths, the second one walking away during frames 40..79.
DEFAULT_SCENARIO = {
    "paths": [
        {"aoa_deg": 20.0, "gain": 0.01},
        {"aoa_deg": -35.0, "gain": 0.006, "delay_s": 60e-9},
    ],
    "segments": [{"start": 40, "stop": 79, "aoa_drift_deg": 0.6, "gain_jitter": 0.05}],
    "noise_power": 1e-6,
    "sto_max_s": 100e-9,
    "random_phase_offset": True,
}


@contextlib.contextmanager
def _open_in(path):
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path) as fh:
            yield fh


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w") as fh:
            yield fh


def _frames(fh, cfg):
    return parse_frames(fh, num_antennas=cfg.num_antennas)


def cmd_simulate(args, cfg):
    if args.scenario:
        scenario, seed, num_frames = load_scenario(args.scenario)
    else:
        scenario, seed, num_frames = Scenario.from_dict(DEFAULT_SCENARIO), 0, 120
    seed = args.seed if args.seed is not None else seed
    num_frames = args.num_frames or num_frames
    if scenario.geometry.num_antennas != cfg.num_antennas:
        raise ConfigurationError("scenario and configuration disagree on the number of antennas")
    frames, _ = synthesize_sequence(scenario, num_frames, seed, window=cfg.window)
    with _open_out(args.out) as out:
        write_jsonl(frames, out)


def cmd_sanitize(args, cfg):
    with _open_in(args.input) as fh, _open_out(args.out) as out:
        write_jsonl(sanitize_stream(_frames(fh, cfg), cfg.window, cfg.smooth_amplitude), out)


def cmd_aoa(args, cfg):
    with _open_in(args.input) as fh, _open_out(args.out) as out:
        write_jsonl(iter_aoa(cfg, _frames(fh, cfg)), out)


def cmd_features(args, cfg):
    stream = FeatureStream(cfg)

    def vectors(frames):
        for frame in frames:
            fv = stream.push(frame)
            if fv is not None:
                yield fv

    with _open_in(args.input) as fh, _open_out(args.out) as out:
        write_jsonl(vectors(_frames(fh, cfg)), out)


def cmd_train(args, cfg):
    with _open_in(args.input) as fh:
        vectors = list(parse_features(fh))
    if not vectors:
        raise DataError("no feature records to train on")
    X, y = feature_matrix(vectors, cfg.feature_layout)
    if y is None:
        raise DataError("every training feature record needs a label")
    keep = ~np.isnan(X).any(axis=1)
    if not keep.all():
        logger.warning("dropping %d rows with missing AoA values", int((~keep).sum()))
    model = train_svm(X[keep], y[keep], C=args.C, epochs=args.epochs,
                      seed=args.seed if args.seed is not None else 0,
                      layout=cfg.feature_layout, trained_on=args.input or "-")
    save_model(model, args.model)


def cmd_detect(args, cfg):
    model = load_model(args.model) if args.model else None
    with _open_in(args.input) as fh, _open_out(args.out) as out:
        write_jsonl(run_pipeline(cfg, _frames(fh, cfg), model), out)


def cmd_eval(args, cfg):
    model = load_model(args.model)
    with _open_in(args.input) as fh:
        vectors = list(parse_features(fh))
    if not vectors:
        raise DataError("no feature records to evaluate")
    X, y = feature_matrix(vectors, model.layout)
    if y is None:
        raise DataError("every evaluation feature record needs a label")
    # Missing AoA entries get the training means, as in live detection.
    X = np.where(np.isnan(X), model.feature_means[None, :], X)
    report = evaluate(model, X, y)
    with _open_out(args.out) as out:
        out.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")


def cmd_publish(args, cfg):
    endpoint = args.endpoint or cfg.stream_endpoint
    with _open_in(args.input) as fh:
        report = publish_events(endpoint, parse_events(fh), dry_run=args.dry_run)
    print(dumps(report.to_dict()), file=sys.stderr)


def cmd_eval_suite(args, cfg):
    try:
        plan = ExperimentPlan.from_file(args.plan) if args.plan else ExperimentPlan()
    except OSError as exc:
        raise ConfigurationError(f"cannot read plan {args.plan}: {exc}") from None
    out_dir = args.out or plan.out_dir
    if not out_dir:
        raise ConfigurationError("eval-suite needs --out or an out_dir in the plan")
    table1, table2 = run_suite(plan)
    write_reports(out_dir, table1, table2)
    for name, ok in check_orderings(table1, table2).items():
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=sys.stderr)


def _load_config(path):
    if not path:
        return PipelineConfig()
    try:
        return PipelineConfig.from_file(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="wlansense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON pipeline configuration")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--dry-run", action="store_true", help="publish to standard output")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, io=True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if io:
            p.add_argument("--input", "-i", default="-")
            p.add_argument("--out", "-o", default="-")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "generate synthetic CSI frames", io=False)
    p.add_argument("--scenario", help="scenario file (built-in two-path scene if omitted)")
    p.add_argument("--num-frames", type=int, default=None)
    p.add_argument("--out", "-o", default="-")
    add("sanitize", cmd_sanitize, "remove STO slope and offset, smooth amplitudes")
    add("aoa", cmd_aoa, "MUSIC angles per window")
    add("features", cmd_features, "per-window feature vectors")
    p = add("train", cmd_train, "train a linear SVM on labeled feature vectors", io=False)
    p.add_argument("--input", "--corpus", "-i", dest="input", default="-")
    p.add_argument("--model", "--out", "-m", "-o", dest="model", required=True, help="output model file")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=200)
    p = add("detect", cmd_detect, "run the full pipeline on frames", io=False)
    p.add_argument("--input", "--stream", "-i", dest="input", default="-")
    p.add_argument("--out", "-o", default="-")
    p.add_argument("--model", "-m", help="trained model (not needed in threshold mode)")
    p = add("eval", cmd_eval, "accuracy / missed detection / false alarm of a model", io=False)
    p.add_argument("--input", "--corpus", "-i", dest="input", default="-")
    p.add_argument("--out", "-o", default="-")
    p.add_argument("--model", "-m", required=True)
    p = add("publish", cmd_publish, "send events as JSON lines over TCP", io=False)
    p.add_argument("--input", "-i", default="-")
    p.add_argument("--endpoint", help="host:port (default from configuration)")
    p = add("eval-suite", cmd_eval_suite, "write the feature and cross-setup report tables", io=False)
    p.add_argument("--plan", help="experiment plan file (default plan if omitted)")
    p.add_argument("--out", "-o", help="report directory")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        args.func(args, cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.cause, ConfigurationError) else 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (WlanSenseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
