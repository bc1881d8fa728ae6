"""Command-line entry point wiring the pipeline.

Subcommands: ingest, synth, build-graphs, train, evaluate, report. Exit
codes: 0 success, 1 validation error (bad flags or inputs), 2 runtime
failure (e.g. diverged training). All output files are written atomically
(temp file + rename), so re-running a command with the same inputs
overwrites outputs with identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_flat_config
from .errors import DivergedTraining, FirngraphError
from .graphs import (
    apply_normalization,
    build_temporal_sample,
    fit_normalization,
    load_graphs,
    save_graphs,
    static_view,
)
from .ingest import (
    DEFAULT_MIN_LAYERS,
    DEFAULT_SURFACE_YEAR,
    SplitPlan,
    ingest_directories,
    load_thickness_records,
    save_dataset,
)
from .network import load_checkpoint
from .synth import SynthParams, generate_corpus
from .train import (
    evaluate_rmse,
    load_config,
    model_forward,
    run_experiment,
    write_trial_curves,
)

log = logging.getLogger("firngraph")

FORMAT_VERSIONS = "dataset FGD1, graphs FGG1, checkpoint FGC1 v1, predictions FGP1"


class _Parser(argparse.ArgumentParser):
    """argparse with exit code 1 on usage/validation errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="firngraph", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"firngraph {__version__} ({FORMAT_VERSIONS})",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse labeled masks into a dataset file")
    p.add_argument("--masks", required=True, help="directory of binary label masks")
    p.add_argument("--geo", required=True, help="directory of lat/lon text tables")
    p.add_argument("--out", required=True, help="output dataset file")
    p.add_argument("--min-layers", type=int, default=DEFAULT_MIN_LAYERS)
    p.add_argument("--surface-year", type=int, default=DEFAULT_SURFACE_YEAR)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--params", help="flat key = value parameter file")
    p.add_argument("--out", required=True)
    p.add_argument("--n-segments", type=int, help="override n_segments")
    p.add_argument("--seed", type=int, help="override seed")

    p = sub.add_parser("build-graphs", help="convert a dataset + split into graphs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", required=True, help="split plan JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--norm-scope", choices=("train", "all"), default="train")
    p.add_argument(
        "--subset",
        choices=("train", "test", "all"),
        default="all",
        help="which side of the split to write",
    )

    p = sub.add_parser("train", help="run the multi-trial experiment")
    p.add_argument("--config", required=True, help="flat key = value config file")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a graphs file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graphs", required=True)

    p = sub.add_parser("report", help="emit continuous prediction-vs-truth curves")
    p.add_argument("--trial", required=True, help="trial predictions file")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {
        "ingest": _cmd_ingest,
        "synth": _cmd_synth,
        "build-graphs": _cmd_build_graphs,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "report": _cmd_report,
    }[args.command]
    try:
        return handler(args)
    except DivergedTraining as exc:
        log.error("runtime failure: %s", exc)
        return 2
    except (FirngraphError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


def _cmd_ingest(args) -> int:
    records = ingest_directories(args.masks, args.geo, surface_year=args.surface_year)
    usable = [r for r in records if r.n_layers >= args.min_layers]
    log.info(
        "parsed %d segments, %d with >= %d layers",
        len(records),
        len(usable),
        args.min_layers,
    )
    if not usable:
        log.error("no usable segments")
        return 1
    save_dataset(usable, args.out)
    log.info("wrote %s", args.out)
    return 0


def _cmd_synth(args) -> int:
    params = SynthParams()
    if args.params:
        parse_flat_config(Path(args.params).read_text(), params)
    if args.n_segments is not None:
        params.n_segments = args.n_segments
    if args.seed is not None:
        params.seed = args.seed
    log.info("synth params: %s", params)
    save_dataset(generate_corpus(params), args.out)
    log.info("wrote %s", args.out)
    return 0


def _cmd_build_graphs(args) -> int:
    records = load_thickness_records(args.dataset)
    plan_raw = json.loads(Path(args.split).read_text())
    plan = SplitPlan(
        trial_index=plan_raw["trial_index"],
        train_ids=plan_raw["train_ids"],
        test_ids=plan_raw["test_ids"],
        seed=plan_raw["seed"],
    )
    by_id = {r.segment_id: r for r in records}
    missing = [i for i in plan.train_ids + plan.test_ids if i not in by_id]
    if missing:
        log.error("split references %d ids absent from dataset: %s ...",
                  len(missing), missing[:3])
        return 1
    temporal = {i: build_temporal_sample(by_id[i]) for i in by_id}
    fit_ids = plan.train_ids if args.norm_scope == "train" else sorted(by_id)
    stats = fit_normalization(
        [temporal[i] for i in fit_ids],
        fitted_on=f"trial-{plan.trial_index}-{args.norm_scope}",
    )
    subset = {
        "train": plan.train_ids,
        "test": plan.test_ids,
        "all": plan.train_ids + plan.test_ids,
    }[args.subset]
    samples = [apply_normalization(temporal[i], stats) for i in subset]
    save_graphs(samples, stats, args.out)
    log.info("wrote %d graphs to %s", len(samples), args.out)
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config)
    if not config.dataset:
        log.error("config must set `dataset`")
        return 1
    log.info("resolved config: %s", config)
    records = load_thickness_records(config.dataset)
    report = run_experiment(config, records)
    log.info(
        "%s: total RMSE %.3f +- %.3f px over %d trials",
        report.kind,
        report.total_mean,
        report.total_std,
        len(report.trials),
    )
    return 0


def _cmd_evaluate(args) -> int:
    params, meta = load_checkpoint(args.checkpoint)
    samples, stats = load_graphs(args.graphs)
    kind = meta.get("kind", "gcn_lstm")
    n_feat = samples[0].features.shape[2]
    if kind == "gcn":
        static_width = 2 + samples[0].features.shape[0]
        theta_in = params["gcn.theta"].shape[1]
        if theta_in != static_width:
            log.error(
                "checkpoint filter expects %d channels but graphs provide %d "
                "(gcn.theta %s vs static features [%d, %d])",
                theta_in,
                static_width,
                params["gcn.theta"].shape,
                samples[0].features.shape[1],
                static_width,
            )
            return 1
        inputs = [static_view(s) for s in samples]
    else:
        wx_in = params["cell.wx"].shape[1]
        if wx_in != n_feat:
            log.error(
                "checkpoint filter expects %d channels but graphs provide %d "
                "(cell.wx %s vs features %s)",
                wx_in,
                n_feat,
                params["cell.wx"].shape,
                samples[0].features.shape,
            )
            return 1
        inputs = samples
    preds = np.stack(
        [model_forward(kind, s, params, training=False) for s in inputs]
    )
    targets = np.stack([s.targets for s in samples])
    per_year, total = evaluate_rmse(preds, targets)
    print(f"normalization: {stats.fitted_on or 'unrecorded'}")
    for y, rmse in enumerate(per_year):
        print(f"year {y}: RMSE {rmse:.4f} px")
    print(f"total: RMSE {total:.4f} px")
    return 0


def _cmd_report(args) -> int:
    written = write_trial_curves(args.trial, args.out)
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
