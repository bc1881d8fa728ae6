"""Five-trial training and RMSE evaluation harness.

One trial trains a single model kind on one 4:1 split (one Adam step per
sample, samples shuffled each epoch) and evaluates per-year and pooled RMSE
in pixels on the held-out segments. An experiment runs all trials of one kind
and aggregates mean +- sample standard deviation.

Every random draw is keyed by (seed, trial, purpose, ...) tuples, so a config
plus dataset determines the reports exactly. Report files deliberately
exclude wall-clock times (kept in a separate timings file) so identical
reruns are byte-identical.

Predictions file format (little-endian): magic b"FGP1", uint32 sample count,
uint16 nodes, uint16 target years, 5 int16 target calendar years, then per
sample uint16 id length + UTF-8 id, predictions and targets each
nodes x years float64, row-major.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import struct
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .config import parse_flat_config
from .errors import DivergedTraining, ShapeMismatch
from .graphs import (
    NormalizationStats,
    StaticGraphSample,
    TemporalGraphSample,
    apply_normalization,
    build_temporal_sample,
    fit_normalization,
    static_view,
)
from .ingest import ThicknessRecord, _atomic_write_bytes, filter_usable, make_splits
from .network import (
    KINDS,
    forward_gcn_baseline,
    forward_gcn_lstm,
    forward_lstm_baseline,
    init_params,
    loss_and_gradients,
    save_checkpoint,
)
from .optim import adam_step, init_adam
from .spectral import scaled_laplacian

log = logging.getLogger(__name__)

PREDICTIONS_MAGIC = b"FGP1"


@dataclass
class TrainConfig:
    kind: str = "gcn_lstm"  # gcn_lstm | gcn | lstm
    epochs: int = 150
    lr: float = 0.01
    dropout: float = 0.2
    cheb_k: int = 3
    hidden: int = 64
    head_hidden: int = 32
    seed: int = 0
    norm_scope: str = "train"  # train | all
    n_trials: int = 5
    train_fraction: float = 0.8
    min_layers: int = 16
    stacked: bool = False  # reserved ablation flag; single shared cell when False
    dataset: str = ""
    out_dir: str = ""
    save_predictions: bool = True

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.norm_scope not in ("train", "all"):
            raise ValueError(f"norm_scope must be train or all, got {self.norm_scope!r}")
        if not 1 <= self.cheb_k <= 5:
            raise ValueError("cheb_k must be in 1..5")


@dataclass
class TrialReport:
    trial_index: int
    per_year_rmse: list[float]  # target years ascending
    total_rmse: float
    epoch_losses: list[float]
    seed: int
    wall_time: float
    persistence_total_rmse: float | None = None


@dataclass
class ExperimentReport:
    kind: str
    target_years: list[int]
    per_year_mean: list[float]
    per_year_std: list[float]
    total_mean: float
    total_std: float
    trials: list[TrialReport]
    failed_trials: list[dict] = field(default_factory=list)
    config_hash: str = ""
    dataset_hash: str = ""


def parse_config_text(text: str) -> TrainConfig:
    """Parse a flat `key = value` text config; '#' starts a comment."""
    cfg = parse_flat_config(text, TrainConfig())
    cfg.validate()
    return cfg


def load_config(path: str | os.PathLike) -> TrainConfig:
    return parse_config_text(Path(path).read_text())


def config_canonical_text(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(asdict(cfg).items()))


def config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(config_canonical_text(cfg).encode()).hexdigest()


def dataset_hash(records: list[ThicknessRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(r.segment_id.encode())
        h.update(np.ascontiguousarray(r.latitudes, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(r.longitudes, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(r.thickness, dtype="<i4").tobytes())
        h.update(np.ascontiguousarray(r.year_labels, dtype="<i8").tobytes())
    return h.hexdigest()


def evaluate_rmse(
    preds: np.ndarray, targets: np.ndarray
) -> tuple[np.ndarray, float]:
    """Per-year and pooled RMSE over stacked [M, N, Y] predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeMismatch(f"preds {preds.shape} vs targets {targets.shape}")
    sq = (preds - targets) ** 2
    per_year = np.sqrt(sq.mean(axis=(0, 1)))
    total = float(np.sqrt(sq.mean()))
    return per_year, total


def model_forward(kind, sample, params, rng=None, training=False, dropout_p=0.2,
                  l_tilde=None):
    if kind == "gcn_lstm":
        return forward_gcn_lstm(sample, params, rng, training, dropout_p, l_tilde)
    if kind == "gcn":
        return forward_gcn_baseline(sample, params, rng, training, dropout_p, l_tilde)
    if kind == "lstm":
        return forward_lstm_baseline(sample.features, params, rng, training, dropout_p)
    raise ValueError(f"unknown model kind {kind!r}")


def _needs_laplacian(kind: str, cheb_k: int) -> bool:
    return kind == "gcn_lstm" or (kind == "gcn" and cheb_k > 1)


def _init_for(config: TrainConfig, trial_index: int) -> dict:
    in_channels = 12 if config.kind == "gcn" else 3
    return init_params(
        config.kind,
        cheb_k=config.cheb_k,
        in_channels=3,
        hidden=config.hidden,
        head_hidden=config.head_hidden,
        n_targets=5,
        static_channels=in_channels,
        seed=(config.seed, trial_index, 1),
    )


def run_trial(
    config: TrainConfig,
    trial_index: int,
    train_samples: list,
    test_samples: list,
) -> TrialReport:
    """Train one model on one split; samples must already be normalized."""
    report, _ = run_trial_full(config, trial_index, train_samples, test_samples)
    return report


def run_trial_full(config, trial_index, train_samples, test_samples):
    t0 = time.perf_counter()
    kind = config.kind
    params = _init_for(config, trial_index)
    state = init_adam(params, lr=config.lr)
    laps_train = laps_test = [None] * max(len(train_samples), len(test_samples))
    if _needs_laplacian(kind, config.cheb_k):
        laps_train = [scaled_laplacian(s.adjacency) for s in train_samples]
        laps_test = [scaled_laplacian(s.adjacency) for s in test_samples]
    epoch_losses = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            (config.seed, trial_index, 2, epoch)
        ).permutation(len(train_samples))
        losses = np.empty(len(order))
        for pos, idx in enumerate(order):
            idx = int(idx)
            rng = np.random.default_rng((config.seed, trial_index, 3, epoch, idx))
            loss, _, grads = loss_and_gradients(
                kind,
                train_samples[idx],
                params,
                train_samples[idx].targets,
                rng=rng,
                training=True,
                dropout_p=config.dropout,
                l_tilde=laps_train[idx],
            )
            if not math.isfinite(loss):
                raise DivergedTraining(
                    f"trial {trial_index}: loss became {loss} at epoch {epoch}"
                )
            adam_step(params, grads, state)
            losses[pos] = loss
        epoch_losses.append(float(losses.mean()))
    preds = np.stack(
        [
            model_forward(kind, s, params, training=False, l_tilde=laps_test[i])
            for i, s in enumerate(test_samples)
        ]
    )
    targets = np.stack([s.targets for s in test_samples])
    per_year, total = evaluate_rmse(preds, targets)
    report = TrialReport(
        trial_index=trial_index,
        per_year_rmse=[float(v) for v in per_year],
        total_rmse=total,
        epoch_losses=epoch_losses,
        seed=config.seed,
        wall_time=time.perf_counter() - t0,
    )
    return report, {"params": params, "preds": preds, "targets": targets}


def run_experiment(
    config: TrainConfig, records: list[ThicknessRecord]
) -> ExperimentReport:
    """Five-trial experiment over the 4:1 split plans; writes report files.

    A diverged trial is recorded under failed_trials and excluded from the
    aggregates (partial-report salvage).
    """
    config.validate()
    usable = filter_usable(records, config.min_layers)
    if len(usable) < 2:
        raise ValueError(f"need >= 2 usable records, got {len(usable)}")
    plans = make_splits(
        usable, config.n_trials, config.train_fraction, seed=config.seed
    )
    by_id = {r.segment_id: r for r in usable}
    target_years = [int(y) for y in usable[0].year_labels[4::-1]]
    temporal = {r.segment_id: build_temporal_sample(r) for r in usable}

    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write_bytes(
            out_dir / "splits.json",
            json.dumps(
                [asdict_plan(p) for p in plans], indent=2, sort_keys=True
            ).encode(),
        )

    trials: list[TrialReport] = []
    failed: list[dict] = []
    for plan in plans:
        fit_ids = (
            plan.train_ids if config.norm_scope == "train" else list(by_id.keys())
        )
        stats = fit_normalization(
            [temporal[i] for i in fit_ids],
            fitted_on=f"trial-{plan.trial_index}-{config.norm_scope}",
        )
        train_s = [_prepared(temporal[i], stats, config.kind) for i in plan.train_ids]
        test_s = [_prepared(temporal[i], stats, config.kind) for i in plan.test_ids]
        try:
            report, artifacts = run_trial_full(
                config, plan.trial_index, train_s, test_s
            )
        except DivergedTraining as exc:
            log.warning("trial %d diverged: %s", plan.trial_index, exc)
            failed.append({"trial_index": plan.trial_index, "error": str(exc)})
            continue
        report.persistence_total_rmse = _persistence_rmse(
            [temporal[i] for i in plan.test_ids]
        )
        trials.append(report)
        if out_dir:
            save_checkpoint(
                out_dir / f"trial{plan.trial_index}.ckpt",
                artifacts["params"],
                {
                    "kind": config.kind,
                    "cheb_k": config.cheb_k,
                    "hidden": config.hidden,
                    "trial": plan.trial_index,
                },
            )
            if config.save_predictions:
                save_predictions(
                    out_dir / f"trial{plan.trial_index}.preds",
                    plan.test_ids,
                    artifacts["preds"],
                    artifacts["targets"],
                    target_years,
                )
    if not trials:
        raise DivergedTraining("all trials diverged")

    per_year = np.array([t.per_year_rmse for t in trials])
    totals = np.array([t.total_rmse for t in trials])
    report = ExperimentReport(
        kind=config.kind,
        target_years=target_years,
        per_year_mean=[float(v) for v in per_year.mean(axis=0)],
        per_year_std=[float(v) for v in per_year.std(axis=0, ddof=1)]
        if len(trials) > 1
        else [0.0] * per_year.shape[1],
        total_mean=float(totals.mean()),
        total_std=float(totals.std(ddof=1)) if len(trials) > 1 else 0.0,
        trials=trials,
        failed_trials=failed,
        config_hash=config_hash(config),
        dataset_hash=dataset_hash(records),
    )
    if out_dir:
        write_report_files(report, out_dir)
    return report


def _prepared(sample: TemporalGraphSample, stats: NormalizationStats, kind: str):
    normalized = apply_normalization(sample, stats)
    if kind == "gcn":
        return static_view(normalized)
    return normalized


def _persistence_rmse(raw_test_samples: list[TemporalGraphSample]) -> float:
    from .synth import persistence_baseline

    preds = np.stack([persistence_baseline(s) for s in raw_test_samples])
    targets = np.stack([s.targets for s in raw_test_samples])
    return evaluate_rmse(preds, targets)[1]


def asdict_plan(plan) -> dict:
    return {
        "trial_index": plan.trial_index,
        "train_ids": plan.train_ids,
        "test_ids": plan.test_ids,
        "seed": plan.seed,
    }


# ---------------------------------------------------------------------------
# report files


def report_json_bytes(report: ExperimentReport) -> bytes:
    payload = {
        "kind": report.kind,
        "target_years": report.target_years,
        "per_year_mean": report.per_year_mean,
        "per_year_std": report.per_year_std,
        "total_mean": report.total_mean,
        "total_std": report.total_std,
        "trials": [
            {
                "trial_index": t.trial_index,
                "per_year_rmse": t.per_year_rmse,
                "total_rmse": t.total_rmse,
                "epoch_losses": t.epoch_losses,
                "seed": t.seed,
                "persistence_total_rmse": t.persistence_total_rmse,
            }
            for t in report.trials
        ],
        "failed_trials": report.failed_trials,
        "provenance": {
            "config_hash": report.config_hash,
            "dataset_hash": report.dataset_hash,
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True).encode()


def report_csv_bytes(report: ExperimentReport) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["model"] + [str(y) for y in report.target_years] + ["total"])
    writer.writerow(
        [report.kind]
        + [
            f"{m:.3f} +- {s:.3f}"
            for m, s in zip(report.per_year_mean, report.per_year_std)
        ]
        + [f"{report.total_mean:.3f} +- {report.total_std:.3f}"]
    )
    return out.getvalue().encode()


def write_report_files(report: ExperimentReport, out_dir: str | os.PathLike):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(out_dir / "report.json", report_json_bytes(report))
    _atomic_write_bytes(out_dir / "report.csv", report_csv_bytes(report))
    timings = {
        f"trial{t.trial_index}_wall_time_s": round(t.wall_time, 3)
        for t in report.trials
    }
    _atomic_write_bytes(
        out_dir / "timings.json",
        json.dumps(timings, indent=2, sort_keys=True).encode(),
    )


# ---------------------------------------------------------------------------
# predictions file + continuous prediction curves


def save_predictions(path, segment_ids, preds, targets, target_years):
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    m, n, years = preds.shape
    buf = bytearray()
    buf += PREDICTIONS_MAGIC
    buf += struct.pack("<IHH", m, n, years)
    buf += struct.pack(f"<{years}h", *[int(y) for y in target_years])
    for i, ident in enumerate(segment_ids):
        raw = ident.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += np.ascontiguousarray(preds[i], dtype="<f8").tobytes()
        buf += np.ascontiguousarray(targets[i], dtype="<f8").tobytes()
    _atomic_write_bytes(path, bytes(buf))


def load_predictions(path):
    data = Path(path).read_bytes()
    if data[:4] != PREDICTIONS_MAGIC:
        raise ValueError(f"{path}: not a firngraph predictions file")
    m, n, years = struct.unpack_from("<IHH", data, 4)
    off = 12
    target_years = list(struct.unpack_from(f"<{years}h", data, off))
    off += 2 * years
    ids, preds, targets = [], [], []
    for _ in range(m):
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        ids.append(data[off : off + ln].decode("utf-8"))
        off += ln
        for dest in (preds, targets):
            dest.append(
                np.frombuffer(data, dtype="<f8", count=n * years, offset=off)
                .reshape(n, years)
                .copy()
            )
            off += 8 * n * years
    return ids, np.stack(preds), np.stack(targets), target_years


def write_trial_curves(predictions_path, out_dir, seed: int = 0):
    """Continuous truth-vs-prediction curves per target year (PNG + CSV).

    Test nodes are pooled across segments and plotted in a seed-shuffled
    order, one figure and one CSV per year.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ids, preds, targets, target_years = load_predictions(predictions_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flat_pred = preds.reshape(-1, preds.shape[2])
    flat_true = targets.reshape(-1, targets.shape[2])
    order = np.random.default_rng(seed).permutation(flat_pred.shape[0])
    written = []
    for y, year in enumerate(target_years):
        true_y = flat_true[order, y]
        pred_y = flat_pred[order, y]
        csv_path = out_dir / f"continuous_{year}.csv"
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["node_index", "true_px", "predicted_px"])
        for i, (t, p) in enumerate(zip(true_y, pred_y)):
            writer.writerow([i, f"{t:.6f}", f"{p:.6f}"])
        _atomic_write_bytes(csv_path, out.getvalue().encode())
        fig, ax = plt.subplots(figsize=(10, 3))
        ax.plot(true_y, lw=0.7, label="ground truth")
        ax.plot(pred_y, lw=0.7, label="predicted")
        ax.set_xlabel("unsorted test node index")
        ax.set_ylabel("thickness (px)")
        ax.set_title(str(year))
        ax.legend(loc="upper right")
        png_path = out_dir / f"continuous_{year}.png"
        fig.savefig(png_path, dpi=120)
        plt.close(fig)
        written.extend([csv_path, png_path])
    return written
