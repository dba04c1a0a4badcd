"""Experiment orchestration: data preparation, scenario runs, JSON reports.

A run takes one ExperimentConfig and produces a report dict with a fixed
schema: the resolved config, per-scenario per-trial metrics and exact
communication summaries, cross-trial aggregates, and a `meta` block holding
the only volatile values (timestamp, wall time). Serializing everything but
`meta` with sorted keys yields a canonical byte string, so two runs of the
same config can be compared for equality; `report_fingerprint` hashes it.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from math import isqrt
from pathlib import Path

import numpy as np

from . import __version__, attacks, datasets, federation, metrics, predictors, standins
from .config import DatasetConfig, ExperimentConfig, ModelConfig
from .errors import ConfigError, ContractError
from .seeding import SEED_POLICY

SCHEMA_VERSION = 1


def default_synth_width(input_dim: int) -> int:
    """Embedding width for a node holding input_dim features."""
    return max(2, min(input_dim, 16))


def model_spec(cfg: ModelConfig, output_dim: int) -> predictors.PredictorSpec:
    return predictors.PredictorSpec(
        kind=cfg.kind,
        output_dim=output_dim,
        hidden_dim=cfg.hidden_dim,
        depth=cfg.depth,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        activation=cfg.activation,
        optimizer=cfg.optimizer,
        n_rounds=cfg.n_rounds,
        max_depth=cfg.max_depth,
        shrinkage=cfg.shrinkage,
        min_leaf=cfg.min_leaf,
    )


def load_dataset(cfg: DatasetConfig) -> datasets.Table:
    """Materialize the configured dataset pool (before sharing and splitting)."""
    if cfg.kind == "blobs":
        return datasets.synth_blobs(
            datasets.BlobSpec(
                n=cfg.n,
                dim=cfg.dim,
                classes=cfg.classes,
                separation=cfg.separation,
                noise=cfg.noise,
            ),
            seed_parts=(cfg.seed, "blobs"),
        )
    if cfg.kind == "digits":
        return standins.digit_table(cfg.n, cfg.seed)
    if cfg.kind == "credit":
        return standins.credit_table(cfg.n, cfg.seed)
    if cfg.kind == "idx":
        return datasets.load_idx_pair(Path(cfg.images_path), Path(cfg.labels_path))
    if cfg.kind == "csv":
        return datasets.load_csv(Path(cfg.path), cfg.label_column)
    raise ConfigError([f"unknown dataset kind {cfg.kind!r}"])


def _should_standardize(cfg: DatasetConfig) -> bool:
    if cfg.standardize == "true":
        return True
    if cfg.standardize == "false":
        return False
    return cfg.kind in ("blobs", "credit", "csv")


def build_split(cfg: ExperimentConfig, table: datasets.Table) -> datasets.VerticalSplit:
    scheme = cfg.partition.scheme
    if scheme == "equal-slices":
        return datasets.equal_column_slices(table.dim, cfg.partition.parties)
    if scheme == "image-bands":
        side = isqrt(table.dim)
        if side * side != table.dim:
            raise ConfigError(
                [f"image-bands needs a square image, got {table.dim} features"]
            )
        return datasets.image_column_slices(side, side, cfg.partition.parties)
    if scheme == "credit":
        return datasets.credit_feature_split(table.feature_names)
    if scheme == "explicit":
        return datasets.VerticalSplit(
            [np.asarray(cols, dtype=np.int64) for cols in cfg.partition.explicit_columns]
        )
    raise ConfigError([f"unknown partition scheme {scheme!r}"])


@dataclass
class PreparedData:
    """Standardized train/test tables plus the vertical partition."""

    train: datasets.Table
    test: datasets.Table
    split: datasets.VerticalSplit
    synth_widths: list[int]
    class_count: int


def prepare(cfg: ExperimentConfig) -> PreparedData:
    """Load, intersect, split, and standardize the configured dataset.

    shared_fraction simulates entity alignment: only that fraction of the
    pool is common to all parties and usable for federation. The train/test
    split is stratified, and standardization statistics come from the train
    side only.
    """
    table = load_dataset(cfg.dataset)
    if cfg.dataset.shared_fraction < 1.0:
        table = datasets.subsample(
            table,
            int(round(cfg.dataset.shared_fraction * table.n)),
            seed_parts=(cfg.dataset.seed, "shared"),
        )
    train, test = datasets.train_test_split(
        table, cfg.dataset.test_fraction, seed_parts=(cfg.dataset.seed, "split")
    )
    if _should_standardize(cfg.dataset):
        scaler = datasets.fit_standardizer(train.features)
        train = datasets.Table(
            scaler.apply(train.features),
            train.labels,
            train.feature_names,
            train.class_count,
        )
        test = datasets.Table(
            scaler.apply(test.features),
            test.labels,
            test.feature_names,
            test.class_count,
        )
    split = build_split(cfg, train)
    split.validate_cover(train.dim)
    if cfg.partition.scheme == "credit" and cfg.partition.parties != 2:
        raise ConfigError(["the credit partition is a two-party layout"])
    bad = [k for k in cfg.partition.colocated if not 0 <= k < split.party_count]
    if bad:
        raise ConfigError([f"colocated node ids out of range: {bad}"])
    if cfg.protocol.synth_width:
        widths = [cfg.protocol.synth_width] * split.party_count
    else:
        widths = [default_synth_width(d) for d in split.dims()]
    class_count = max(train.class_count, test.class_count)
    return PreparedData(
        train=train,
        test=test,
        split=split,
        synth_widths=widths,
        class_count=class_count,
    )


def _metric_trial(
    scores: np.ndarray, classes: np.ndarray, actual: np.ndarray
) -> dict:
    return metrics.evaluate(scores, classes, actual).as_dict()


def run_trial(
    scenario: str, prepared: PreparedData, cfg: ExperimentConfig, trial: int
) -> dict:
    """One seeded trial of one scenario; returns the report record."""
    seed_parts = (cfg.base_seed, scenario, trial)
    train, test = prepared.train, prepared.test
    record: dict = {"trial": trial}

    if scenario in ("single-node", "centralized"):
        if scenario == "single-node":
            idx = cfg.single_node_index
            if not 0 <= idx < prepared.split.party_count:
                raise ConfigError([f"single_node_index {idx} out of range"])
            x_train = prepared.split.node_view(train, idx)
            x_test = prepared.split.node_view(test, idx)
        else:
            x_train, x_test = train.features, test.features
        spec = model_spec(cfg.server_model, prepared.class_count)
        model = predictors.fit_classifier(
            spec, x_train, train.labels, seed_parts=(*seed_parts, "fit")
        )
        scores = predictors.predict(model, x_test)
        classes = np.argmax(scores, axis=1)
        record["metrics"] = _metric_trial(scores, classes, test.labels)
        record["training_comms"] = federation.CommLedger().summary()
        record["inference_comms"] = federation.CommLedger().summary()
        record["final_train_loss"] = model.loss_trace[-1] if model.loss_trace else None
        return record

    node_spec = model_spec(cfg.node_model, prepared.synth_widths[0])
    server_spec = model_spec(cfg.server_model, prepared.class_count)
    colocated = frozenset(cfg.partition.colocated)
    if scenario == "vfl":
        fed = federation.run_vfl(
            prepared.split,
            train.features,
            train.labels,
            prepared.class_count,
            node_spec,
            server_spec,
            prepared.synth_widths,
            base_seed=seed_parts,
            epochs=cfg.protocol.vfl_epochs or cfg.server_model.epochs,
            batch_size=cfg.protocol.vfl_batch_size or cfg.server_model.batch_size,
            colocated=colocated,
        )
        record["expected_training_messages"] = federation.expected_vfl_messages(
            train.n,
            cfg.protocol.vfl_batch_size or cfg.server_model.batch_size,
            prepared.split.party_count,
            cfg.protocol.vfl_epochs or cfg.server_model.epochs,
        )
    elif scenario == "sbvfl":
        fed = federation.run_sbvfl(
            prepared.split,
            train.features,
            train.labels,
            prepared.class_count,
            node_spec,
            server_spec,
            prepared.synth_widths,
            base_seed=seed_parts,
            per_class=cfg.protocol.privacy_multiplier,
            codebook_policy=cfg.protocol.codebook_policy,
            distinct_labels=cfg.protocol.distinct_labels,
            jitter_radius=cfg.protocol.jitter_radius or None,
            colocated=colocated,
            concurrent=cfg.protocol.concurrent_nodes,
        )
        record["expected_training_messages"] = federation.expected_sbvfl_messages(
            prepared.split.party_count
        )
    elif scenario == "lvfl":
        fed = federation.run_lvfl(
            prepared.split,
            train.features,
            train.labels,
            prepared.class_count,
            node_spec,
            server_spec,
            prepared.synth_widths,
            base_seed=seed_parts,
            colocated=colocated,
        )
        record["expected_training_messages"] = federation.expected_lvfl_messages(
            prepared.split.party_count
        )
    else:
        raise ConfigError([f"unknown scenario {scenario!r}"])

    prediction = federation.predict_federated(fed, prepared.split, test.features)
    record["metrics"] = _metric_trial(prediction.scores, prediction.classes, test.labels)
    record["training_comms"] = fed.training_ledger.summary()
    record["inference_comms"] = prediction.ledger.summary()
    record["embedding_collision_pairs"] = prediction.embedding_collision_pairs
    record["final_train_loss"] = fed.loss_trace[-1] if fed.loss_trace else None
    return record


def _aggregate_metrics(trial_records: list[dict]) -> dict:
    out: dict = {}
    for key in ("accuracy", "auc", "area_ratio", "f1"):
        values = [
            rec["metrics"][key]
            for rec in trial_records
            if rec["metrics"].get(key) is not None
        ]
        out[key] = metrics.aggregate(values) if values else None
    return out


def run_experiment(
    cfg: ExperimentConfig, scenarios: tuple[str, ...] | None = None
) -> dict:
    """Run every (scenario, trial) pair and assemble the report dict."""
    from .config import config_as_dict

    started = time.time()
    prepared = prepare(cfg)
    chosen = scenarios if scenarios is not None else cfg.scenarios
    scenario_blocks: dict = {}
    for scenario in chosen:
        records = [
            run_trial(scenario, prepared, cfg, trial) for trial in range(cfg.trials)
        ]
        scenario_blocks[scenario] = {
            "trials": records,
            "aggregate": _aggregate_metrics(records),
        }
    report = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "seed_policy": SEED_POLICY,
        "config": config_as_dict(cfg),
        "data": {
            "train_rows": prepared.train.n,
            "test_rows": prepared.test.n,
            "feature_dim": prepared.train.dim,
            "class_count": prepared.class_count,
            "node_input_dims": prepared.split.dims(),
            "synth_widths": prepared.synth_widths,
        },
        "scenarios": scenario_blocks,
        "meta": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_time_s": round(time.time() - started, 3),
        },
    }
    return report


def run_attack_sweep(cfg: ExperimentConfig) -> dict:
    """Label-inference sweep over privacy multipliers on the configured data."""
    started = time.time()
    prepared = prepare(cfg)
    points = attacks.attack_sweep(
        prepared.train.labels,
        prepared.class_count,
        width=prepared.synth_widths[0],
        per_class_values=cfg.attack.per_class_values,
        budget=cfg.attack.budget or None,
        trials=cfg.attack.trials,
        base_seed=cfg.base_seed,
        policy=cfg.protocol.codebook_policy,
        include_distinct=cfg.attack.include_distinct,
        jitter_radius=cfg.protocol.jitter_radius or None,
    )
    from .config import config_as_dict

    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "seed_policy": SEED_POLICY,
        "config": config_as_dict(cfg),
        "sweep": [p.as_dict() for p in points],
        "meta": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_time_s": round(time.time() - started, 3),
        },
    }


def canonical_report_bytes(report: dict) -> bytes:
    """Deterministic serialization: sorted keys, volatile `meta` removed."""
    stripped = {k: v for k, v in report.items() if k != "meta"}
    return json.dumps(stripped, sort_keys=True, indent=2).encode()


def report_fingerprint(report: dict) -> str:
    return hashlib.sha256(canonical_report_bytes(report)).hexdigest()


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")


def _fmt(value, digits=4) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def report_text(report: dict, counting_mode: str | None = None) -> str:
    """Human-readable summary of a run or attack-sweep report."""
    lines: list[str] = []
    if "sweep" in report:
        lines.append("attack sweep (recovery fraction of training labels)")
        lines.append(f"{'per_class':>9}  {'distinct':>8}  {'mean':>7}  {'std':>7}  {'beyond_known':>12}")
        for point in report["sweep"]:
            lines.append(
                f"{point['per_class']:>9}  {str(point['distinct']):>8}"
                f"  {point['mean_recovery']:>7.4f}  {point['std_recovery']:>7.4f}"
                f"  {point['mean_beyond_known']:>12.1f}"
            )
        return "\n".join(lines)
    mode = counting_mode or report["config"]["counting_mode"]
    data = report["data"]
    lines.append(
        f"rows: {data['train_rows']} train / {data['test_rows']} test, "
        f"{data['feature_dim']} features, {data['class_count']} classes, "
        f"{len(data['node_input_dims'])} nodes"
    )
    lines.append(f"communication counting mode: {mode}")
    header = (
        f"{'scenario':<12} {'accuracy':>16} {'auc':>16} {'area_ratio':>16}"
        f" {'f1':>16} {'train msgs':>10} {'train MB':>10}"
    )
    lines.append(header)
    for name, block in report["scenarios"].items():
        agg = block["aggregate"]

        def cell(metric):
            stats = agg.get(metric)
            if not stats:
                return "-"
            return f"{stats['mean']:.4f} +/- {stats['std']:.4f}"

        comms = block["trials"][0]["training_comms"][mode]["total"]
        lines.append(
            f"{name:<12} {cell('accuracy'):>16} {cell('auc'):>16}"
            f" {cell('area_ratio'):>16} {cell('f1'):>16}"
            f" {comms['messages']:>10} {comms['bytes'] / 1e6:>10.2f}"
        )
    return "\n".join(lines)
