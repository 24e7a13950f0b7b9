"""Experiment harness: CSV ingestion, semi-synthetic preprocessing,
nested cross-validation over blind / coupled / decoupled baselines, and
JSON + CSV report emission.

Preprocessing follows the semi-synthetic recipe: classification labels
collapse to 1 for the most common class and 0 otherwise; regression
labels are min-max normalized to [0,1]; categorical feature columns
collapse to most-frequent-vs-rest.  The sensitive attribute defaults to
the first natively binary column (two distinct numeric values; collapsed
categoricals do not count) with at least ``min_per_group`` rows of each
value, and groups are truncated to ``max_per_group`` rows by seeded
subsampling.  Datasets with no qualifying column, or that the blind
baseline fits almost perfectly (loss < 0.001), are flagged discarded.

Label collapse and normalization are computed on the full dataset before
any fold split (they are part of dataset construction in this protocol);
the no-leakage guarantee -- held-out rows never influence training or
theta selection -- applies to everything downstream of the preprocessed
dataset and is exercised by the fold runner directly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import __version__
from .core import (
    ColumnMeta,
    Dataset,
    FairsplitError,
    KIND_BINARY,
    KIND_CATEGORICAL,
    KIND_NUMERIC,
    MODE_BINARY,
    MODE_REGRESSION,
    MODES,
)
from .decouple import build_candidate_table, product_search
from .learners import WeightedSample, fit_weighted_least_squares, sweep_thresholds
from .losses import (
    Instance,
    KIND_BALANCED,
    KIND_L1,
    LossSpec,
    LossUndefinedError,
    group_stats,
    joint_loss,
    parse_loss_spec,
)
from .transfer import TransferConfig, select_theta_cv, transfer_fit

BASELINE_BLIND = "blind"
BASELINE_COUPLED = "coupled"
BASELINE_DECOUPLED = "decoupled"
BASELINE_TRANSFER = "decoupled_transfer"
ALL_BASELINES = (BASELINE_BLIND, BASELINE_COUPLED, BASELINE_DECOUPLED, BASELINE_TRANSFER)

DEFAULT_MIN_PER_GROUP = 100
DEFAULT_MAX_PER_GROUP = 10_000
TRIVIAL_LOSS_THRESHOLD = 0.001

DISCARD_NO_SENSITIVE = "no-sensitive-attribute"
DISCARD_TRIVIAL = "trivial"


class ConfigError(FairsplitError):
    """Invalid experiment configuration."""


class DatasetDiscardedError(FairsplitError):
    """The dataset does not qualify for the semi-synthetic protocol."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class IngestError(FairsplitError):
    """The CSV could not be parsed into a dataset."""


@dataclass(frozen=True)
class ExperimentConfig:
    input_path: str
    label_column: str
    mode: str
    loss: str = KIND_BALANCED
    sensitive_column: Optional[str] = None  # auto-select when absent
    outer_folds: int = 5
    transfer: TransferConfig = field(default_factory=TransferConfig)
    seed: int = 0
    baselines: tuple = ALL_BASELINES
    output_path: Optional[str] = None
    min_per_group: int = DEFAULT_MIN_PER_GROUP
    max_per_group: int = DEFAULT_MAX_PER_GROUP

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.outer_folds < 2:
            raise ConfigError("outer_folds must be >= 2")
        unknown = [b for b in self.baselines if b not in ALL_BASELINES]
        if unknown:
            raise ConfigError(f"unknown baselines: {unknown}")
        object.__setattr__(self, "baselines", tuple(self.baselines))
        try:
            spec = parse_loss_spec(self.loss, K=2)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode == MODE_REGRESSION and spec.kind not in (KIND_BALANCED, KIND_L1):
            raise ConfigError("regression mode accepts only balanced and l1 losses")

    @property
    def loss_spec(self) -> LossSpec:
        return parse_loss_spec(self.loss, K=2)


@dataclass
class IngestResult:
    dataset: Dataset
    log: list[str]
    raw_columns: list[str]


def _try_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


def ingest_csv(path, config: ExperimentConfig) -> IngestResult:
    """Read a CSV (header row, RFC 4180 quoting) and preprocess it.

    Every transformation is appended to the returned log.  Unparseable or
    empty cells and constant label columns are errors.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not rows:
        raise IngestError(f"{path}: no data rows")
    if config.label_column not in header:
        raise ConfigError(f"label column {config.label_column!r} not in header {header}")
    width = len(header)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise IngestError(f"{path}: row {i + 1} has {len(r)} cells, expected {width}")

    log: list[str] = []
    label_idx = header.index(config.label_column)
    columns: list[np.ndarray] = []
    meta: list[ColumnMeta] = []
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        cells = [r[j] for r in rows]
        for i, c in enumerate(cells):
            if c == "":
                raise IngestError(f"{path}: empty cell at row {i + 1}, column {name!r}")
        values = [_try_float(c) for c in cells]
        if all(v is not None for v in values):
            arr = np.array(values, dtype=np.float64)
            kind = KIND_BINARY if np.unique(arr).size == 2 else KIND_NUMERIC
            columns.append(arr)
            meta.append(ColumnMeta(name, kind))
        else:
            top = _most_frequent(cells)
            columns.append(np.array([1.0 if c == top else 0.0 for c in cells]))
            meta.append(ColumnMeta(name, KIND_CATEGORICAL))
            log.append(f"column {name!r}: categorical collapsed to most-frequent {top!r} vs rest")

    label_cells = [r[label_idx] for r in rows]
    if config.mode == MODE_BINARY:
        top = _most_frequent(label_cells)
        labels = np.array([1.0 if c == top else 0.0 for c in label_cells])
        if np.unique(labels).size < 2:
            raise IngestError(f"{path}: constant label column {config.label_column!r}")
        log.append(f"labels: class {top!r} (most common) mapped to 1, others to 0")
    else:
        parsed = [_try_float(c) for c in label_cells]
        for i, v in enumerate(parsed):
            if v is None:
                raise IngestError(
                    f"{path}: unparseable label at row {i + 1}, column {config.label_column!r}"
                )
        labels = np.array(parsed, dtype=np.float64)
        lo, hi = float(labels.min()), float(labels.max())
        if lo == hi:
            raise IngestError(f"{path}: constant label column {config.label_column!r}")
        labels = (labels - lo) / (hi - lo)
        log.append(f"labels: min-max normalized from [{lo}, {hi}] to [0, 1]")

    features = np.column_stack(columns) if columns else np.empty((len(rows), 0))
    ds = Dataset(
        features,
        labels,
        np.ones(len(rows), dtype=np.int64),  # provisional: groups assigned on selection
        mode=config.mode,
        k_groups=1,
        column_meta=tuple(meta),
    )
    return IngestResult(dataset=ds, log=log, raw_columns=header)


def _most_frequent(cells: list[str]) -> str:
    counts: dict[str, int] = {}
    for c in cells:
        counts[c] = counts.get(c, 0) + 1
    best = max(counts.values())
    for c in cells:  # ties broken by first occurrence
        if counts[c] == best:
            return c
    raise AssertionError


@dataclass
class SensitiveSelection:
    dataset: Dataset  # groups assigned, sensitive column still among features
    column: str
    column_index: int
    value_to_group: dict
    log: list[str]


def select_sensitive_attribute(
    ingest: IngestResult,
    config: ExperimentConfig,
    min_per_group: Optional[int] = None,
    max_per_group: Optional[int] = None,
) -> SensitiveSelection:
    """Pick the sensitive column and split rows into two groups.

    Auto-selection takes the first natively binary column (original order)
    with at least ``min_per_group`` rows of each value; collapsed
    categoricals never qualify.  The smaller raw value maps to group 1.
    Groups larger than ``max_per_group`` are truncated by seeded uniform
    subsampling.  No qualifying column raises DatasetDiscardedError.
    """
    ds = ingest.dataset
    min_per_group = config.min_per_group if min_per_group is None else min_per_group
    max_per_group = config.max_per_group if max_per_group is None else max_per_group
    log = list(ingest.log)

    names = [m.name for m in ds.column_meta]
    if config.sensitive_column is not None:
        if config.sensitive_column not in names:
            raise ConfigError(f"sensitive column {config.sensitive_column!r} not found")
        idx = names.index(config.sensitive_column)
        if np.unique(ds.features[:, idx]).size != 2:
            raise ConfigError(
                f"sensitive column {config.sensitive_column!r} does not take exactly 2 values"
            )
        log.append(f"sensitive attribute: {config.sensitive_column!r} (user-specified)")
    else:
        idx = None
        for j, m in enumerate(ds.column_meta):
            if m.kind != KIND_BINARY:
                continue
            values, counts = np.unique(ds.features[:, j], return_counts=True)
            if counts.min() >= min_per_group:
                idx = j
                break
        if idx is None:
            raise DatasetDiscardedError(
                DISCARD_NO_SENSITIVE,
                f"no binary column with >= {min_per_group} rows of each value",
            )
        log.append(f"sensitive attribute: {names[idx]!r} (first qualifying binary column)")

    col = ds.features[:, idx]
    values = np.unique(col)
    value_to_group = {float(values[0]): 1, float(values[1]): 2}
    groups = np.where(col == values[0], 1, 2).astype(np.int64)

    keep = np.ones(ds.n, dtype=bool)
    rng = np.random.default_rng([config.seed, 11])
    for k in (1, 2):
        rows = np.nonzero(groups == k)[0]
        if rows.size > max_per_group:
            selected = rng.choice(rows, size=max_per_group, replace=False)
            drop = np.setdiff1d(rows, selected)
            keep[drop] = False
            log.append(f"group {k}: truncated from {rows.size} to {max_per_group} rows (seeded)")
    ds2 = Dataset(
        ds.features[keep],
        ds.labels[keep],
        groups[keep],
        mode=ds.mode,
        k_groups=2,
        column_meta=ds.column_meta,
    )
    return SensitiveSelection(
        dataset=ds2, column=names[idx], column_index=idx, value_to_group=value_to_group, log=log
    )


# ---------------------------------------------------------------------------
# Fold running


@dataclass
class FoldRecord:
    fold: int
    baseline: str
    loss: Optional[float]
    group_losses: list  # per group, None when the group is absent from the test fold
    theta_by_group: Optional[list]
    degenerate: bool
    model_bytes: bytes = b""  # trained parameters, for bit-identity checks


@dataclass
class RunArtifacts:
    records: list[FoldRecord]
    degenerate_folds: list[int]
    fit_counts: dict


def _stratified_outer_folds(groups: np.ndarray, k_groups: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle then contiguous blocks, stratified by group."""
    test_sets: list[list[int]] = [[] for _ in range(folds)]
    rng = np.random.default_rng([seed, 23])
    for k in range(1, k_groups + 1):
        rows = np.nonzero(groups == k)[0]
        perm = rows[rng.permutation(rows.size)]
        for f, block in enumerate(np.array_split(perm, folds)):
            test_sets[f].extend(int(i) for i in block)
    return [np.array(sorted(s), dtype=np.int64) for s in test_sets]


def _feature_view(ds: Dataset, sensitive_index: int, include_sensitive: bool) -> np.ndarray:
    if include_sensitive:
        return ds.features
    return np.delete(ds.features, sensitive_index, axis=1)


def _single_model_fit(X: np.ndarray, y: np.ndarray, mode: str, counter: dict, key: str):
    counter[key] = counter.get(key, 0) + 1
    model = fit_weighted_least_squares(WeightedSample(X, y, np.ones(X.shape[0])))
    if mode == MODE_REGRESSION:
        return model
    scores = np.asarray(model.predict(X)).ravel()
    sweep = sweep_thresholds(scores, y, score_model=model)
    best = min(sweep.candidates, key=lambda c: (c.train_error, c.positives))
    return best.model


def _model_payload(model) -> bytes:
    """Stable byte serialization of trained parameters."""
    if hasattr(model, "score_model") and model.score_model is not None:
        inner = model.score_model
        return (
            np.asarray(inner.weights).tobytes()
            + np.float64(inner.intercept).tobytes()
            + np.float64(model.threshold).tobytes()
        )
    if hasattr(model, "weights"):
        return np.asarray(model.weights).tobytes() + np.float64(model.intercept).tobytes()
    return repr(model).encode()


def _predict(model, X: np.ndarray) -> np.ndarray:
    return np.asarray(model.predict(X), dtype=np.float64).ravel()


def _test_losses(cfg: ExperimentConfig, y: np.ndarray, z: np.ndarray, groups: np.ndarray):
    """(joint loss, per-group losses) on a held-out fold."""
    spec = cfg.loss_spec
    group_losses: list[Optional[float]] = []
    if cfg.mode == MODE_REGRESSION:
        errors = (y - z) ** 2
        for k in (1, 2):
            mask = groups == k
            group_losses.append(float(np.mean(errors[mask])) if np.any(mask) else None)
        if any(g is None for g in group_losses):
            overall = None
        elif spec.kind == KIND_BALANCED:
            overall = float(np.mean(group_losses))
        else:
            overall = float(np.mean(errors))
        return overall, group_losses
    inst = Instance(tuple(int(g) for g in groups), tuple(float(v) for v in y), tuple(float(v) for v in z))
    stats = group_stats(inst, 2)
    for st in stats:
        group_losses.append(float(st.ell_hat_k) if not st.absent else None)
    try:
        overall = float(joint_loss(spec, inst))
    except LossUndefinedError:
        overall = None
    return overall, group_losses


def run_folds(ds: Dataset, cfg: ExperimentConfig, sensitive_index: int) -> RunArtifacts:
    """Nested cross-validation on a preprocessed dataset.

    Baselines: blind (sensitive column removed, one model), coupled
    (sensitive column kept, one model), decoupled (per-group, theta = 0),
    decoupled_transfer (per-group, theta chosen per group by inner CV on
    the outer-fold training split).  Per-group models see the features
    without the sensitive column, which is constant within a group.  A
    fold whose training (or test) split misses a group is marked
    degenerate and excluded from aggregates.
    """
    spec = cfg.loss_spec
    records: list[FoldRecord] = []
    degenerate: list[int] = []
    fits: dict = {"inner_cv_by_group": {"1": 0, "2": 0}, "baseline_fits": {}}
    folds = _stratified_outer_folds(ds.groups, ds.k_groups, cfg.outer_folds, cfg.seed)
    grid_cfg = cfg.transfer

    for f, test_idx in enumerate(folds):
        train_mask = np.ones(ds.n, dtype=bool)
        train_mask[test_idx] = False
        g_train, g_test = ds.groups[train_mask], ds.groups[test_idx]
        missing_train = [k for k in (1, 2) if not np.any(g_train == k)]
        missing_test = [k for k in (1, 2) if not np.any(g_test == k)]
        if missing_train or missing_test or test_idx.size == 0:
            degenerate.append(f)
            for baseline in cfg.baselines:
                records.append(
                    FoldRecord(f, baseline, None, [None, None], None, degenerate=True)
                )
            continue

        y_train, y_test = ds.labels[train_mask], ds.labels[test_idx]
        X_blind_train = _feature_view(ds, sensitive_index, False)[train_mask]
        X_blind_test = _feature_view(ds, sensitive_index, False)[test_idx]
        X_full_train = ds.features[train_mask]
        X_full_test = ds.features[test_idx]

        for baseline in cfg.baselines:
            if baseline == BASELINE_BLIND:
                model = _single_model_fit(X_blind_train, y_train, cfg.mode, fits["baseline_fits"], baseline)
                z = _predict(model, X_blind_test)
                payload = _model_payload(model)
                theta = None
            elif baseline == BASELINE_COUPLED:
                model = _single_model_fit(X_full_train, y_train, cfg.mode, fits["baseline_fits"], baseline)
                z = _predict(model, X_full_test)
                payload = _model_payload(model)
                theta = None
            else:
                theta_by_group = [0.0, 0.0]
                if baseline == BASELINE_TRANSFER:
                    for k in (1, 2):
                        in_mask = g_train == k
                        selection = select_theta_cv(
                            X_blind_train[in_mask],
                            y_train[in_mask],
                            X_blind_train[~in_mask],
                            y_train[~in_mask],
                            grid_cfg,
                            mode=cfg.mode,
                            seed=_derive_seed(cfg.seed, f, k),
                        )
                        fits["inner_cv_by_group"][str(k)] += (
                            grid_cfg.inner_folds * len(grid_cfg.theta_grid)
                        )
                        theta_by_group[k - 1] = selection.theta
                candidates = []
                for k in (1, 2):
                    in_mask = g_train == k
                    cands = transfer_fit(
                        X_blind_train[in_mask],
                        y_train[in_mask],
                        X_blind_train[~in_mask],
                        y_train[~in_mask],
                        theta_by_group[k - 1],
                        mode=cfg.mode,
                    )
                    fits["baseline_fits"][baseline] = fits["baseline_fits"].get(baseline, 0) + 1
                    candidates.append(cands)
                train_ds = Dataset(
                    X_blind_train,
                    y_train,
                    g_train,
                    mode=cfg.mode,
                    k_groups=2,
                )
                table = build_candidate_table(train_ds, candidates)
                result = product_search(table, spec)
                chosen = result.selected(table)
                z = np.empty(test_idx.size)
                for k in (1, 2):
                    mask = g_test == k
                    z[mask] = _predict(chosen[k - 1].model, X_blind_test[mask])
                payload = b"".join(_model_payload(c.model) for c in chosen)
                theta = theta_by_group if baseline == BASELINE_TRANSFER else None

            loss_value, group_losses = _test_losses(cfg, y_test, z, g_test)
            records.append(
                FoldRecord(
                    fold=f,
                    baseline=baseline,
                    loss=loss_value,
                    group_losses=group_losses,
                    theta_by_group=theta,
                    degenerate=False,
                    model_bytes=payload,
                )
            )
    return RunArtifacts(records=records, degenerate_folds=degenerate, fit_counts=fits)


def _derive_seed(master: int, fold: int, group: int) -> int:
    return int(np.random.SeedSequence([master, fold, group]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Reports


@dataclass
class Report:
    config: dict
    dataset: dict
    folds: list[dict]
    aggregates: dict
    degenerate_folds: list[int]
    fit_counts: dict
    version: str

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "dataset": self.dataset,
            "folds": self.folds,
            "aggregates": self.aggregates,
            "degenerate_folds": self.degenerate_folds,
            "fit_counts": self.fit_counts,
            "version": self.version,
        }


def build_report(cfg: ExperimentConfig, selection: SensitiveSelection, artifacts: RunArtifacts) -> Report:
    ds = selection.dataset
    folds_json = [
        {
            "fold": r.fold,
            "baseline": r.baseline,
            "loss": r.loss,
            "group_losses": r.group_losses,
            "theta_by_group": r.theta_by_group,
            "degenerate": r.degenerate,
        }
        for r in artifacts.records
    ]
    aggregates: dict = {}
    blind_mean = None
    for baseline in cfg.baselines:
        losses = [
            r.loss for r in artifacts.records if r.baseline == baseline and not r.degenerate and r.loss is not None
        ]
        if losses:
            mean = float(np.mean(losses))
            std = float(np.std(losses))
        else:
            mean = std = None
        aggregates[baseline] = {"mean_loss": mean, "std_loss": std, "n_folds": len(losses)}
        if baseline == BASELINE_BLIND:
            blind_mean = mean
    for baseline, agg in aggregates.items():
        if blind_mean and agg["mean_loss"] is not None and agg["mean_loss"] > 0:
            agg["log_ratio_vs_blind"] = float(math.log(agg["mean_loss"] / blind_mean))
        else:
            agg["log_ratio_vs_blind"] = None

    discarded = False
    discard_reason = None
    if blind_mean is not None and blind_mean < TRIVIAL_LOSS_THRESHOLD:
        discarded = True
        discard_reason = DISCARD_TRIVIAL

    dataset_info = {
        "path": cfg.input_path,
        "sensitive_column": selection.column,
        "n_rows": ds.n,
        "group_sizes": {"1": ds.group_sizes()[0], "2": ds.group_sizes()[1]},
        "preprocessing_log": selection.log,
        "discarded": discarded,
        "discard_reason": discard_reason,
    }
    config_echo = {
        "input_path": cfg.input_path,
        "label_column": cfg.label_column,
        "sensitive_column": cfg.sensitive_column,
        "mode": cfg.mode,
        "loss": cfg.loss_spec.spec_id,
        "outer_folds": cfg.outer_folds,
        "inner_folds": cfg.transfer.inner_folds,
        "theta_grid": list(cfg.transfer.theta_grid),
        "seed": cfg.seed,
        "baselines": list(cfg.baselines),
    }
    return Report(
        config=config_echo,
        dataset=dataset_info,
        folds=folds_json,
        aggregates=aggregates,
        degenerate_folds=artifacts.degenerate_folds,
        fit_counts=artifacts.fit_counts,
        version=__version__,
    )


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Ingest, select the sensitive attribute, run all folds, build the report."""
    ingest = ingest_csv(cfg.input_path, cfg)
    selection = select_sensitive_attribute(ingest, cfg)
    artifacts = run_folds(selection.dataset, cfg, selection.column_index)
    return build_report(cfg, selection, artifacts)


def report_schema() -> dict:
    """The JSON schema shipped with the package (validates report.json)."""
    text = resources.files("fairsplit").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


def emit_report(report: Report, out_dir) -> list[str]:
    """Write report.json and summary.csv; byte-deterministic given
    identical inputs (keys sorted, shortest-round-trip floats, no
    timestamps)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    csv_path = os.path.join(out_dir, "summary.csv")
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(payload + "\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["baseline", "mean_loss", "std_loss", "log_ratio_vs_blind"])
        for baseline in report.config["baselines"]:
            agg = report.aggregates[baseline]
            writer.writerow(
                [
                    baseline,
                    "" if agg["mean_loss"] is None else repr(agg["mean_loss"]),
                    "" if agg["std_loss"] is None else repr(agg["std_loss"]),
                    "" if agg["log_ratio_vs_blind"] is None else repr(agg["log_ratio_vs_blind"]),
                ]
            )
    return [json_path, csv_path]


def openml_manifest() -> dict:
    """Static manifest of the reference benchmark's OpenML dataset ids.

    47 ids are listed while results are reported for 45 datasets after
    discards, without identifying the two dropped; the manifest preserves
    the full list and the discrepancy note.  No network access is
    performed by this package.
    """
    text = resources.files("fairsplit").joinpath("data/openml_manifest.json").read_text("utf-8")
    return json.loads(text)
