"""Shared data model: datasets, group partitions, classifier candidates,
and per-group (decoupled) classifiers.

Conventions used throughout the package:

* Group indices are 1-based in external formats and reports; in-memory
  arrays hold integers in ``{1..K}``.
* Classifications are called ``z`` (not ``y_hat``): a classification may
  deliberately differ from the label even under perfect knowledge, so the
  prediction notation would be misleading.  Binary classifications are in
  ``{0, 1}``; group-statistics operations additionally accept fractional
  ``z`` in ``[0, 1]`` for randomized classifiers.
* Group statistics are stored as exact rationals (``fractions.Fraction``)
  so identities between error rates, profiles and base rates hold exactly;
  callers convert to float at the boundary.

All types are immutable after construction (frozen dataclasses, numpy
arrays with the writeable flag cleared) and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

MODE_BINARY = "binary"
MODE_REGRESSION = "regression"
MODES = (MODE_BINARY, MODE_REGRESSION)

KIND_NUMERIC = "numeric"
KIND_BINARY = "binary"
KIND_CATEGORICAL = "categorical-collapsed"
COLUMN_KINDS = (KIND_NUMERIC, KIND_BINARY, KIND_CATEGORICAL)


class FairsplitError(Exception):
    """Base class for errors raised by this package."""


class GroupIndexError(FairsplitError):
    """A group index fell outside {1..K}."""


class ContractViolationError(FairsplitError):
    """A base learner broke the distinct-positive-count contract."""


def exact_fraction(value) -> Fraction:
    """Convert a numeric parameter to an exact rational.

    Integers, Fractions and strings convert exactly.  Floats are read
    through their shortest decimal representation, so a parameter written
    as ``0.1`` means 1/10 rather than the nearest binary float.  This keeps
    strict-parity predicates and swap comparisons free of epsilons.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        return Fraction(str(float(value)))
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ColumnMeta:
    """Name and kind of one feature column."""

    name: str
    kind: str  # numeric | binary | categorical-collapsed

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, labels and group assignments.

    ``labels`` are in {0,1} in binary mode and in [0,1] in regression
    mode; ``groups`` holds integers in {1..k_groups}.  Use
    :func:`validate_dataset` to collect invariant violations instead of
    raising.
    """

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) float64
    groups: np.ndarray  # (n,) int64, values in 1..k_groups
    mode: str
    k_groups: int
    column_meta: tuple[ColumnMeta, ...] = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        labels = np.asarray(self.labels, dtype=np.float64).ravel()
        groups = np.asarray(self.groups, dtype=np.int64).ravel()
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "groups", _freeze(groups))
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.column_meta:
            meta = tuple(ColumnMeta(f"x{j + 1}", KIND_NUMERIC) for j in range(feats.shape[1]))
            object.__setattr__(self, "column_meta", meta)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def group_rows(self, k: int) -> np.ndarray:
        """Indices of the rows belonging to group ``k`` (1-based)."""
        if not 1 <= k <= self.k_groups:
            raise GroupIndexError(f"group {k} out of range 1..{self.k_groups}")
        return np.nonzero(self.groups == k)[0]

    def group_sizes(self) -> list[int]:
        return [int(np.sum(self.groups == k)) for k in range(1, self.k_groups + 1)]


def validate_dataset(ds: Dataset) -> list[str]:
    """Return a list of invariant violations; empty iff the dataset is valid.

    Each violation names the offending row or column and the rule broken.
    """
    violations: list[str] = []
    n = ds.features.shape[0]
    if ds.labels.shape[0] != n:
        violations.append(f"labels: length {ds.labels.shape[0]} != feature rows {n}")
    if ds.groups.shape[0] != n:
        violations.append(f"groups: length {ds.groups.shape[0]} != feature rows {n}")
    if len(ds.column_meta) != ds.features.shape[1]:
        violations.append(
            f"column_meta: {len(ds.column_meta)} entries for {ds.features.shape[1]} columns"
        )
    if not np.all(np.isfinite(ds.features)):
        rows = np.nonzero(~np.isfinite(ds.features))[0]
        violations.append(f"row {int(rows[0])}: non-finite feature value")
    upper = min(n, ds.labels.shape[0], ds.groups.shape[0])
    for i in range(upper):
        g = int(ds.groups[i])
        if not 1 <= g <= ds.k_groups:
            violations.append(f"row {i}: group {g} out of range 1..{ds.k_groups}")
        y = float(ds.labels[i])
        if ds.mode == MODE_BINARY:
            if y not in (0.0, 1.0):
                violations.append(f"row {i}: label {y} not in {{0,1}} (binary mode)")
        else:
            if not 0.0 <= y <= 1.0:
                violations.append(f"row {i}: label {y} outside [0,1] (regression mode)")
    for k in range(1, ds.k_groups + 1):
        if int(np.sum(ds.groups == k)) == 0:
            violations.append(f"group {k}: empty (no rows)")
    return violations


@dataclass(frozen=True)
class GroupStats:
    """Per-group counts and rates, held as exact rationals.

    ``p_hat_k`` is normalized by the *total* number of examples ``n``, so
    it lies in [0, n_k/n]; the within-group positive fraction is
    ``p_hat_k * n / n_k``.  ``fnr_k`` is ``None`` when the base rate
    ``pi_k`` is zero (never silently 0 or NaN).  An empty group has
    ``n_k == 0`` and every rate set to ``None``.
    """

    n_k: int
    n_total: int
    pi_k: Optional[Fraction] = None  # base rate: positive labels / n_k
    p_hat_k: Optional[Fraction] = None  # profile: positive classifications / n
    ell_hat_k: Optional[Fraction] = None  # mean |y - z| within the group
    fp_k: Optional[Fraction] = None  # false positives / n_k (binary z only)
    fn_k: Optional[Fraction] = None  # false negatives / n_k (binary z only)
    fnr_k: Optional[Fraction] = None  # fn_k / pi_k, None when pi_k == 0

    @property
    def absent(self) -> bool:
        return self.n_k == 0


@dataclass(frozen=True)
class Prediction:
    """A single classification value; fractional values model randomized
    classifiers."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"prediction {self.value} outside [0,1]")


@dataclass(frozen=True)
class CandidateClassifier:
    """A trained predictor plus its positive count and training stats.

    ``positives`` is the count of positive classifications over the
    candidate's own group's training rows (binary mode; ``None`` in
    regression mode).  ``theta`` records the out-group down-weight the
    candidate was trained with, when applicable.  ``train_error`` is the
    (possibly weighted) training error used by the learner for selection.
    """

    model: object  # anything with .predict(features) -> array
    positives: Optional[int]
    stats: Optional[GroupStats] = None
    theta: Optional[float] = None
    train_error: Optional[Fraction] = None


@dataclass(frozen=True)
class DecoupledClassifier:
    """One chosen classifier per group, dispatching on group membership."""

    per_group: tuple  # K predictors, index k-1 serves group k
    achieved_loss: float
    loss_spec_id: str
    achieved_loss_exact: object = None  # Fraction in binary mode
    theta_by_group: Optional[tuple] = None
    parity_infeasible: bool = False

    @property
    def k_groups(self) -> int:
        return len(self.per_group)


def predict_decoupled(dc: DecoupledClassifier, x, g: int) -> Prediction:
    """Apply the group-``g`` classifier to feature row ``x``.

    Dispatch is exact: the output equals ``per_group[g]`` applied to ``x``.
    """
    if not 1 <= g <= dc.k_groups:
        raise GroupIndexError(f"group {g} out of range 1..{dc.k_groups}")
    row = np.atleast_2d(np.asarray(x, dtype=np.float64))
    value = float(np.asarray(dc.per_group[g - 1].predict(row)).ravel()[0])
    return Prediction(value)


def predict_decoupled_many(dc: DecoupledClassifier, features, groups) -> np.ndarray:
    """Vectorized dispatch: row i goes to the classifier of groups[i]."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    groups = np.asarray(groups, dtype=np.int64).ravel()
    out = np.empty(features.shape[0], dtype=np.float64)
    for k in range(1, dc.k_groups + 1):
        mask = groups == k
        if np.any(mask):
            out[mask] = np.asarray(dc.per_group[k - 1].predict(features[mask])).ravel()
    bad = (groups < 1) | (groups > dc.k_groups)
    if np.any(bad):
        raise GroupIndexError(f"group {int(groups[bad][0])} out of range 1..{dc.k_groups}")
    return out


# ---------------------------------------------------------------------------
# CSV serialization (raw; the experiment pipeline applies its own
# preprocessing on ingest).  Floats are written with their shortest
# round-trip representation so save -> load preserves every cell exactly.

LABEL_COLUMN = "label"
GROUP_COLUMN = "group"


def save_dataset_csv(ds: Dataset, path) -> None:
    """Write features, label and group columns with a header row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([m.name for m in ds.column_meta] + [LABEL_COLUMN, GROUP_COLUMN])
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(repr(float(ds.labels[i])))
            row.append(str(int(ds.groups[i])))
            writer.writerow(row)


def load_dataset_csv(path, mode: str, k_groups: Optional[int] = None) -> Dataset:
    """Load a CSV written by :func:`save_dataset_csv` without preprocessing."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if header[-2:] != [LABEL_COLUMN, GROUP_COLUMN]:
        raise ValueError(f"{path}: expected trailing '{LABEL_COLUMN},{GROUP_COLUMN}' columns")
    feat_names = header[:-2]
    features = np.array([[float(c) for c in r[: len(feat_names)]] for r in rows], dtype=np.float64)
    labels = np.array([float(r[-2]) for r in rows], dtype=np.float64)
    groups = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    if k_groups is None:
        k_groups = int(groups.max()) if groups.size else 0
    meta = tuple(ColumnMeta(name, KIND_NUMERIC) for name in feat_names)
    return Dataset(features, labels, groups, mode=mode, k_groups=k_groups, column_meta=meta)
