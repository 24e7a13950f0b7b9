"""Cost-of-coupling demonstrators.

The *cost of coupling* of a classifier family is the worst-case excess
loss of the best single (coupled) classifier over the best per-group
(decoupled) one.  Distributions are represented as finite uniform-weight
datasets, which is exact for the constructions measured here:

* the parity fixture: uniform over {0,1}^d with the label the XOR of the
  last two bits and groups split on the last bit -- the best single
  linear predictor is the constant 1/2 (squared error 1/4) and no single
  halfspace gets more than 3 of the 4 projected cases right, while a
  per-group threshold on the second-to-last bit is exact;
* the two-line scenario: one feature is perfectly informative but with
  opposite sign per group, so every single linear separator is at or
  below coin-flipping on at least one group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    Dataset,
    FairsplitError,
    KIND_BINARY,
    KIND_NUMERIC,
    ColumnMeta,
    MODE_BINARY,
    MODE_REGRESSION,
)
from .decouple import build_candidate_table, product_search
from .learners import (
    FiniteClass,
    WeightedSample,
    exhaustive_learn,
    fit_weighted_least_squares,
)
from .losses import Instance, KIND_BALANCED, KIND_L1, LossSpec, joint_loss

TARGET_REGRESSION = "regression"
TARGET_SEPARATOR = "separator"

ENUMERATION_LIMIT_D = 12


@dataclass(frozen=True)
class Fixture:
    """A dataset with optional exact expectations for the coupled and
    decoupled optima (set only when the construction makes them exact)."""

    dataset: Dataset
    description: str
    expected_coupled_loss: Optional[float] = None
    expected_decoupled_loss: Optional[float] = None


def make_parity_fixture(
    d: int,
    target: str = TARGET_REGRESSION,
    seed: int = 0,
    parity_bits: int = 2,
    sample_size: int = 4096,
) -> Fixture:
    """Uniform dataset over {0,1}^d with y = XOR of the last ``parity_bits``
    bits and groups split on the last bit.

    Enumerates all 2^d points for d <= 12 and samples with the seed
    otherwise (expectations are then omitted: they are exact only under
    full enumeration).  ``parity_bits > 2`` produces the wider-parity
    scenario used to reason about bounded decision trees; no tree learner
    ships here, the dataset generator alone is provided.
    """
    if target not in (TARGET_REGRESSION, TARGET_SEPARATOR):
        raise ValueError(f"unknown target {target!r}")
    if d < 2 or parity_bits < 2 or parity_bits > d:
        raise ValueError("need d >= parity_bits >= 2")
    if d <= ENUMERATION_LIMIT_D:
        codes = np.arange(2**d, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(d - 1, -1, -1)) & 1
        enumerated = True
    else:
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2, size=(sample_size, d))
        enumerated = False
    X = bits.astype(np.float64)
    y = np.bitwise_xor.reduce(bits[:, -parity_bits:], axis=1).astype(np.float64)
    groups = bits[:, -1] + 1
    meta = tuple(ColumnMeta(f"x{j + 1}", KIND_BINARY) for j in range(d))
    ds = Dataset(
        X,
        y,
        groups,
        mode=MODE_REGRESSION if target == TARGET_REGRESSION else MODE_BINARY,
        k_groups=2,
        column_meta=meta,
    )
    expected = (0.25, 0.0) if (enumerated and parity_bits == 2) else (None, None)
    return Fixture(
        dataset=ds,
        description=f"parity on the last {parity_bits} bits over {{0,1}}^{d}, groups on the last bit",
        expected_coupled_loss=expected[0],
        expected_decoupled_loss=expected[1],
    )


def make_figure1_fixture(n_major: int, n_minor: int, seed: int = 0) -> Fixture:
    """Two groups on the lines x2 = 1 (majority) and x2 = 2 (minority).

    The label is the sign of x1 mapped to {0,1} for the majority and the
    opposite for the minority.  x1 magnitudes are sampled once per pair
    and mirrored about 0, so each group has exactly half positive labels
    (odd counts are rounded up to the next even size); that makes "no
    single separator beats 50% on both groups" exact rather than
    statistical, while per-group thresholds at 0 are perfect.
    """
    if n_major < 2 or n_minor < 2:
        raise ValueError("group sizes must be >= 2")
    rng = np.random.default_rng(seed)
    xs = []
    ys = []
    gs = []
    for g, count in ((1, n_major), (2, n_minor)):
        count = count + (count % 2)
        mags = rng.uniform(0.05, 1.0, size=count // 2)
        x1 = np.concatenate([mags, -mags])
        pos = (x1 > 0).astype(np.float64)
        y = pos if g == 1 else 1.0 - pos
        xs.append(np.column_stack([x1, np.full(count, float(g))]))
        ys.append(y)
        gs.append(np.full(count, g, dtype=np.int64))
    X = np.vstack(xs)
    meta = (ColumnMeta("x1", KIND_NUMERIC), ColumnMeta("x2", KIND_BINARY))
    ds = Dataset(X, np.concatenate(ys), np.concatenate(gs), mode=MODE_BINARY, k_groups=2, column_meta=meta)
    return Fixture(
        dataset=ds,
        description="two-line scenario: perfectly predictive feature with opposite sign per group",
        expected_coupled_loss=None,
        expected_decoupled_loss=0.0,
    )


def empirical_coupling_gap(
    fixture: Fixture,
    class_builder: Optional[Callable[[Dataset], FiniteClass]] = None,
    loss: Optional[LossSpec] = None,
) -> tuple[float, float, float]:
    """Exact (coupled minimum, decoupled minimum, gap) on a fixture.

    Without a class builder the fixture is treated as a regression target
    solved in closed form by (weighted) least squares: the coupled side is
    one fit over all rows, the decoupled side one fit per group.  With a
    class builder, the coupled minimum enumerates the finite class and the
    decoupled minimum runs per-group ERM plus the product search.  The gap
    is never negative: any coupled classifier is also a decoupled one.
    """
    ds = fixture.dataset
    if loss is None:
        loss = LossSpec(KIND_L1, K=ds.k_groups)
    if class_builder is None:
        return _regression_gap(ds, loss)

    finite = class_builder(ds)
    inst_labels = tuple(float(v) for v in ds.labels)
    inst_groups = tuple(int(v) for v in ds.groups)
    coupled_best = None
    for _, clf in finite:
        z = tuple(float(v) for v in np.asarray(clf.predict(ds.features)).ravel())
        value = joint_loss(loss, Instance(inst_groups, inst_labels, z))
        if coupled_best is None or value < coupled_best:
            coupled_best = value

    candidates = []
    for k in range(1, ds.k_groups + 1):
        rows = ds.group_rows(k)
        sample = WeightedSample(ds.features[rows], ds.labels[rows], np.ones(rows.size))
        candidates.append(exhaustive_learn(finite, sample))
    table = build_candidate_table(ds, candidates)
    decoupled_best = product_search(table, loss).loss

    gap = coupled_best - decoupled_best
    return float(coupled_best), float(decoupled_best), float(gap)


def _regression_gap(ds: Dataset, loss: LossSpec) -> tuple[float, float, float]:
    n = ds.n
    if loss.kind == KIND_BALANCED:
        # A balanced-loss-optimal single model reweights rows by 1/n_k.
        weights = np.empty(n)
        for k in range(1, ds.k_groups + 1):
            rows = ds.group_rows(k)
            weights[rows] = n / (ds.k_groups * rows.size)
    elif loss.kind == KIND_L1:
        weights = np.ones(n)
    else:
        raise ValueError("regression coupling gap supports l1 and balanced losses")
    coupled_model = fit_weighted_least_squares(WeightedSample(ds.features, ds.labels, weights))
    coupled = _regression_loss(ds, np.asarray(coupled_model.predict(ds.features)).ravel(), loss)

    z = np.empty(n)
    for k in range(1, ds.k_groups + 1):
        rows = ds.group_rows(k)
        model_k = fit_weighted_least_squares(
            WeightedSample(ds.features[rows], ds.labels[rows], np.ones(rows.size))
        )
        z[rows] = np.asarray(model_k.predict(ds.features[rows])).ravel()
    decoupled = _regression_loss(ds, z, loss)
    return float(coupled), float(decoupled), float(coupled - decoupled)


def _regression_loss(ds: Dataset, z: np.ndarray, loss: LossSpec) -> float:
    errors = (ds.labels - z) ** 2
    if loss.kind == KIND_L1:
        return float(np.mean(errors))
    per_group = [float(np.mean(errors[ds.group_rows(k)])) for k in range(1, ds.k_groups + 1)]
    return float(np.mean(per_group))


# ---------------------------------------------------------------------------
# Exact separator analysis for two-line datasets (second feature constant on
# each of two groups).  For such data the action of any halfspace
# z = 1[w1 x1 + w2 x2 + b >= 0] on the two lines is an orientation
# sign(w1) shared by both groups together with one threshold per line --
# and since (w2, b) -> (threshold_1, threshold_2) is an invertible affine
# map, every threshold pair is realizable.  Enumerating orientations x
# per-group threshold positions therefore covers every distinct behavior
# of every linear separator on the dataset, including w1 = 0 (per-group
# constants).


@dataclass(frozen=True)
class TwoLineSeparatorReport:
    max_min_accuracy: float  # best over separators of min per-group accuracy
    coupled_best_overall_accuracy: float  # best overall accuracy of one separator
    decoupled_accuracies: tuple  # per-group accuracy of the best per-group threshold
    best_thresholds: tuple  # per-group (orientation, threshold) achieving them


def _best_threshold_accuracy(x: np.ndarray, y: np.ndarray, orientation: int):
    """Max accuracy of z = 1[orientation * x > t] over all thresholds."""
    s = orientation * x
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    m = len(y_sorted)
    total_pos = float(np.sum(y_sorted))
    cum_pos = np.concatenate([[0.0], np.cumsum(y_sorted)])
    best_acc, best_t = -1.0, None
    for cut in range(m + 1):
        if 0 < cut < m and s_sorted[cut - 1] == s_sorted[cut]:
            continue
        correct = cum_pos[cut] + ((m - cut) - (total_pos - cum_pos[cut]))
        acc = correct / m
        if acc > best_acc:
            if cut == 0:
                t = np.inf
            elif cut == m:
                t = -np.inf
            else:
                t = (s_sorted[cut - 1] + s_sorted[cut]) / 2.0
            best_acc, best_t = acc, float(t)
    return best_acc, best_t


def two_line_separator_report(ds: Dataset) -> TwoLineSeparatorReport:
    """Exact coupled-vs-decoupled accuracy analysis of a two-line dataset."""
    if ds.k_groups != 2:
        raise FairsplitError("two-line analysis needs exactly 2 groups")
    rows = [ds.group_rows(k) for k in (1, 2)]
    x_by_group = [ds.features[r][:, 0] for r in rows]
    y_by_group = [ds.labels[r] for r in rows]
    sizes = np.array([r.size for r in rows], dtype=np.float64)

    max_min = -1.0
    best_overall = -1.0
    # Orientation +1/-1 with free per-group thresholds, plus per-group
    # constants (w1 = 0: any of the 4 constant pairs is realizable).
    for orientation in (1, -1):
        accs = []
        for x, y in zip(x_by_group, y_by_group):
            acc, _ = _best_threshold_accuracy(x, y, orientation)
            accs.append(acc)
        max_min = max(max_min, min(accs))
        best_overall = max(best_overall, float(np.dot(sizes, accs) / np.sum(sizes)))
    for z1 in (0.0, 1.0):
        for z2 in (0.0, 1.0):
            accs = [
                float(np.mean(y_by_group[0] == z1)),
                float(np.mean(y_by_group[1] == z2)),
            ]
            max_min = max(max_min, min(accs))
            best_overall = max(best_overall, float(np.dot(sizes, accs) / np.sum(sizes)))

    decoupled = []
    thresholds = []
    for x, y in zip(x_by_group, y_by_group):
        per_orientation = [(_best_threshold_accuracy(x, y, o), o) for o in (1, -1)]
        (acc, t), o = max(per_orientation, key=lambda item: item[0][0])
        decoupled.append(acc)
        thresholds.append((o, t))
    return TwoLineSeparatorReport(
        max_min_accuracy=float(max_min),
        coupled_best_overall_accuracy=float(best_overall),
        decoupled_accuracies=tuple(decoupled),
        best_thresholds=tuple(thresholds),
    )
