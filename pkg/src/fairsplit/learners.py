"""Base learners satisfying the optimal-learner contract.

An *optimal learner* returns, for every achievable number of positive
classifications P on its training rows, exactly one classifier with
exactly P positives and minimal (weighted) error among such classifiers.
Three routes are provided:

* weighted least squares for real-valued scores / regression,
* a sort-and-sweep over score thresholds (one candidate per achievable P),
* exhaustive weighted ERM over an explicit finite class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CandidateClassifier, FairsplitError, GroupStats

RIDGE_SCALE = 1e-10
GRADIENT_TOL = 1e-8


class RankDeficiencyError(FairsplitError):
    """Normal matrix singular and the ridge fallback was disabled."""


class BudgetExceededError(FairsplitError):
    """Exhaustive enumeration would exceed the evaluation budget."""


@dataclass(frozen=True)
class LinearModel:
    """Affine predictor w . x + b."""

    weights: np.ndarray
    intercept: float
    ridge_fallback: bool = False  # provenance: normal equations needed a ridge term

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def predict(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return X @ self.weights + self.intercept


@dataclass(frozen=True)
class ConstantClassifier:
    """Outputs the same value everywhere."""

    value: float

    def predict(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return np.full(X.shape[0], self.value, dtype=np.float64)


@dataclass(frozen=True)
class ThresholdClassifier:
    """z = 1 iff score > threshold (strict).

    With a ``score_model`` the score of a row is the model's prediction;
    without one the input itself is taken as the score vector.  Thresholds
    are drawn from midpoints between consecutive distinct scores plus
    +/-inf sentinels, so candidate sets are bit-reproducible.
    """

    threshold: float
    score_model: Optional[object] = None

    def predict(self, features) -> np.ndarray:
        if self.score_model is not None:
            scores = np.asarray(self.score_model.predict(features), dtype=np.float64).ravel()
        else:
            scores = np.asarray(features, dtype=np.float64).ravel()
        return (scores > self.threshold).astype(np.float64)


@dataclass(frozen=True)
class LinearSeparator:
    """z = 1 iff w . x + b >= 0."""

    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def predict(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return (X @ self.weights + self.intercept >= 0).astype(np.float64)


@dataclass(frozen=True)
class TruthTableClassifier:
    """Lookup classifier keyed on the feature row (as a tuple)."""

    table: tuple  # of ((feature tuple), value) pairs
    default: float = 0.0

    def predict(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        mapping = dict(self.table)
        return np.array([mapping.get(tuple(row), self.default) for row in X], dtype=np.float64)


@dataclass(frozen=True)
class WeightedSample:
    """Rows with nonnegative per-row weights; total weight must be > 0."""

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if X.shape[0] != y.shape[0] or y.shape[0] != w.shape[0]:
            raise ValueError("features, labels, weights must have equal row counts")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        for name, arr in (("features", X), ("labels", y), ("weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class FiniteClass:
    """An explicit, nonempty list of (identifier, predictor) pairs."""

    classifiers: tuple

    def __post_init__(self):
        if not self.classifiers:
            raise ValueError("finite class must be nonempty")

    def __len__(self) -> int:
        return len(self.classifiers)

    def __iter__(self):
        return iter(self.classifiers)


def fit_weighted_least_squares(sample: WeightedSample, allow_ridge_fallback: bool = True) -> LinearModel:
    """Minimize sum_i (w_i/W) (y_i - (w.x_i + b))^2 via normal equations.

    A tiny ridge term (1e-10, trace-scaled) is applied only when the Gram
    matrix is numerically singular or the solution fails the gradient
    check; the fallback is recorded on the returned model.  With the
    fallback disabled, a singular system raises RankDeficiencyError.
    """
    W = sample.total_weight
    if W <= 0:
        raise ValueError("total weight must be positive")
    X = sample.features
    y = sample.labels
    w = sample.weights
    A = np.column_stack([X, np.ones(X.shape[0])])
    Aw = A * w[:, None]
    gram = A.T @ Aw
    rhs = Aw.T @ y

    def solve(g):
        beta = np.linalg.solve(g, rhs)
        if not np.all(np.isfinite(beta)):
            raise np.linalg.LinAlgError("non-finite solution")
        return beta

    def gradient_ok(beta):
        grad = -2.0 / W * (Aw.T @ (y - A @ beta))
        return float(np.linalg.norm(grad)) <= GRADIENT_TOL * (1.0 + float(np.linalg.norm(y)))

    used_ridge = False
    try:
        beta = solve(gram)
        if not gradient_ok(beta):
            raise np.linalg.LinAlgError("gradient check failed")
    except np.linalg.LinAlgError:
        if not allow_ridge_fallback:
            raise RankDeficiencyError("singular normal matrix (ridge fallback disabled)")
        p = gram.shape[0]
        ridge = RIDGE_SCALE * max(np.trace(gram) / p, 1.0)
        beta = solve(gram + ridge * np.eye(p))
        used_ridge = True
    return LinearModel(weights=beta[:-1], intercept=float(beta[-1]), ridge_fallback=used_ridge)


@dataclass(frozen=True)
class SweepResult:
    """Threshold-sweep output: one candidate per achievable positive count,
    plus the positive counts made unachievable by score ties."""

    candidates: tuple  # CandidateClassifier, ascending by positives
    omitted_positive_counts: tuple

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


def _stats_for_predictions(y: np.ndarray, z: np.ndarray) -> GroupStats:
    """Stats of a candidate over its own training rows (binary labels)."""
    from .losses import Instance, group_stats

    inst = Instance(tuple([1] * len(y)), tuple(int(v) for v in y), tuple(int(v) for v in z))
    return group_stats(inst, 1)[0]


def sweep_thresholds(scores, labels, score_model=None, weights=None) -> SweepResult:
    """One optimal threshold classifier per achievable positive count.

    For each P the returned classifier (z = 1 iff score > t) minimizes
    (weighted) error among all score-order-consistent classifiers with
    exactly P positives; a single sort plus prefix sums does the sweep.
    Positive counts unachievable because of tied scores are omitted and
    reported in the result.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    m = scores.shape[0]
    if m == 0 or labels.shape[0] != m:
        raise ValueError("scores and labels must be nonempty and equal length")
    if weights is None:
        weights = np.ones(m)
    weights = np.asarray(weights, dtype=np.float64).ravel()

    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order]
    w_sorted = weights[order]
    # err(P) = weighted false positives among top-P + weighted positives missed below
    cum_fp = np.concatenate([[0.0], np.cumsum(w_sorted * (1.0 - y_sorted))])
    total_pos = float(np.sum(w_sorted * y_sorted))
    cum_tp = np.concatenate([[0.0], np.cumsum(w_sorted * y_sorted)])

    candidates = []
    achieved = set()
    for P in range(m + 1):
        if 0 < P < m and s_sorted[P - 1] == s_sorted[P]:
            continue  # tied scores: no threshold separates rank P from P+1
        if P == 0:
            t = math.inf
        elif P == m:
            t = -math.inf
        else:
            t = (s_sorted[P - 1] + s_sorted[P]) / 2.0
        err = cum_fp[P] + (total_pos - cum_tp[P])
        z = (scores > t).astype(np.float64)
        model = ThresholdClassifier(threshold=t, score_model=score_model)
        candidates.append(
            CandidateClassifier(
                model=model,
                positives=P,
                stats=_stats_for_predictions(labels, z),
                train_error=err / float(np.sum(weights)),
            )
        )
        achieved.add(P)
    omitted = tuple(P for P in range(m + 1) if P not in achieved)
    return SweepResult(candidates=tuple(candidates), omitted_positive_counts=omitted)


def exhaustive_learn(finite_class: FiniteClass, sample: WeightedSample, budget: int = 10_000_000) -> list[CandidateClassifier]:
    """Weighted ERM by explicit enumeration of a finite class.

    For each achievable positive count P, returns the classifier of
    minimal weighted error with exactly P positives; ties go to the lowest
    identifier, so the output is independent of enumeration order.
    """
    m = sample.features.shape[0]
    if len(finite_class) * m > budget:
        raise BudgetExceededError(
            f"enumeration needs {len(finite_class) * m} evaluations, budget is {budget}"
        )
    W = sample.total_weight
    if W <= 0:
        raise ValueError("total weight must be positive")
    best: dict[int, tuple[float, int, object, np.ndarray]] = {}
    for ident, clf in sorted(finite_class, key=lambda pair: pair[0]):
        z = np.asarray(clf.predict(sample.features), dtype=np.float64).ravel()
        P = int(np.sum(z))
        err = float(np.sum(sample.weights * np.abs(sample.labels - z)) / W)
        incumbent = best.get(P)
        if incumbent is None or (err, ident) < (incumbent[0], incumbent[1]):
            best[P] = (err, ident, clf, z)
    out = []
    for P in sorted(best):
        err, ident, clf, z = best[P]
        out.append(
            CandidateClassifier(
                model=clf,
                positives=P,
                stats=_stats_for_predictions(sample.labels, z),
                train_error=err,
            )
        )
    return out


def threshold_class_for_scores(scores) -> FiniteClass:
    """The finite class induced by strict thresholds on a score vector
    (midpoints between distinct sorted scores plus +/-inf sentinels)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    distinct = np.unique(scores)
    thresholds = [math.inf]
    thresholds.extend((distinct[i] + distinct[i + 1]) / 2.0 for i in range(len(distinct) - 1))
    thresholds.append(-math.inf)
    members = tuple(
        (ident, ThresholdClassifier(threshold=t)) for ident, t in enumerate(thresholds)
    )
    return FiniteClass(members)


def enumerate_linear_separators_2d(points, max_points: int = 20) -> FiniteClass:
    """One representative halfspace (z = 1 iff w.x + b >= 0) per distinct
    labeling of the points realizable by a linear separator.

    Candidate normal directions are taken perpendicular to every point
    pair, plus slight rotations to both sides (so tied projections split
    either way), plus the axes; for each direction every threshold between
    consecutive distinct projections is tried, and labelings are
    deduplicated.  Constant classifiers (w = 0) are always included.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m = pts.shape[0]
    if m > max_points:
        raise FairsplitError(f"too many points for separator enumeration: {m} > {max_points}")
    if pts.shape[1] != 2:
        raise ValueError("separator enumeration is 2-D only")

    seen: dict[tuple, tuple[np.ndarray, float]] = {}

    def consider(w: np.ndarray, b: float):
        labeling = tuple((pts @ w + b >= 0).astype(int))
        if labeling not in seen:
            seen[labeling] = (w.copy(), float(b))

    consider(np.zeros(2), 1.0)  # constant 1
    consider(np.zeros(2), -1.0)  # constant 0

    # Base directions: perpendiculars to all pairs, plus axes.
    base_dirs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    for i in range(m):
        for j in range(i + 1, m):
            d = pts[j] - pts[i]
            norm = float(np.hypot(d[0], d[1]))
            if norm == 0.0:
                continue
            base_dirs.append(np.array([-d[1], d[0]]) / norm)

    angles = sorted({math.atan2(u[1], u[0]) % math.pi for u in base_dirs})
    if len(angles) > 1:
        gaps = [angles[i + 1] - angles[i] for i in range(len(angles) - 1)]
        gaps.append(math.pi - angles[-1] + angles[0])
        eps = max(min(g for g in gaps if g > 0) / 4.0, 1e-9)
    else:
        eps = 1e-6

    directions = []
    for angle in angles:
        for a in (angle - eps, angle, angle + eps):
            u = np.array([math.cos(a), math.sin(a)])
            directions.append(u)
            directions.append(-u)

    for u in directions:
        proj = pts @ u
        distinct = np.unique(proj)
        cuts = [distinct[0] - 1.0]
        cuts.extend((distinct[t] + distinct[t + 1]) / 2.0 for t in range(len(distinct) - 1))
        cuts.append(distinct[-1] + 1.0)
        for c in cuts:
            consider(u, -c)

    members = tuple(
        (ident, LinearSeparator(weights=w, intercept=b))
        for ident, (w, b) in enumerate(seen[key] for key in sorted(seen))
    )
    return FiniteClass(members)
