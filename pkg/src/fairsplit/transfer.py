"""Transfer learning by out-group down-weighting.

A group's classifier is trained on its own rows at weight 1 plus all
other rows at weight theta in [0, 1].  theta can be chosen two ways:

* cross-validation over a grid (the default; needs no distributional
  knowledge), or
* minimizing a high-probability excess-error bound f(theta) that depends
  on a cap Delta on how differently classifier error gaps behave across
  groups, a confidence delta and the class size |C|:

      f(theta) = ( sqrt(2 (n_k + theta^2 n_mk) ln(2|C|/delta))
                   + theta n_mk Delta ) / (n_k + theta n_mk)

All logarithms are natural (the bound is Hoeffding-derived).  The
minimizer sits at theta = 0 exactly when n_k >= (2/Delta^2) ln(2|C|/delta);
otherwise it is the unique root of the stationarity condition

      Delta = r (1 - theta) / sqrt(1 + theta^2 n_mk/n_k),
      r = sqrt((2/n_k) ln(2|C|/delta)),

found by bracketed root solving.  Two closed-form candidates for the
interior minimizer circulate in different parameterizations; neither
reproduces the stationarity root in general, so the numerical solution
is authoritative and both candidates are evaluated and reported with
agreement flags (see ThetaStarResult).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .core import CandidateClassifier, FairsplitError, MODE_BINARY, MODE_REGRESSION
from .learners import (
    ThresholdClassifier,
    WeightedSample,
    fit_weighted_least_squares,
    _stats_for_predictions,
)

# Grid used in the cross-validation experiments: zero (no transfer), a
# geometric ladder, and full pooling -- 11 values, so the reference
# protocol of 5 outer x 5 inner folds does 5*5*11 = 275 fits per group.
DEFAULT_THETA_GRID = (0.0,) + tuple(2.0 ** -k for k in range(9, 0, -1)) + (1.0,)

BRANCH_BOUNDARY_ZERO = "boundary_zero"
BRANCH_INTERIOR = "interior"


@dataclass(frozen=True)
class TransferConfig:
    """Down-weighting configuration: theta grid, inner fold count, and the
    optional bound inputs (Delta, delta, |C|) for the bound-based path."""

    theta_grid: tuple = DEFAULT_THETA_GRID
    inner_folds: int = 5
    delta_bound: Optional[float] = None
    confidence: float = 0.05
    class_size: Optional[int] = None

    def __post_init__(self):
        grid = tuple(float(t) for t in self.theta_grid)
        if not grid:
            raise ValueError("theta grid must be nonempty")
        if any(not 0.0 <= t <= 1.0 for t in grid):
            raise ValueError("theta grid values must lie in [0,1]")
        if list(grid) != sorted(set(grid)):
            raise ValueError("theta grid must be sorted and distinct")
        object.__setattr__(self, "theta_grid", grid)
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence (delta) must be in (0,1)")
        if self.inner_folds < 2:
            raise ValueError("inner_folds must be >= 2")


@dataclass(frozen=True)
class BoundInputs:
    n_k: int
    n_minus_k: int
    delta_cap: float  # Delta >= 0
    confidence: float  # delta in (0,1)
    class_size: int  # |C| >= 1

    def __post_init__(self):
        if self.n_k < 1:
            raise ValueError("n_k must be >= 1")
        if self.n_minus_k < 0:
            raise ValueError("n_minus_k must be >= 0")
        if self.delta_cap < 0:
            raise ValueError("Delta must be >= 0")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0,1)")
        if self.class_size < 1:
            raise ValueError("class size must be >= 1")

    @property
    def log_term(self) -> float:
        return math.log(2.0 * self.class_size / self.confidence)

    @property
    def r(self) -> float:
        """f at theta = 0: sqrt((2/n_k) ln(2|C|/delta))."""
        return math.sqrt(2.0 / self.n_k * self.log_term)


def f_bound(theta, inputs: BoundInputs):
    """The excess-error bound f(theta); accepts scalars or arrays."""
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0):
        raise ValueError("theta must be >= 0")
    n_k, n_mk = inputs.n_k, inputs.n_minus_k
    value = (
        np.sqrt(2.0 * (n_k + theta**2 * n_mk) * inputs.log_term)
        + theta * n_mk * inputs.delta_cap
    ) / (n_k + theta * n_mk)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class ThetaStarResult:
    theta: float
    f_value: float
    branch: str  # boundary_zero | interior
    stationarity_residual: float  # |Delta - r(1-theta)/sqrt(1+theta^2 m)| at theta*
    closed_forms: dict = field(default_factory=dict)  # candidate closed-form values
    closed_form_agrees: dict = field(default_factory=dict)  # candidate -> within 1e-6 of theta


def theta_star(inputs: BoundInputs) -> ThetaStarResult:
    """Minimize f over theta in [0, 1].

    Returns the boundary branch (theta = 0) exactly when Delta >= r, i.e.
    n_k >= (2/Delta^2) ln(2|C|/delta).  Otherwise the interior stationary
    point is bracketed to 1e-12; Delta = 0 pushes the stationary point to
    theta = 1 (full pooling).  The closed-form candidates are evaluated
    for diagnostics but never trusted.
    """
    r = inputs.r
    delta_cap = inputs.delta_cap
    m = inputs.n_minus_k / inputs.n_k if inputs.n_k else 0.0

    if delta_cap >= r:
        theta = 0.0
        branch = BRANCH_BOUNDARY_ZERO
    elif delta_cap == 0.0:
        theta = 1.0
        branch = BRANCH_INTERIOR
    else:
        # d f / d theta has the sign of Delta - r(1-theta)/sqrt(1+theta^2 m),
        # strictly increasing in theta, negative at 0 (Delta < r), positive
        # at 1 (Delta > 0): a unique bracketed root.
        def stationarity(t):
            return delta_cap * math.sqrt(1.0 + t * t * m) - r * (1.0 - t)

        theta = float(brentq(stationarity, 0.0, 1.0, xtol=1e-12, rtol=8.9e-16))
        branch = BRANCH_INTERIOR

    residual = abs(delta_cap - r * (1.0 - theta) / math.sqrt(1.0 + theta * theta * m))
    closed_forms = {}
    agrees = {}
    if m > 0:
        for name, beta in (
            ("beta=Delta^2*r^2", delta_cap**2 * r**2),
            ("beta=Delta^2/r^2", delta_cap**2 / r**2 if r > 0 else math.inf),
        ):
            inner = beta**2 / 4.0 + m * (1.0 - beta)
            value = math.sqrt(inner) - beta / 2.0 if inner >= 0 else math.nan
            closed_forms[name] = value
            agrees[name] = bool(math.isfinite(value) and abs(value - theta) <= 1e-6)
    return ThetaStarResult(
        theta=theta,
        f_value=f_bound(theta, inputs),
        branch=branch,
        stationarity_residual=residual if branch == BRANCH_INTERIOR and delta_cap > 0 else 0.0,
        closed_forms=closed_forms,
        closed_form_agrees=agrees,
    )


def generalization_bound(nu, R: float, n: int, K: int, class_size: int, confidence: float, delta_cap: float) -> float:
    """Excess-loss bound: 5 R K tau + R sum_k min(tau sqrt(1/(nu_k - tau)), Delta),
    tau = sqrt((2/n) ln(8 |C| (n+K) / delta)).

    When nu_k <= tau the first arm is imaginary and the min is defined as
    the Delta arm.  Returns +inf when tau >= 1 (too little data for the
    bound to say anything).  The statement's 5RK tau constant is used; the
    proof's tighter 2RK tau variant is noted here for reference only.
    """
    nu = np.asarray(nu, dtype=np.float64).ravel()
    if nu.shape[0] != K:
        raise ValueError(f"expected {K} group probabilities, got {nu.shape[0]}")
    if np.any(nu < 0) or abs(float(np.sum(nu)) - 1.0) > 1e-9:
        raise ValueError("nu must be nonnegative and sum to 1")
    if R < 0:
        raise ValueError("R must be >= 0")
    tau = math.sqrt(2.0 / n * math.log(8.0 * class_size * (n + K) / confidence))
    if tau >= 1.0:
        return math.inf
    total = 5.0 * R * K * tau
    for nu_k in nu:
        if nu_k > tau:
            arm = tau * math.sqrt(1.0 / (nu_k - tau))
            total += R * min(arm, delta_cap)
        else:
            total += R * delta_cap
    return total


BaseFitter = Callable[[WeightedSample], object]


def transfer_fit(
    in_features,
    in_labels,
    out_features,
    out_labels,
    theta: float,
    base: BaseFitter = fit_weighted_least_squares,
    mode: str = MODE_BINARY,
) -> list[CandidateClassifier]:
    """Fit on the union of in-group rows (weight 1) and out-group rows
    (weight theta).

    Binary mode returns one candidate per achievable in-group positive
    count: the base learner fits a score model on the weighted union, and
    for each in-group count P the threshold minimizing the theta-weighted
    error among thresholds realizing P is kept.  Regression mode returns
    the single weighted least-squares fit.  theta = 0 reproduces the
    in-group-only fit exactly (out-group rows are dropped, not
    zero-weighted).
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta {theta} outside [0,1]")
    in_X = np.atleast_2d(np.asarray(in_features, dtype=np.float64))
    in_y = np.asarray(in_labels, dtype=np.float64).ravel()
    if in_X.shape[0] == 0:
        raise FairsplitError("in-group rows must be nonempty")
    out_X = np.atleast_2d(np.asarray(out_features, dtype=np.float64))
    out_y = np.asarray(out_labels, dtype=np.float64).ravel()
    if out_X.size == 0:
        out_X = np.empty((0, in_X.shape[1]))
        out_y = np.empty(0)

    if theta == 0.0:
        X, y, w = in_X, in_y, np.ones(in_X.shape[0])
        n_in = in_X.shape[0]
    else:
        X = np.vstack([in_X, out_X])
        y = np.concatenate([in_y, out_y])
        w = np.concatenate([np.ones(in_X.shape[0]), np.full(out_X.shape[0], theta)])
        n_in = in_X.shape[0]

    model = base(WeightedSample(X, y, w))
    if mode == MODE_REGRESSION:
        return [CandidateClassifier(model=model, positives=None, theta=theta)]
    return _threshold_candidates(model, X, y, w, n_in, in_y, theta)


def _threshold_candidates(model, X, y, w, n_in, in_y, theta) -> list[CandidateClassifier]:
    """One candidate per achievable in-group positive count, choosing the
    threshold of minimal theta-weighted error within each count."""
    scores = np.asarray(model.predict(X), dtype=np.float64).ravel()
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = y[order]
    w_sorted = w[order]
    in_sorted = (order < n_in).astype(np.float64)

    cum_fp = np.concatenate([[0.0], np.cumsum(w_sorted * (1.0 - y_sorted))])
    cum_tp = np.concatenate([[0.0], np.cumsum(w_sorted * y_sorted)])
    total_pos = cum_tp[-1]
    cum_in = np.concatenate([[0], np.cumsum(in_sorted).astype(int)])

    m = scores.shape[0]
    best: dict[int, tuple[float, float]] = {}  # in-group P -> (weighted err, threshold)
    for cut in range(m + 1):
        if 0 < cut < m and s_sorted[cut - 1] == s_sorted[cut]:
            continue
        if cut == 0:
            t = math.inf
        elif cut == m:
            t = -math.inf
        else:
            t = (s_sorted[cut - 1] + s_sorted[cut]) / 2.0
        err = float(cum_fp[cut] + (total_pos - cum_tp[cut]))
        P = int(cum_in[cut])
        incumbent = best.get(P)
        if incumbent is None or err < incumbent[0]:
            best[P] = (err, t)

    out = []
    in_X_rows = X[:n_in]
    for P in sorted(best):
        err, t = best[P]
        clf = ThresholdClassifier(threshold=t, score_model=model)
        z_in = np.asarray(clf.predict(in_X_rows), dtype=np.float64).ravel()
        out.append(
            CandidateClassifier(
                model=clf,
                positives=int(np.sum(z_in)),
                stats=_stats_for_predictions(in_y, z_in),
                theta=theta,
                train_error=err,
            )
        )
    return out


@dataclass(frozen=True)
class ThetaSelection:
    theta: float
    grid: tuple
    mean_losses: tuple  # mean validation loss per grid value


def select_theta_cv(
    in_features,
    in_labels,
    out_features,
    out_labels,
    cfg: TransferConfig,
    base: BaseFitter = fit_weighted_least_squares,
    mode: str = MODE_REGRESSION,
    seed: int = 0,
) -> ThetaSelection:
    """Pick theta from the grid by cross-validated in-group loss.

    Folds partition the in-group rows only; every fold's training set sees
    the full out-group.  The validation metric is the in-group loss of the
    fitted model (squared error in regression mode; in binary mode, the
    0-1 error of the minimal-training-error threshold candidate).  Ties go
    to the smaller theta.  Fold assignment is a seeded shuffle into
    contiguous blocks, so selection is deterministic given (seed, data,
    grid).
    """
    in_X = np.atleast_2d(np.asarray(in_features, dtype=np.float64))
    in_y = np.asarray(in_labels, dtype=np.float64).ravel()
    n_k = in_X.shape[0]
    folds = cfg.inner_folds
    if n_k < folds:
        raise FairsplitError(f"group of size {n_k} is smaller than {folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_k)
    blocks = np.array_split(perm, folds)

    means = []
    for theta in cfg.theta_grid:
        losses = []
        for val_idx in blocks:
            if val_idx.size == 0:
                continue
            mask = np.ones(n_k, dtype=bool)
            mask[val_idx] = False
            cands = transfer_fit(
                in_X[mask], in_y[mask], out_features, out_labels, theta, base=base, mode=mode
            )
            losses.append(_validation_loss(cands, in_X[val_idx], in_y[val_idx], mode))
        means.append(float(np.mean(losses)))
    best = min(range(len(cfg.theta_grid)), key=lambda i: (means[i], cfg.theta_grid[i]))
    return ThetaSelection(theta=cfg.theta_grid[best], grid=cfg.theta_grid, mean_losses=tuple(means))


def _validation_loss(cands, X_val, y_val, mode: str) -> float:
    if mode == MODE_REGRESSION:
        z = np.asarray(cands[0].model.predict(X_val), dtype=np.float64).ravel()
        return float(np.mean((y_val - z) ** 2))
    chosen = min(cands, key=lambda c: (c.train_error, c.positives))
    z = np.asarray(chosen.model.predict(X_val), dtype=np.float64).ravel()
    return float(np.mean(np.abs(y_val - z)))
