"""Per-group candidate generation and joint-loss-minimizing product search.

``decouple`` partitions the data by group, runs a base learner on each
group's rows alone, and picks the combination of one candidate per group
that minimizes the joint loss.  ``general_decouple`` does the same with a
transfer learner that also sees the out-group rows.  With an optimal base
learner and a monotonic loss the result attains the exact minimum over
all combinations the class can produce.

The search never touches raw rows: each candidate's group error and
profile are precomputed once, and the loss is evaluated from those
(error, profile, count, base rate) tuples.  Ties are broken
lexicographically by per-group candidate index, with candidate lists in
canonical order (ascending positives), so results do not depend on the
order a learner happens to return candidates in.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Optional

import numpy as np

from .core import (
    CandidateClassifier,
    ContractViolationError,
    Dataset,
    DecoupledClassifier,
    FairsplitError,
    GroupStats,
    MODE_BINARY,
)
from .losses import (
    KIND_BALANCED,
    KIND_DP_STRICT,
    KIND_FIXED,
    KIND_L1,
    KIND_NP_STRICT,
    LossSpec,
    find_monotonicity_counterexample,
    loss_from_stats,
)

DEFAULT_MAX_GROUPS = 4
_SEPARABLE_KINDS = (KIND_L1, KIND_BALANCED)
_STRICT_KINDS = (KIND_NP_STRICT, KIND_DP_STRICT)


class InfeasibleProfileError(FairsplitError):
    """A fixed-profile target is unachievable in some group."""


@dataclass(frozen=True)
class TableEntry:
    """One candidate with its precomputed in-group statistics."""

    candidate: CandidateClassifier
    ell_hat: object  # Fraction (binary) or float (regression)
    p_hat: object
    positives: Optional[int]


@dataclass(frozen=True)
class CandidateTable:
    """Per-group candidate lists with precomputed (error, profile) pairs.

    ``n_total`` is the full training size, ``n_k``/``pi_k`` the per-group
    counts and base rates.  In binary mode candidates within a group must
    have distinct positive counts (the optimal-learner contract); lists
    are sorted ascending by positives.
    """

    per_group: tuple  # K tuples of TableEntry
    n_total: int
    n_k: tuple
    pi_k: tuple  # Fractions (binary) or floats

    @property
    def k_groups(self) -> int:
        return len(self.per_group)

    def combinations(self) -> int:
        out = 1
        for entries in self.per_group:
            out *= len(entries)
        return out


def build_candidate_table(ds: Dataset, candidates_by_group: list[list[CandidateClassifier]]) -> CandidateTable:
    """Precompute each candidate's in-group error and profile.

    For candidate c of group k:  ell_k[c] = mean |y_i - c(x_i)| over the
    group's rows, p_k[c] = sum of c(x_i) over the group's rows divided by
    the total n.  Binary mode keeps both as exact rationals.
    """
    n = ds.n
    binary = ds.mode == MODE_BINARY
    groups_entries = []
    n_k_list = []
    pi_list = []
    for k in range(1, ds.k_groups + 1):
        rows = ds.group_rows(k)
        if rows.size == 0:
            raise FairsplitError(f"group {k} has no training rows")
        X_k = ds.features[rows]
        y_k = ds.labels[rows]
        n_k = int(rows.size)
        n_k_list.append(n_k)
        pos_labels = int(np.sum(y_k)) if binary else float(np.sum(y_k))
        pi_list.append(Fraction(pos_labels, n_k) if binary else pos_labels / n_k)
        entries = []
        seen_positives = set()
        for cand in candidates_by_group[k - 1]:
            z = np.asarray(cand.model.predict(X_k), dtype=np.float64).ravel()
            if binary:
                errors = int(np.sum(np.abs(y_k - z)))
                positives = int(np.sum(z))
                if positives in seen_positives:
                    raise ContractViolationError(
                        f"group {k}: two candidates classify {positives} positives"
                    )
                seen_positives.add(positives)
                if cand.positives is not None and cand.positives != positives:
                    raise ContractViolationError(
                        f"group {k}: candidate records {cand.positives} positives, recomputed {positives}"
                    )
                entries.append(
                    TableEntry(
                        candidate=cand,
                        ell_hat=Fraction(errors, n_k),
                        p_hat=Fraction(positives, n),
                        positives=positives,
                    )
                )
            else:
                sq = float(np.mean((y_k - z) ** 2))
                entries.append(
                    TableEntry(candidate=cand, ell_hat=sq, p_hat=float(np.sum(z)) / n, positives=None)
                )
        if binary:
            entries.sort(key=lambda e: e.positives)
        groups_entries.append(tuple(entries))
    return CandidateTable(
        per_group=tuple(groups_entries),
        n_total=n,
        n_k=tuple(n_k_list),
        pi_k=tuple(pi_list),
    )


@dataclass(frozen=True)
class ProductSearchResult:
    indices: tuple  # chosen candidate index per group (into the table lists)
    loss: object  # Fraction (binary) or float (regression)
    parity_infeasible: bool
    loss_evaluations: int

    def selected(self, table: CandidateTable) -> list[CandidateClassifier]:
        return [table.per_group[k][i].candidate for k, i in enumerate(self.indices)]


def _entry_stats(entry: TableEntry, n_k: int, n_total: int, pi) -> GroupStats:
    return GroupStats(
        n_k=n_k,
        n_total=n_total,
        pi_k=pi,
        p_hat_k=entry.p_hat,
        ell_hat_k=entry.ell_hat,
        fnr_k=_fnr_from(entry, n_k, n_total, pi),
    )


def _fnr_from(entry: TableEntry, n_k: int, n_total: int, pi):
    # FN_k = (ell_k + pi_k - p_k * n/n_k) / 2, valid for binary candidates.
    if not isinstance(entry.ell_hat, Fraction):
        return None
    fn = (entry.ell_hat + pi - entry.p_hat * n_total / n_k) / 2
    return fn / pi if pi > 0 else None


def product_search(table: CandidateTable, spec: LossSpec) -> ProductSearchResult:
    """Exact minimizer of the joint loss over the candidate product space.

    Evaluates the loss only from precomputed per-group tuples.  Fixed-
    profile losses short-circuit to a per-group lookup of the target
    profile.  When a strict-parity loss is infeasible everywhere (every
    combination has loss 1) the returned selection minimizes plain error
    as a secondary key and is flagged ``parity_infeasible``.
    """
    if len(table.per_group) != spec.K:
        raise ValueError(f"table has {len(table.per_group)} groups, spec expects {spec.K}")
    for k, entries in enumerate(table.per_group, start=1):
        if not entries:
            raise FairsplitError(f"group {k} has no candidates")

    if spec.kind == KIND_FIXED:
        return _fixed_profile_lookup(table, spec)
    if spec.kind in _SEPARABLE_KINDS:
        return _separable_search(table, spec)
    return _full_product_search(table, spec)


def _fixed_profile_lookup(table: CandidateTable, spec: LossSpec) -> ProductSearchResult:
    indices = []
    for k, entries in enumerate(table.per_group):
        target = spec.target_profile[k]
        match = next((i for i, e in enumerate(entries) if e.p_hat == target), None)
        if match is None:
            nearest = min(entries, key=lambda e: (abs(e.p_hat - target), e.positives or 0))
            raise InfeasibleProfileError(
                f"group {k + 1}: no candidate with profile {target}; "
                f"nearest achievable has {nearest.positives} positives (profile {nearest.p_hat})"
            )
        indices.append(match)
    stats = [
        _entry_stats(table.per_group[k][i], table.n_k[k], table.n_total, table.pi_k[k])
        for k, i in enumerate(indices)
    ]
    return ProductSearchResult(
        indices=tuple(indices),
        loss=loss_from_stats(spec, stats),
        parity_infeasible=False,
        loss_evaluations=1,
    )


def _separable_search(table: CandidateTable, spec: LossSpec) -> ProductSearchResult:
    # l1 and balanced decompose over groups: minimize each group error
    # independently (first index wins ties, which in canonical order is
    # the lexicographic rule).
    indices = []
    for entries in table.per_group:
        best = min(range(len(entries)), key=lambda i: (entries[i].ell_hat, i))
        indices.append(best)
    stats = [
        _entry_stats(table.per_group[k][i], table.n_k[k], table.n_total, table.pi_k[k])
        for k, i in enumerate(indices)
    ]
    return ProductSearchResult(
        indices=tuple(indices),
        loss=loss_from_stats(spec, stats),
        parity_infeasible=False,
        loss_evaluations=sum(len(e) for e in table.per_group),
    )


def _full_product_search(table: CandidateTable, spec: LossSpec) -> ProductSearchResult:
    l1_spec = LossSpec(KIND_L1, K=spec.K)
    strict = spec.kind in _STRICT_KINDS
    evaluations = 0
    best_key = None
    best_indices = None
    best_loss = None
    best_feasible = None
    for combo in product(*(range(len(entries)) for entries in table.per_group)):
        stats = [
            _entry_stats(table.per_group[k][i], table.n_k[k], table.n_total, table.pi_k[k])
            for k, i in enumerate(combo)
        ]
        loss = loss_from_stats(spec, stats)
        evaluations += 1
        if strict:
            l1 = loss_from_stats(l1_spec, stats)
            feasible = loss != 1 or _strict_predicate_holds(spec, stats)
            key = (loss, 0 if feasible else 1, l1, combo)
        else:
            feasible = True
            key = (loss, combo)
        if best_key is None or key < best_key:
            best_key, best_indices, best_loss, best_feasible = key, combo, loss, feasible
    return ProductSearchResult(
        indices=tuple(best_indices),
        loss=best_loss,
        parity_infeasible=strict and not best_feasible,
        loss_evaluations=evaluations,
    )


def _strict_predicate_holds(spec: LossSpec, stats) -> bool:
    if spec.kind == KIND_NP_STRICT:
        values = [st.p_hat_k for st in stats]
    else:
        values = [st.p_hat_k * st.n_total / st.n_k for st in stats]
    return len(set(values)) <= 1


BaseLearner = Callable[[np.ndarray, np.ndarray], list]


def decouple(
    learner: BaseLearner,
    spec: LossSpec,
    ds: Dataset,
    check_monotonic: bool = False,
    max_groups: int = DEFAULT_MAX_GROUPS,
) -> DecoupledClassifier:
    """Train per-group candidates with ``learner`` and select the
    loss-minimizing combination.

    ``learner(features, labels)`` is called once per group, on that
    group's rows only, and must return candidates with pairwise distinct
    positive counts.  Monotonicity of ``spec`` is the caller's assertion;
    with ``check_monotonic`` a small exhaustive swap search is run first.
    """
    _pre_checks(spec, ds, check_monotonic, max_groups)
    candidates_by_group = []
    for k in range(1, ds.k_groups + 1):
        rows = ds.group_rows(k)
        if rows.size == 0:
            raise FairsplitError(f"group {k} is empty")
        cands = learner(ds.features[rows], ds.labels[rows])
        if not cands:
            raise FairsplitError(f"learner returned no candidates for group {k}")
        candidates_by_group.append(list(cands))
    return _select(ds, spec, candidates_by_group)


TransferLearner = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], list]


def general_decouple(
    transfer: TransferLearner,
    spec: LossSpec,
    ds: Dataset,
    check_monotonic: bool = False,
    max_groups: int = DEFAULT_MAX_GROUPS,
) -> DecoupledClassifier:
    """Decoupling with a transfer learner that also receives out-group rows.

    ``transfer(in_features, in_labels, out_features, out_labels)`` runs
    once per group.  Candidate errors/profiles are still estimated on the
    in-group rows alone, so with a transfer learner that ignores the
    out-group data this reduces to :func:`decouple`.  In regression mode
    only balanced / l1 losses are accepted.
    """
    _pre_checks(spec, ds, check_monotonic, max_groups)
    if ds.mode != MODE_BINARY and spec.kind not in _SEPARABLE_KINDS:
        raise ValueError("regression mode supports only balanced and l1 losses")
    candidates_by_group = []
    for k in range(1, ds.k_groups + 1):
        in_rows = ds.group_rows(k)
        if in_rows.size == 0:
            raise FairsplitError(f"group {k} is empty")
        out_mask = ds.groups != k
        cands = transfer(
            ds.features[in_rows],
            ds.labels[in_rows],
            ds.features[out_mask],
            ds.labels[out_mask],
        )
        if not cands:
            raise FairsplitError(f"transfer learner returned no candidates for group {k}")
        candidates_by_group.append(list(cands))
    return _select(ds, spec, candidates_by_group)


def _pre_checks(spec: LossSpec, ds: Dataset, check_monotonic: bool, max_groups: int):
    if ds.k_groups != spec.K:
        raise ValueError(f"dataset has {ds.k_groups} groups, loss expects {spec.K}")
    if ds.k_groups > max_groups:
        raise FairsplitError(
            f"{ds.k_groups} groups exceeds the configured cap {max_groups}; "
            "the product search is exponential in the group count"
        )
    if check_monotonic:
        witness = find_monotonicity_counterexample(spec, max_n=6)
        if witness is not None:
            raise FairsplitError(
                f"loss {spec.spec_id} is not monotonic (swap counterexample at n={witness[0].n})"
            )


def _select(ds: Dataset, spec: LossSpec, candidates_by_group) -> DecoupledClassifier:
    table = build_candidate_table(ds, candidates_by_group)
    result = product_search(table, spec)
    chosen = result.selected(table)
    thetas = tuple(c.theta for c in chosen)
    return DecoupledClassifier(
        per_group=tuple(c.model for c in chosen),
        achieved_loss=float(result.loss),
        loss_spec_id=spec.spec_id,
        achieved_loss_exact=result.loss,
        theta_by_group=thetas if any(t is not None for t in thetas) else None,
        parity_infeasible=result.parity_infeasible,
    )
