"""Group statistics, the joint-loss catalog, and monotonicity checking.

A *joint loss* maps a whole sequence of (group, label, classification)
triples to a real number, so it can price differences between groups and
not just average per-example errors.  Every loss here is a function of the
per-group statistics (error rate, profile, count, base rate), never of row
order; all formulas are evaluated in exact rational arithmetic over the
underlying integer counts, so equality predicates ("profiles all equal")
and swap comparisons need no tolerance.

Catalog (K groups; lambda in [0,1]; the lambda-weighted forms put weight
lambda on plain error and 1-lambda on the disparity term):

==================  =========================================================
balanced            mean over groups of group error
l1                  overall mean error = sum_k (n_k/n) * ell_k
np-strict           l1 if all profiles equal, else 1
np                  lam*l1 + (1-lam) * sum_k |p_k - mean(p)|
dp-strict           l1 if all within-group positive fractions equal, else 1
dp                  lam*l1 + (1-lam) * sum_k |q_k - mean(q)|, q_k = p_k*n/n_k
fixed               l1 if the profile vector equals the target, else 1
fnr                 lam*l1 + (1-lam) * sum_k |FNR_k - mean(FNR)|
absgap              (1-lam)*(ell_1+ell_2) + lam*|ell_1-ell_2|   (K=2 only)
==================  =========================================================

The ``np`` and ``dp`` disparity terms are sums over groups, not means:
no 1/K factor is applied.  ``absgap`` puts lambda on the gap term
(opposite weighting to the others) and is monotonic iff lambda <= 1/2;
``fnr`` is the one catalog entry that is never monotonic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import FairsplitError, GroupStats, exact_fraction

KIND_BALANCED = "balanced"
KIND_L1 = "l1"
KIND_NP_STRICT = "np-strict"
KIND_NP = "np"
KIND_DP_STRICT = "dp-strict"
KIND_DP = "dp"
KIND_FIXED = "fixed"
KIND_FNR = "fnr"
KIND_ABSGAP = "absgap"

ALL_KINDS = (
    KIND_BALANCED,
    KIND_L1,
    KIND_NP_STRICT,
    KIND_NP,
    KIND_DP_STRICT,
    KIND_DP,
    KIND_FIXED,
    KIND_FNR,
    KIND_ABSGAP,
)
_NEEDS_LAMBDA = (KIND_NP, KIND_DP, KIND_FNR, KIND_ABSGAP)
# Monotonic for every parameter choice; absgap is monotonic only for
# lambda <= 1/2 (see LossSpec.is_monotonic), fnr never.
MONOTONE_KINDS = (
    KIND_BALANCED,
    KIND_L1,
    KIND_NP_STRICT,
    KIND_NP,
    KIND_DP_STRICT,
    KIND_DP,
    KIND_FIXED,
)


class LossUndefinedError(FairsplitError):
    """The requested loss is undefined on this instance (empty group or
    zero base rate for an FNR-based loss)."""


class SwapPreconditionError(FairsplitError):
    """swap_increases_loss was called on a pair that is not aligned."""


@dataclass(frozen=True)
class LossSpec:
    """Tagged description of one catalog joint loss.

    ``lam`` and ``target_profile`` accept ints, Fractions, decimal strings
    or floats; floats are read via their shortest decimal form (0.1 means
    exactly 1/10).
    """

    kind: str
    lam: Optional[Fraction] = None
    target_profile: Optional[tuple] = None
    K: int = 2

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind in _NEEDS_LAMBDA:
            if self.lam is None:
                raise ValueError(f"loss {self.kind!r} requires lambda")
            lam = exact_fraction(self.lam)
            if not 0 <= lam <= 1:
                raise ValueError(f"lambda {lam} outside [0,1]")
            object.__setattr__(self, "lam", lam)
        elif self.lam is not None:
            raise ValueError(f"loss {self.kind!r} does not take lambda")
        if self.kind == KIND_FIXED:
            if self.target_profile is None:
                raise ValueError("fixed-profile loss requires a target profile")
            target = tuple(exact_fraction(p) for p in self.target_profile)
            object.__setattr__(self, "target_profile", target)
            object.__setattr__(self, "K", len(target))
        elif self.target_profile is not None:
            raise ValueError(f"loss {self.kind!r} does not take a target profile")
        if self.kind == KIND_ABSGAP and self.K != 2:
            raise ValueError("absgap loss is defined for exactly 2 groups")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @property
    def is_monotonic(self) -> bool:
        """Whether the loss is monotonic for these parameters."""
        if self.kind in MONOTONE_KINDS:
            return True
        if self.kind == KIND_ABSGAP:
            return self.lam <= Fraction(1, 2)
        return False  # fnr

    @property
    def spec_id(self) -> str:
        """Canonical compact string form; round-trips through parse_loss_spec."""
        if self.kind in (KIND_BALANCED, KIND_L1, KIND_NP_STRICT, KIND_DP_STRICT):
            return self.kind
        if self.kind == KIND_FIXED:
            return "fixed:p=" + ",".join(str(p) for p in self.target_profile)
        return f"{self.kind}:lambda={self.lam}"


def parse_loss_spec(text: str, K: int = 2) -> LossSpec:
    """Parse the compact CLI form, e.g. ``l1``, ``np:lambda=0.5``,
    ``dp-strict``, ``fixed:p=0.1,0.2``, ``fnr:lambda=0.3``,
    ``absgap:lambda=0.5``."""
    text = text.strip()
    head, _, params = text.partition(":")
    head = head.lower()
    if head in (KIND_BALANCED, KIND_L1, KIND_NP_STRICT, KIND_DP_STRICT):
        if params:
            raise ValueError(f"loss {head!r} takes no parameters")
        return LossSpec(head, K=K)
    if head in (KIND_NP, KIND_DP, KIND_FNR, KIND_ABSGAP):
        key, _, value = params.partition("=")
        if key.strip() != "lambda" or not value:
            raise ValueError(f"loss {head!r} needs lambda=<value>, got {text!r}")
        return LossSpec(head, lam=Fraction(value.strip()), K=K)
    if head == KIND_FIXED:
        key, _, value = params.partition("=")
        if key.strip() != "p" or not value:
            raise ValueError(f"fixed loss needs p=<v1,...,vK>, got {text!r}")
        target = tuple(Fraction(v.strip()) for v in value.split(","))
        return LossSpec(KIND_FIXED, target_profile=target)
    raise ValueError(f"unknown loss spec {text!r}")


@dataclass(frozen=True)
class Instance:
    """A full (group, label, classification) sequence."""

    groups: tuple  # ints in 1..K
    labels: tuple
    classifications: tuple

    def __post_init__(self):
        g = tuple(int(v) for v in self.groups)
        y = tuple(self.labels)
        z = tuple(self.classifications)
        if not len(g) == len(y) == len(z):
            raise ValueError("groups, labels, classifications must have equal length")
        object.__setattr__(self, "groups", g)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "classifications", z)

    @property
    def n(self) -> int:
        return len(self.groups)

    def with_swapped(self, i: int, j: int) -> "Instance":
        z = list(self.classifications)
        z[i], z[j] = z[j], z[i]
        return Instance(self.groups, self.labels, tuple(z))


def _is_binary_value(v) -> bool:
    return v == 0 or v == 1


def group_stats(inst: Instance, K: int) -> list[GroupStats]:
    """Per-group statistics of an instance, as exact rationals.

    With binary classifications the false-positive / false-negative
    identities hold exactly:

        fp_k = (ell_k + p_k*n/n_k - pi_k) / 2
        fn_k = (ell_k + pi_k - p_k*n/n_k) / 2
        ell_k = fp_k + fn_k

    Fractional z in [0,1] (randomized classifiers) yields only the error
    rate, profile and base rate; the FP/FN decomposition is left absent.
    An empty group gets n_k = 0 with every rate absent.
    """
    n = inst.n
    bad = [g for g in inst.groups if not 1 <= g <= K]
    if bad:
        raise ValueError(f"group index {bad[0]} outside 1..{K}")
    stats: list[GroupStats] = []
    for k in range(1, K + 1):
        rows = [i for i in range(n) if inst.groups[i] == k]
        n_k = len(rows)
        if n_k == 0:
            stats.append(GroupStats(n_k=0, n_total=n))
            continue
        ys = [exact_fraction(inst.labels[i]) for i in rows]
        zs = [exact_fraction(inst.classifications[i]) for i in rows]
        pi = sum(ys, Fraction(0)) / n_k
        p_hat = sum(zs, Fraction(0)) / n
        ell = sum((abs(y - z) for y, z in zip(ys, zs)), Fraction(0)) / n_k
        binary = all(_is_binary_value(z) for z in zs) and all(_is_binary_value(y) for y in ys)
        fp = fn = fnr = None
        if binary:
            fp = sum((z * (1 - y) for y, z in zip(ys, zs)), Fraction(0)) / n_k
            fn = sum(((1 - z) * y for y, z in zip(ys, zs)), Fraction(0)) / n_k
            if pi > 0:
                fnr = fn / pi
        stats.append(
            GroupStats(n_k=n_k, n_total=n, pi_k=pi, p_hat_k=p_hat, ell_hat_k=ell, fp_k=fp, fn_k=fn, fnr_k=fnr)
        )
    return stats


def group_stats_from_counts(tp: int, fp: int, fn: int, tn: int, n_total: int) -> GroupStats:
    """Stats of one group given its confusion counts (binary mode)."""
    n_k = tp + fp + fn + tn
    if n_k == 0:
        return GroupStats(n_k=0, n_total=n_total)
    pi = Fraction(tp + fn, n_k)
    p_hat = Fraction(tp + fp, n_total)
    ell = Fraction(fp + fn, n_k)
    fp_r = Fraction(fp, n_k)
    fn_r = Fraction(fn, n_k)
    fnr = fn_r / pi if pi > 0 else None
    return GroupStats(n_k=n_k, n_total=n_total, pi_k=pi, p_hat_k=p_hat, ell_hat_k=ell, fp_k=fp_r, fn_k=fn_r, fnr_k=fnr)


def _require_nonempty(stats, spec):
    for k, st in enumerate(stats, start=1):
        if st.absent:
            raise LossUndefinedError(f"loss {spec.kind!r} undefined: group {k} is empty")


def _l1_from_stats(stats, n: int) -> Fraction:
    total = Fraction(0)
    for st in stats:
        if not st.absent:
            total += Fraction(st.n_k, n) * st.ell_hat_k
    return total


def loss_from_stats(spec: LossSpec, stats: list[GroupStats]):
    """Evaluate a catalog loss from per-group statistics alone.

    This is the single evaluation route: instance-level evaluation
    computes stats first, so no catalog loss can depend on row order.
    Raises LossUndefinedError for empty groups where the formula needs a
    group error, and for fnr losses when some base rate is zero.
    """
    if len(stats) != spec.K:
        raise ValueError(f"expected stats for {spec.K} groups, got {len(stats)}")
    n = stats[0].n_total if stats else 0
    kind = spec.kind

    if kind == KIND_L1:
        return _l1_from_stats(stats, n)

    if kind == KIND_BALANCED:
        _require_nonempty(stats, spec)
        return sum((st.ell_hat_k for st in stats), Fraction(0)) / spec.K

    if kind == KIND_ABSGAP:
        _require_nonempty(stats, spec)
        e1, e2 = stats[0].ell_hat_k, stats[1].ell_hat_k
        return (1 - spec.lam) * (e1 + e2) + spec.lam * abs(e1 - e2)

    if kind in (KIND_NP_STRICT, KIND_NP, KIND_FIXED):
        profiles = [st.p_hat_k if not st.absent else Fraction(0) for st in stats]
        if kind == KIND_NP_STRICT:
            return _l1_from_stats(stats, n) if len(set(profiles)) <= 1 else Fraction(1)
        if kind == KIND_FIXED:
            ok = all(p == t for p, t in zip(profiles, spec.target_profile))
            return _l1_from_stats(stats, n) if ok else Fraction(1)
        mean_p = sum(profiles, Fraction(0)) / spec.K
        disparity = sum((abs(p - mean_p) for p in profiles), Fraction(0))
        return spec.lam * _l1_from_stats(stats, n) + (1 - spec.lam) * disparity

    if kind in (KIND_DP_STRICT, KIND_DP):
        _require_nonempty(stats, spec)
        fractions_within = [st.p_hat_k * n / st.n_k for st in stats]
        if kind == KIND_DP_STRICT:
            return _l1_from_stats(stats, n) if len(set(fractions_within)) <= 1 else Fraction(1)
        mean_q = sum(fractions_within, Fraction(0)) / spec.K
        disparity = sum((abs(q - mean_q) for q in fractions_within), Fraction(0))
        return spec.lam * _l1_from_stats(stats, n) + (1 - spec.lam) * disparity

    if kind == KIND_FNR:
        _require_nonempty(stats, spec)
        fnrs = []
        for k, st in enumerate(stats, start=1):
            if st.fnr_k is None:
                raise LossUndefinedError(f"FNR undefined for group {k} (base rate 0)")
            fnrs.append(st.fnr_k)
        mean_fnr = sum(fnrs, Fraction(0)) / spec.K
        disparity = sum((abs(r - mean_fnr) for r in fnrs), Fraction(0))
        return spec.lam * _l1_from_stats(stats, n) + (1 - spec.lam) * disparity

    raise ValueError(f"unhandled kind {kind!r}")


def joint_loss(spec: LossSpec, inst: Instance) -> Fraction:
    """Evaluate the catalog loss on a full instance (exact rational)."""
    return loss_from_stats(spec, group_stats(inst, spec.K))


INCREASED = "increased"
DECREASED = "decreased"
UNCHANGED = "unchanged"


def swap_increases_loss(spec: LossSpec, inst: Instance, i: int, j: int) -> str:
    """Compare the loss before and after exchanging z_i and z_j.

    Precondition (the aligned configuration): g_i == g_j, y_i <= y_j and
    z_i <= z_j.  Returns "increased", "decreased" or "unchanged"; a
    monotonic loss never reports "decreased".  The comparison is exact
    (rational arithmetic), indices are 0-based.
    """
    if not (0 <= i < inst.n and 0 <= j < inst.n):
        raise SwapPreconditionError(f"indices ({i}, {j}) out of range for n={inst.n}")
    if inst.groups[i] != inst.groups[j]:
        raise SwapPreconditionError("swap requires g_i == g_j")
    if not (inst.labels[i] <= inst.labels[j] and inst.classifications[i] <= inst.classifications[j]):
        raise SwapPreconditionError("swap requires y_i <= y_j and z_i <= z_j")
    before = joint_loss(spec, inst)
    after = joint_loss(spec, inst.with_swapped(i, j))
    if after > before:
        return INCREASED
    if after < before:
        return DECREASED
    return UNCHANGED


def _materialize_counts(counts: list[tuple[int, int, int, int]]) -> Instance:
    """Build a concrete instance from per-group (tp, fp, fn, tn) counts."""
    groups: list[int] = []
    labels: list[int] = []
    zs: list[int] = []
    for k, (tp, fp, fn, tn) in enumerate(counts, start=1):
        for y, z, count in ((1, 1, tp), (0, 1, fp), (1, 0, fn), (0, 0, tn)):
            groups.extend([k] * count)
            labels.extend([y] * count)
            zs.extend([z] * count)
    return Instance(tuple(groups), tuple(labels), tuple(zs))


def _compositions(total: int, parts: int):
    """All tuples of `parts` nonnegative ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def find_monotonicity_counterexample(
    spec: LossSpec,
    max_n: int = 8,
    budget: int = 20000,
    seed: int = 0,
):
    """Search for an aligned swap that strictly decreases the loss.

    Returns ``(instance, i, j)`` with 0-based indices, or ``None``.

    For ``max_n <= 16`` the search is exhaustive over every instance in
    ({1..K} x {0,1} x {0,1})^n for n <= max_n.  Completeness uses the fact
    that every representable loss is evaluated from per-group confusion
    counts (see loss_from_stats), so instances are enumerated up to
    within-group row permutation, and the only swap that moves any count
    is the (y=0,z=0)/(y=1,z=1) pair, which turns one true negative and one
    true positive into a false positive and a false negative.  The swap
    comparison itself is the ground-truth definition, applied to a
    materialized instance.  For larger ``max_n``, ``budget`` random
    instances are tried instead.
    """
    K = spec.K
    if max_n <= 16:
        for n in range(1, max_n + 1):
            for sizes in _compositions(n, K):
                per_group_cells = [list(_compositions(size, 4)) for size in sizes]
                for combo in itertools.product(*per_group_cells):
                    witness = _check_counts_for_witness(spec, list(combo))
                    if witness is not None:
                        return witness
        return None

    rng = np.random.default_rng(seed)
    for _ in range(budget):
        n = int(rng.integers(2, max_n + 1))
        counts = []
        remaining = n
        for k in range(K):
            size = remaining if k == K - 1 else int(rng.integers(0, remaining + 1))
            remaining -= size
            cells = rng.multinomial(size, [0.25] * 4)
            counts.append(tuple(int(c) for c in cells))
        witness = _check_counts_for_witness(spec, counts)
        if witness is not None:
            return witness
    return None


def _check_counts_for_witness(spec: LossSpec, counts: list[tuple[int, int, int, int]]):
    stats = [group_stats_from_counts(*c, n_total=sum(sum(c2) for c2 in counts)) for c in counts]
    n_total = sum(st.n_k for st in stats)
    try:
        before = loss_from_stats(spec, stats)
    except LossUndefinedError:
        return None
    for k, (tp, fp, fn, tn) in enumerate(counts):
        if tp < 1 or tn < 1:
            continue
        swapped = list(counts)
        swapped[k] = (tp - 1, fp + 1, fn + 1, tn - 1)
        new_stats = list(stats)
        new_stats[k] = group_stats_from_counts(*swapped[k], n_total=n_total)
        try:
            after = loss_from_stats(spec, new_stats)
        except LossUndefinedError:
            continue
        if after < before:
            inst = _materialize_counts(counts)
            i = _find_row(inst, k + 1, y=0, z=0)
            j = _find_row(inst, k + 1, y=1, z=1)
            assert swap_increases_loss(spec, inst, i, j) == DECREASED
            return inst, i, j
    return None


def _find_row(inst: Instance, group: int, y: int, z: int) -> int:
    for idx in range(inst.n):
        if inst.groups[idx] == group and inst.labels[idx] == y and inst.classifications[idx] == z:
            return idx
    raise AssertionError("row not found in materialized instance")
