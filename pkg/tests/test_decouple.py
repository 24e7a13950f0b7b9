from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from fairsplit.core import ContractViolationError, Dataset, FairsplitError, MODE_BINARY
from fairsplit.decouple import (
    InfeasibleProfileError,
    build_candidate_table,
    decouple,
    general_decouple,
    product_search,
)
from fairsplit.learners import (
    ConstantClassifier,
    FiniteClass,
    LinearModel,
    ThresholdClassifier,
    WeightedSample,
    exhaustive_learn,
)
from fairsplit.losses import Instance, LossSpec, joint_loss, parse_loss_spec

from conftest import random_instance, random_truth_table_class, row_id_dataset


def exhaustive_learner(finite):
    def learner(X, y):
        return exhaustive_learn(finite, WeightedSample(X, y, np.ones(len(y))))

    return learner


def x1_threshold_learner(X, y):
    """Exhaustive learner over strict thresholds on x1, both orientations."""
    cands = []
    members = []
    ident = 0
    for sign in (1.0, -1.0):
        scores = sign * X[:, 0]
        distinct = np.unique(scores)
        cuts = [np.inf, -np.inf]
        cuts.extend((distinct[i] + distinct[i + 1]) / 2 for i in range(len(distinct) - 1))
        for t in cuts:
            model = ThresholdClassifier(float(t), LinearModel([sign, 0.0], 0.0))
            members.append((ident, model))
            ident += 1
    finite = FiniteClass(tuple(members))
    return exhaustive_learn(finite, WeightedSample(X, y, np.ones(len(y))))


def brute_force_min(ds, finite, spec):
    """Oracle: enumerate the full product space from raw predictions."""
    best = None
    clfs = [clf for _, clf in finite]
    for combo in product(clfs, repeat=ds.k_groups):
        z = np.empty(ds.n)
        for k in range(1, ds.k_groups + 1):
            rows = ds.group_rows(k)
            z[rows] = combo[k - 1].predict(ds.features[rows])
        inst = Instance(
            tuple(int(g) for g in ds.groups),
            tuple(float(v) for v in ds.labels),
            tuple(float(v) for v in z),
        )
        value = joint_loss(spec, inst)
        if best is None or value < best:
            best = value
    return best


# --- decouple ----------------------------------------------------------------


def test_decouple_parity_reaches_zero():
    from fairsplit.analysis import make_parity_fixture

    ds = make_parity_fixture(2, target="separator").dataset
    dc = decouple(x1_threshold_learner, parse_loss_spec("l1"), ds)
    assert dc.achieved_loss_exact == 0


def test_decouple_per_group_dominance_over_coupled():
    # with l1 and an exhaustive learner, each selected per-group classifier
    # is at least as good on its group as the best single coupled classifier,
    # and strictly better somewhere when the coupling gap is positive
    from fairsplit.analysis import make_parity_fixture

    ds = make_parity_fixture(2, target="separator").dataset
    from fairsplit.learners import enumerate_linear_separators_2d

    finite = enumerate_linear_separators_2d(ds.features)
    spec = parse_loss_spec("l1")
    dc = decouple(exhaustive_learner(finite), spec, ds)

    def group_error(model, k):
        rows = ds.group_rows(k)
        z = model.predict(ds.features[rows])
        return float(np.mean(np.abs(ds.labels[rows] - z)))

    def overall_error(model):
        z = model.predict(ds.features)
        return float(np.mean(np.abs(ds.labels - z)))

    coupled_best = min((clf for _, clf in finite), key=overall_error)
    gaps = []
    for k in (1, 2):
        selected = group_error(dc.per_group[k - 1], k)
        coupled = group_error(coupled_best, k)
        assert selected <= coupled + 1e-12
        gaps.append(coupled - selected)
    assert max(gaps) > 0  # the parity fixture has a positive coupling gap


def test_decouple_single_group_picks_best():
    ds = row_id_dataset([1, 1, 1], [1, 1, 0])
    finite = FiniteClass(((0, ConstantClassifier(0.0)), (1, ConstantClassifier(1.0))))
    dc = decouple(exhaustive_learner(finite), LossSpec("l1", K=1), ds)
    assert dc.achieved_loss_exact == Fraction(1, 3)


def test_decouple_matches_brute_force_on_random_instances(rng):
    specs = [
        LossSpec("balanced", K=2),
        LossSpec("l1", K=2),
        LossSpec("np-strict", K=2),
        LossSpec("np", lam=Fraction(1, 4), K=2),
        LossSpec("dp-strict", K=2),
        LossSpec("dp", lam=Fraction(3, 4), K=2),
        LossSpec("absgap", lam=Fraction(1, 2), K=2),
    ]
    for _ in range(40):
        inst, K = random_instance(rng, n_max=10, k_max=2)
        if K != 2:
            continue
        ds = row_id_dataset(inst.groups, inst.labels)
        finite = random_truth_table_class(rng, ds.n, size=4)
        for spec in specs:
            dc = decouple(exhaustive_learner(finite), spec, ds)
            assert dc.achieved_loss_exact == brute_force_min(ds, finite, spec)


def test_decouple_duplicate_positives_contract_error():
    from fairsplit.core import CandidateClassifier

    ds = row_id_dataset([1, 1, 2, 2], [0, 1, 0, 1])

    def bad_learner(X, y):
        return [
            CandidateClassifier(model=ConstantClassifier(0.0), positives=None),
            CandidateClassifier(model=ConstantClassifier(0.0), positives=None),
        ]

    with pytest.raises(ContractViolationError):
        decouple(bad_learner, LossSpec("l1", K=2), ds)


def test_decouple_empty_group_error():
    ds = Dataset(np.zeros((2, 2)), np.array([0.0, 1.0]), np.array([1, 1]), mode=MODE_BINARY, k_groups=2)
    with pytest.raises(FairsplitError):
        decouple(x1_threshold_learner, LossSpec("l1", K=2), ds)


def test_decouple_group_cap():
    groups = [1, 2, 3, 4, 5]
    ds = row_id_dataset(groups, [0, 1, 0, 1, 0])
    finite = FiniteClass(((0, ConstantClassifier(0.0)),))
    with pytest.raises(FairsplitError, match="cap"):
        decouple(exhaustive_learner(finite), LossSpec("balanced", K=5), ds)


def test_decouple_check_monotonic_rejects_nonmonotone():
    ds = row_id_dataset([1, 2], [0, 1])
    finite = FiniteClass(((0, ConstantClassifier(0.0)),))
    with pytest.raises(FairsplitError, match="not monotonic"):
        decouple(
            exhaustive_learner(finite),
            parse_loss_spec("absgap:lambda=0.75"),
            ds,
            check_monotonic=True,
        )


# --- general_decouple --------------------------------------------------------


def test_general_decouple_theta_zero_reduces_to_decouple(rng):
    from fairsplit.transfer import transfer_fit

    for _ in range(10):
        inst, K = random_instance(rng, n_max=10, k_max=2)
        if K != 2:
            continue
        ds = row_id_dataset(inst.groups, inst.labels)
        spec = LossSpec("balanced", K=2)

        def plain(X, y):
            return transfer_fit(X, y, np.empty((0, X.shape[1])), np.empty(0), 0.0)

        def transfer0(in_X, in_y, out_X, out_y):
            return transfer_fit(in_X, in_y, out_X, out_y, 0.0)

        a = decouple(plain, spec, ds)
        b = general_decouple(transfer0, spec, ds)
        assert a.achieved_loss_exact == b.achieved_loss_exact
        assert [m.threshold for m in a.per_group] == [m.threshold for m in b.per_group]


def test_general_decouple_pooled_candidates_selected_on_in_group_stats():
    # two groups, identical distribution; theta=1 pools the data but the
    # selection still evaluates in-group error/profile
    from fairsplit.transfer import transfer_fit

    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 1))
    y = (X[:, 0] > 0).astype(float)
    groups = np.array([1, 2] * 15)
    ds = Dataset(X, y, groups, mode=MODE_BINARY, k_groups=2)

    def transfer1(in_X, in_y, out_X, out_y):
        return transfer_fit(in_X, in_y, out_X, out_y, 1.0)

    dc = general_decouple(transfer1, LossSpec("balanced", K=2), ds)
    assert dc.achieved_loss <= 0.2
    assert dc.theta_by_group == (1.0, 1.0)


def test_general_decouple_regression_candidate_per_theta():
    # a transfer learner may return one fit per down-weight; the search
    # then picks each group's best training error among them
    from fairsplit.transfer import transfer_fit
    from fairsplit.core import MODE_REGRESSION

    rng = np.random.default_rng(21)
    X = rng.uniform(-1, 1, size=(24, 2))
    y = 0.5 + 0.2 * X[:, 0] - 0.1 * X[:, 1]  # stays inside [0.2, 0.8]
    ds = Dataset(X, y, np.array([1, 2] * 12), mode=MODE_REGRESSION, k_groups=2)

    def grid_transfer(in_X, in_y, out_X, out_y):
        return [
            transfer_fit(in_X, in_y, out_X, out_y, t, mode=MODE_REGRESSION)[0]
            for t in (0.0, 0.5, 1.0)
        ]

    dc = general_decouple(grid_transfer, LossSpec("balanced", K=2), ds)
    assert dc.theta_by_group is not None
    assert all(t in (0.0, 0.5, 1.0) for t in dc.theta_by_group)
    assert dc.achieved_loss < 1e-10  # noiseless linear target is exactly fit


def test_general_decouple_regression_mode_restricts_losses():
    from fairsplit.transfer import transfer_fit
    from fairsplit.core import MODE_REGRESSION

    X = np.linspace(0, 1, 12).reshape(-1, 1)
    y = np.clip(X[:, 0], 0, 1)
    ds = Dataset(X, y, np.array([1, 2] * 6), mode=MODE_REGRESSION, k_groups=2)

    def treg(in_X, in_y, out_X, out_y):
        return transfer_fit(in_X, in_y, out_X, out_y, 0.5, mode=MODE_REGRESSION)

    dc = general_decouple(treg, LossSpec("balanced", K=2), ds)
    assert dc.achieved_loss < 1e-6
    with pytest.raises(ValueError, match="regression"):
        general_decouple(treg, LossSpec("np-strict", K=2), ds)


# --- product_search ----------------------------------------------------------


def table_from_instance(rng, inst, class_size=4):
    ds = row_id_dataset(inst.groups, inst.labels)
    finite = random_truth_table_class(rng, ds.n, size=class_size)
    cands = [
        exhaustive_learn(finite, WeightedSample(ds.features[ds.group_rows(k)], ds.labels[ds.group_rows(k)], np.ones(ds.group_rows(k).size)))
        for k in range(1, ds.k_groups + 1)
    ]
    return ds, finite, build_candidate_table(ds, cands)


def test_product_search_matches_naive_recomputation(rng):
    spec = LossSpec("np", lam=Fraction(1, 2), K=2)
    for _ in range(20):
        inst, K = random_instance(rng, n_max=10, k_max=2)
        if K != 2:
            continue
        ds, finite, table = table_from_instance(rng, inst)
        result = product_search(table, spec)
        # naive: recompute the loss of every combination from raw data
        best = None
        for combo in product(*[range(len(g)) for g in table.per_group]):
            z = np.empty(ds.n)
            for k in range(2):
                rows = ds.group_rows(k + 1)
                z[rows] = table.per_group[k][combo[k]].candidate.model.predict(ds.features[rows])
            inst_z = Instance(inst.groups, inst.labels, tuple(float(v) for v in z))
            value = joint_loss(spec, inst_z)
            if best is None or value < best:
                best = value
        assert result.loss == best
        assert result.loss_evaluations == table.combinations()


def test_product_search_fixed_profile_short_circuit():
    inst = Instance((1, 1, 2, 2), (0, 1, 1, 0), (0, 1, 1, 0))
    rng = np.random.default_rng(17)
    ds, finite, table = table_from_instance(rng, inst, class_size=5)
    target = (table.per_group[0][1].p_hat, table.per_group[1][0].p_hat)
    spec = LossSpec("fixed", target_profile=target)
    result = product_search(table, spec)
    assert result.indices == (1, 0)
    assert result.loss_evaluations == 1  # direct lookup, no search


def test_product_search_fixed_profile_unachievable_names_group():
    inst = Instance((1, 1, 2, 2), (0, 1, 1, 0), (0, 1, 1, 0))
    rng = np.random.default_rng(18)
    ds, finite, table = table_from_instance(rng, inst, class_size=3)
    spec = LossSpec("fixed", target_profile=(Fraction(7, 16), Fraction(0)))
    with pytest.raises(InfeasibleProfileError, match="group 1"):
        product_search(table, spec)


def test_product_search_strict_infeasible_flagged():
    # candidate tables where no combination has equal profiles
    ds = row_id_dataset([1, 1, 2, 2, 2, 2], [0, 1, 1, 0, 1, 0])
    cands = [
        [_constant_candidate(1.0)],  # group 1: always 1 -> p1 = 2/6
        [_constant_candidate(0.0)],  # group 2: always 0 -> p2 = 0
    ]
    table = build_candidate_table(ds, cands)
    result = product_search(table, LossSpec("np-strict", K=2))
    assert result.loss == 1
    assert result.parity_infeasible
    # secondary key: the (unique) combination minimizes l1 among all combos
    assert result.indices == (0, 0)


def _constant_candidate(value):
    from fairsplit.core import CandidateClassifier

    return CandidateClassifier(model=ConstantClassifier(value), positives=None)


def test_product_search_invariant_under_candidate_order(rng):
    spec = LossSpec("dp", lam=Fraction(1, 4), K=2)
    inst, K = random_instance(rng, n_max=10, k_max=2)
    while K != 2:
        inst, K = random_instance(rng, n_max=10, k_max=2)
    ds = row_id_dataset(inst.groups, inst.labels)
    finite = random_truth_table_class(rng, ds.n, size=5)

    def learn(order_seed):
        out = []
        for k in range(1, 3):
            rows = ds.group_rows(k)
            cands = exhaustive_learn(
                finite, WeightedSample(ds.features[rows], ds.labels[rows], np.ones(rows.size))
            )
            np.random.default_rng(order_seed).shuffle(cands)
            out.append(cands)
        return out

    r1 = product_search(build_candidate_table(ds, learn(1)), spec)
    r2 = product_search(build_candidate_table(ds, learn(99)), spec)
    assert r1.loss == r2.loss
    assert r1.indices == r2.indices  # canonical (positives-sorted) order


def _poison_table(table):
    """Replace every candidate's model with one that raises on predict."""
    import dataclasses

    class Poison:
        def predict(self, X):
            raise AssertionError("raw data access during search")

    new_groups = []
    for entries in table.per_group:
        new_entries = []
        for e in entries:
            cand = dataclasses.replace(e.candidate, model=Poison())
            new_entries.append(dataclasses.replace(e, candidate=cand))
        new_groups.append(tuple(new_entries))
    return dataclasses.replace(table, per_group=tuple(new_groups))


def test_product_search_never_touches_raw_data(rng):
    inst, K = random_instance(rng, n_max=8, k_max=2)
    while K != 2:
        inst, K = random_instance(rng, n_max=8, k_max=2)
    ds = row_id_dataset(inst.groups, inst.labels)
    finite = random_truth_table_class(rng, ds.n, size=3)
    cands = [
        exhaustive_learn(finite, WeightedSample(ds.features[ds.group_rows(k)], ds.labels[ds.group_rows(k)], np.ones(ds.group_rows(k).size)))
        for k in (1, 2)
    ]
    table = build_candidate_table(ds, cands)
    result = product_search(_poison_table(table), LossSpec("np", lam=Fraction(1, 2), K=2))
    assert result.loss_evaluations == table.combinations()
