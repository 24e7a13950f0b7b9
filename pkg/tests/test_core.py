import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairsplit.core import (
    Dataset,
    DecoupledClassifier,
    GroupIndexError,
    MODE_BINARY,
    MODE_REGRESSION,
    exact_fraction,
    load_dataset_csv,
    predict_decoupled,
    predict_decoupled_many,
    save_dataset_csv,
    validate_dataset,
)
from fairsplit.learners import ConstantClassifier, LinearModel


def make_binary_ds(labels=(0, 1, 1, 0), groups=(1, 2, 1, 2)):
    X = np.arange(len(labels) * 2, dtype=float).reshape(len(labels), 2)
    return Dataset(X, np.array(labels, float), np.array(groups), mode=MODE_BINARY, k_groups=2)


def test_validate_well_formed():
    assert validate_dataset(make_binary_ds()) == []


def test_validate_bad_label_names_row():
    ds = make_binary_ds(labels=(0, 1, 1, 0.5))
    violations = validate_dataset(ds)
    assert any("row 3" in v and "{0,1}" in v for v in violations)


def test_validate_group_out_of_range():
    ds = make_binary_ds(groups=(1, 2, 3, 2))
    violations = validate_dataset(ds)
    assert any("row 2" in v and "out of range" in v for v in violations)


def test_validate_regression_range():
    X = np.zeros((2, 1))
    ds = Dataset(X, np.array([0.5, 1.2]), np.array([1, 1]), mode=MODE_REGRESSION, k_groups=1)
    assert any("[0,1]" in v for v in validate_dataset(ds))


def test_validate_reports_empty_group():
    ds = make_binary_ds(groups=(1, 1, 1, 1))
    assert any("group 2" in v for v in validate_dataset(ds))


def test_arrays_immutable():
    ds = make_binary_ds()
    with pytest.raises(ValueError):
        ds.features[0, 0] = 9.0


def test_predict_decoupled_constant_dispatch():
    dc = DecoupledClassifier(
        per_group=(ConstantClassifier(0.0), ConstantClassifier(1.0)),
        achieved_loss=0.0,
        loss_spec_id="l1",
    )
    assert predict_decoupled(dc, [3.14, -1.0], 2).value == 1.0
    assert predict_decoupled(dc, [3.14, -1.0], 1).value == 0.0


def test_predict_decoupled_parity_pair():
    # group 1 outputs x1, group 2 outputs 1 - x1
    dc = DecoupledClassifier(
        per_group=(LinearModel([1.0, 0.0], 0.0), LinearModel([-1.0, 0.0], 1.0)),
        achieved_loss=0.0,
        loss_spec_id="l1",
    )
    assert predict_decoupled(dc, [1.0, 1.0], 2).value == 0.0
    assert predict_decoupled(dc, [1.0, 0.0], 1).value == 1.0


def test_predict_decoupled_same_model_equals_single():
    model = LinearModel([0.5, 0.25], 0.1)
    dc = DecoupledClassifier(per_group=(model, model), achieved_loss=0.0, loss_spec_id="l1")
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    for g in (1, 2):
        out = np.array([predict_decoupled(dc, x, g).value for x in X.clip(0, 1)])
        expect = model.predict(X.clip(0, 1))
        assert np.array_equal(out, expect)


def test_predict_decoupled_group_out_of_range():
    dc = DecoupledClassifier(per_group=(ConstantClassifier(0.0),), achieved_loss=0.0, loss_spec_id="l1")
    with pytest.raises(GroupIndexError):
        predict_decoupled(dc, [0.0], 2)
    with pytest.raises(GroupIndexError):
        predict_decoupled_many(dc, np.zeros((2, 1)), [1, 2])


def test_exact_fraction_decimal_intent():
    from fractions import Fraction

    assert exact_fraction(0.1) == Fraction(1, 10)
    assert exact_fraction("1/3") == Fraction(1, 3)
    assert exact_fraction(2) == 2


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_csv_round_trip_bit_exact(tmp_path_factory, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    n = data.draw(st.integers(1, 12))
    d = data.draw(st.integers(1, 4))
    X = rng.normal(size=(n, d)) * data.draw(st.floats(1e-6, 1e6))
    labels = rng.uniform(0, 1, size=n)
    groups = rng.integers(1, 3, size=n)
    ds = Dataset(X, labels, groups, mode=MODE_REGRESSION, k_groups=2)
    path = tmp_path_factory.mktemp("csv") / "ds.csv"
    save_dataset_csv(ds, path)
    back = load_dataset_csv(path, mode=MODE_REGRESSION, k_groups=2)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.groups, ds.groups)
