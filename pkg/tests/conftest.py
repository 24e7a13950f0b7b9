import numpy as np
import pytest

from fairsplit.core import Dataset, MODE_BINARY
from fairsplit.learners import FiniteClass, TruthTableClassifier
from fairsplit.losses import Instance


def random_instance(rng, n_max=12, k_max=3, require_all_groups=True):
    """Random binary (g, y, z) instance; every group nonempty by default."""
    K = int(rng.integers(1, k_max + 1))
    n = int(rng.integers(max(K, 2), n_max + 1))
    while True:
        groups = rng.integers(1, K + 1, size=n)
        if not require_all_groups or len(np.unique(groups)) == K:
            break
    labels = rng.integers(0, 2, size=n)
    z = rng.integers(0, 2, size=n)
    return Instance(tuple(groups.tolist()), tuple(labels.tolist()), tuple(z.tolist())), K


def row_id_dataset(groups, labels):
    """Dataset whose single feature is the row index, so truth-table
    classifiers can address individual rows."""
    groups = np.asarray(groups, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.float64)
    n = len(groups)
    features = np.arange(n, dtype=np.float64).reshape(-1, 1)
    return Dataset(features, labels, groups, mode=MODE_BINARY, k_groups=int(groups.max()))


def random_truth_table_class(rng, n, size):
    """FiniteClass of random row-indexed truth tables over n rows."""
    members = []
    seen = set()
    ident = 0
    while len(members) < size:
        z = tuple(int(v) for v in rng.integers(0, 2, size=n))
        if z in seen:
            continue
        seen.add(z)
        table = tuple(((float(i),), float(z[i])) for i in range(n))
        members.append((ident, TruthTableClassifier(table)))
        ident += 1
    return FiniteClass(tuple(members))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
