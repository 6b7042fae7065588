import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcal.errors import ValidationError
from kcal.metrics import (
    ADAPTIVE_20,
    STATIC_20,
    BinningKind,
    BinningScheme,
    accuracy,
    brier_multi,
    brier_top,
    cece,
    cece_threshold,
    ece,
    nll,
    reaggregate_ece,
    reliability_data,
    validate_prob_matrix,
)

# ------------------------------------------------------------- oracles


def naive_bins(values, scheme):
    if scheme.kind is BinningKind.ADAPTIVE:
        order = sorted(range(len(values)), key=lambda i: (values[i], i))
        n = len(values)
        base, extra = divmod(n, scheme.n_bins)
        groups, start = [], 0
        for j in range(scheme.n_bins):
            size = base + (1 if j < extra else 0)
            groups.append(order[start : start + size])
            start += size
        return groups
    groups = [[] for _ in range(scheme.n_bins)]
    for i, v in enumerate(values):
        j = min(int(v * scheme.n_bins), scheme.n_bins - 1)
        groups[j].append(i)
    return groups


def naive_ece(probs, labels, scheme):
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    total = 0.0
    for group in naive_bins(conf, scheme):
        if not group:
            continue
        c = np.mean([conf[i] for i in group])
        a = np.mean([correct[i] for i in group])
        total += len(group) / len(conf) * abs(c - a)
    return total


def naive_cece(probs, labels, scheme):
    k = probs.shape[1]
    thr = max(0.01, 1.0 / k)
    per_class = []
    for c in range(k):
        kept = [i for i in range(len(labels)) if probs[i, c] >= thr]
        if not kept:
            continue
        vals = [probs[i, c] for i in kept]
        outs = [1.0 if labels[i] == c else 0.0 for i in kept]
        total = 0.0
        for group in naive_bins(vals, scheme):
            if not group:
                continue
            mp = np.mean([vals[i] for i in group])
            fr = np.mean([outs[i] for i in group])
            total += len(group) / len(kept) * abs(mp - fr)
        per_class.append(total)
    return float(np.mean(per_class))


def naive_brier_top(probs, labels):
    total = 0.0
    for i in range(len(labels)):
        k_star = int(np.argmax(probs[i]))
        total += (probs[i, k_star] - (1.0 if labels[i] == k_star else 0.0)) ** 2
    return total / len(labels)


def naive_brier_multi(probs, labels):
    n, k = probs.shape
    total = 0.0
    for i in range(n):
        for c in range(k):
            total += (probs[i, c] - (1.0 if labels[i] == c else 0.0)) ** 2
    return total / (n * k)


def naive_nll(probs, labels):
    return float(
        -np.mean([np.log(max(probs[i, labels[i]], 1e-12)) for i in range(len(labels))])
    )


def random_fixture(seed, n=200, k=3):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.full(k, 0.7), size=n)
    labels = rng.integers(0, k, size=n)
    return probs, labels


# --------------------------------------------------------------- tests


def test_accuracy_trivial_cases():
    probs = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    labels = np.array([0, 1, 0, 1])
    assert accuracy(probs, labels) == 1.0
    assert accuracy(probs, 1 - labels) == 0.0
    assert accuracy(probs, np.array([0, 1, 1, 0])) == 0.5


def test_accuracy_argmax_ties_lowest_index():
    probs = np.array([[0.5, 0.5]])
    assert accuracy(probs, np.array([0])) == 1.0
    assert accuracy(probs, np.array([1])) == 0.0


def test_accuracy_empty_is_error():
    with pytest.raises(ValidationError):
        accuracy(np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_ece_single_bin_closed_form():
    probs = np.tile([1.0, 0.0], (10, 1))
    labels = np.array([0] * 8 + [1] * 2)
    scheme = BinningScheme(BinningKind.ADAPTIVE, 1)
    assert ece(probs, labels, scheme) == pytest.approx(0.2)


def test_ece_perfectly_calibrated_fixture_is_zero():
    # confidence 0.8 in every row; exactly 80% of rows correct per bin
    probs = np.tile([0.8, 0.2], (20, 1))
    labels = np.array(([0] * 4 + [1]) * 4)
    assert ece(probs, labels, BinningScheme(BinningKind.ADAPTIVE, 4)) == pytest.approx(
        0.0, abs=1e-15
    )
    assert ece(probs, labels, BinningScheme(BinningKind.STATIC, 10)) == pytest.approx(
        0.0, abs=1e-15
    )


def test_ece_matches_naive_reference():
    for seed in range(10):
        probs, labels = random_fixture(seed)
        for scheme in (ADAPTIVE_20, STATIC_20, BinningScheme(BinningKind.STATIC, 7)):
            assert ece(probs, labels, scheme) == pytest.approx(
                naive_ece(probs, labels, scheme), abs=1e-12
            )


def test_cece_threshold_rule():
    assert cece_threshold(2) == 0.5
    assert cece_threshold(4) == 0.25
    assert cece_threshold(100) == 0.01
    assert cece_threshold(250) == 0.01


def test_cece_perfect_fixture_is_zero():
    probs = np.tile([0.75, 0.25], (40, 1))
    labels = np.array(([0] * 3 + [1]) * 10)
    scheme = BinningScheme(BinningKind.ADAPTIVE, 5)
    assert cece(probs, labels, scheme) == pytest.approx(0.0, abs=1e-15)


def test_cece_matches_naive_reference():
    for seed in range(10):
        probs, labels = random_fixture(seed + 100, n=500, k=4)
        for scheme in (ADAPTIVE_20, STATIC_20):
            assert cece(probs, labels, scheme) == pytest.approx(
                naive_cece(probs, labels, scheme), abs=1e-12
            )


def test_cece_every_class_filtered_is_error():
    # K=2 with both entries below the 0.5 threshold is impossible for a
    # simplex row, so drive the filter with an unnormalized matrix
    probs = np.full((5, 3), 0.05)
    labels = np.zeros(5, dtype=int)
    with pytest.raises(ValidationError):
        cece(probs, labels)


def test_brier_top_closed_forms():
    one_hot = np.eye(3)[np.array([0, 1, 2])]
    assert brier_top(one_hot, np.array([0, 1, 2])) == 0.0
    half = np.tile([0.5, 0.5], (10, 1))
    labels = np.array([0] * 5 + [1] * 5)
    assert brier_top(half, labels) == pytest.approx(0.25)


def test_brier_multi_closed_forms():
    one_hot = np.eye(4)[np.array([0, 3])]
    assert brier_multi(one_hot, np.array([0, 3])) == 0.0
    k = 5
    uniform = np.full((7, k), 1.0 / k)
    labels = np.arange(7) % k
    assert brier_multi(uniform, labels) == pytest.approx((k - 1) / k**2)


def test_brier_matches_naive_reference():
    for seed in range(10):
        probs, labels = random_fixture(seed + 200)
        assert brier_top(probs, labels) == pytest.approx(
            naive_brier_top(probs, labels), abs=1e-12
        )
        assert brier_multi(probs, labels) == pytest.approx(
            naive_brier_multi(probs, labels), abs=1e-12
        )


def test_brier_bounds():
    wrong = np.array([[1.0, 0.0]] * 3)
    labels = np.ones(3, dtype=int)
    assert brier_top(wrong, labels) == 1.0
    assert brier_multi(wrong, labels) == pytest.approx(2.0 / 2)


def test_nll_values():
    one_hot = np.eye(2)[np.array([0, 1])]
    assert nll(one_hot, np.array([0, 1])) == 0.0
    uniform = np.full((6, 4), 0.25)
    assert nll(uniform, np.zeros(6, dtype=int)) == pytest.approx(np.log(4))
    zero_row = np.array([[0.0, 1.0]])
    assert nll(zero_row, np.array([0])) == pytest.approx(-np.log(1e-12))
    assert nll(zero_row, np.array([0])) == pytest.approx(27.631, abs=1e-3)


def test_nll_matches_naive_reference():
    for seed in range(5):
        probs, labels = random_fixture(seed + 300)
        assert nll(probs, labels) == pytest.approx(naive_nll(probs, labels), abs=1e-12)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_metrics_permutation_invariant(seed):
    probs, labels = random_fixture(seed, n=80)
    perm = np.random.default_rng(seed + 1).permutation(80)
    for fn in (accuracy, brier_top, brier_multi, nll):
        assert fn(probs, labels) == pytest.approx(fn(probs[perm], labels[perm]), abs=1e-12)
    for scheme in (ADAPTIVE_20, STATIC_20):
        assert ece(probs, labels, scheme) == pytest.approx(
            ece(probs[perm], labels[perm], scheme), abs=1e-12
        )
        assert cece(probs, labels, scheme) == pytest.approx(
            cece(probs[perm], labels[perm], scheme), abs=1e-12
        )


def test_reliability_equal_mass_bin_sizes():
    probs, labels = random_fixture(0, n=400)
    data = reliability_data(probs, labels, "confidence", ADAPTIVE_20, min_count=0)
    assert len(data.bins) == 20
    assert all(b.count == 20 for b in data.bins)


def test_reliability_min_count_filter_can_empty():
    probs, labels = random_fixture(1, n=50)
    data = reliability_data(probs, labels, "confidence", ADAPTIVE_20, min_count=51)
    assert data.bins == []


def test_reliability_sorted_and_calibrated_fixture_within_binomial_noise():
    rng = np.random.default_rng(5)
    n = 4000
    p0 = rng.uniform(0.05, 0.95, size=n)
    probs = np.column_stack([p0, 1 - p0])
    labels = (rng.uniform(size=n) > p0).astype(int)  # y=0 w.p. p0
    data = reliability_data(probs, labels, "class", ADAPTIVE_20, min_count=15, class_k=0)
    means = [b.mean_predicted for b in data.bins]
    assert means == sorted(means)
    for b in data.bins:
        sigma = np.sqrt(b.mean_predicted * (1 - b.mean_predicted) / b.count)
        assert abs(b.frequency - b.mean_predicted) <= 3 * sigma + 1e-9


def test_reliability_class_axis_validation():
    probs, labels = random_fixture(2)
    with pytest.raises(ValidationError):
        reliability_data(probs, labels, "class", ADAPTIVE_20, class_k=7)
    with pytest.raises(ValidationError):
        reliability_data(probs, labels, "sideways", ADAPTIVE_20)


def test_ece_reaggregates_from_reliability_gaps():
    for seed in range(8):
        probs, labels = random_fixture(seed + 400, n=233)
        for scheme in (ADAPTIVE_20, STATIC_20):
            data = reliability_data(probs, labels, "confidence", scheme, min_count=0)
            assert reaggregate_ece(data) == pytest.approx(
                ece(probs, labels, scheme), abs=1e-12
            )


def test_calibrated_fixture_error_decays_with_n():
    # labels drawn from the predicted distribution: ECE/CECE shrink with n
    def draw(n, seed):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet([2.0, 2.0, 2.0], size=n)
        u = rng.uniform(size=n)
        labels = (u[:, None] > probs.cumsum(axis=1)).sum(axis=1)
        return probs, np.minimum(labels, 2)

    sizes = [200, 2000, 20000]
    eces = []
    ceces = []
    for n in sizes:
        vals_e, vals_c = [], []
        for seed in range(3):
            probs, labels = draw(n, seed)
            vals_e.append(ece(probs, labels))
            vals_c.append(cece(probs, labels))
        eces.append(np.mean(vals_e))
        ceces.append(np.mean(vals_c))
    assert eces[2] < eces[0]
    assert ceces[2] < ceces[0]
    # binomial rate check: 100x the samples shrinks the gap roughly 10x,
    # allow generous slack
    assert eces[2] < eces[0] / 3
    assert ceces[2] < ceces[0] / 3


def test_validate_prob_matrix():
    good = np.array([[0.3, 0.7], [0.5, 0.5]])
    validate_prob_matrix(good)
    with pytest.raises(ValidationError):
        validate_prob_matrix(np.array([[0.4, 0.7]]))
    with pytest.raises(ValidationError):
        validate_prob_matrix(np.array([[-0.1, 1.1]]))
