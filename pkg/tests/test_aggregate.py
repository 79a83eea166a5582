"""Form-level aggregation measures against brute-force oracles."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphodex.aggregate import average_softmax, classify_form, majority_vote
from graphodex.errors import DataError, UsageError
from graphodex.model import ArchConfig, build_network
from graphodex.patching import Patch

GRID = [i / 10 for i in range(1, 10)]  # 0.1 .. 0.9


def oracle_decision(values):
    """Exact-arithmetic restatement: count p > 0.5, tie -> exact mean rule."""
    females = sum(1 for v in values if v > 0.5)
    males = len(values) - females
    if females != males:
        return "female" if females > males else "male"
    exact_mean = Fraction(sum(round(v * 10) for v in values), 10 * len(values))
    return "female" if exact_mean > Fraction(1, 2) else "male"


def oracle_mean_decision(values):
    exact_mean = Fraction(sum(round(v * 10) for v in values), 10 * len(values))
    return "female" if exact_mean > Fraction(1, 2) else "male"


def test_majority_direct_count():
    fp = majority_vote([0.9, 0.8, 0.2], "f")
    assert fp.positive_votes == 2
    assert fp.decision == "female"


def test_majority_unanimous_low():
    fp = majority_vote([0.4, 0.4, 0.4], "f")
    assert fp.positive_votes == 0
    assert fp.decision == "male"


def test_majority_tie_falls_back_to_mean():
    # one vote each, mean exactly 0.5 -> strict 'exceeds' gives male
    assert majority_vote([0.9, 0.1], "f").decision == "male"
    # tie but mean above half -> female
    assert majority_vote([0.95, 0.25], "f").decision == "female"


def test_boundary_half_counts_as_male():
    assert majority_vote([0.5, 0.5, 0.5], "f").positive_votes == 0
    assert average_softmax([0.5, 0.5], "f").decision == "male"


def test_average_softmax_examples():
    fp = average_softmax([0.9, 0.8, 0.1], "f")
    assert fp.mean_p_female == pytest.approx(0.6)
    assert fp.decision == "female"
    assert average_softmax([0.7], "f").decision == "female"


def test_empty_list_rejected():
    with pytest.raises(DataError):
        majority_vote([], "f")
    with pytest.raises(DataError):
        average_softmax([], "f")


def test_exhaustive_small_instance_equivalence():
    """Every probability multiset of length <= 9 on the 0.1 grid.

    Both measures are permutation-invariant (tested below), so multisets
    cover all ordered lists.  The oracle works in exact fractions; the
    correctly-rounded mean makes the implementation agree everywhere,
    including vote ties whose exact mean sits on 1/2.
    """
    checked = 0
    for length in range(1, 10):
        for values in itertools.combinations_with_replacement(GRID, length):
            assert majority_vote(values).decision == oracle_decision(values)
            fp = average_softmax(values)
            assert fp.mean_p_female == pytest.approx(sum(values) / length, abs=1e-12)
            assert fp.decision == oracle_mean_decision(values)
            checked += 1
    assert checked == 48619  # sum of C(8+L, L) for L in 1..9


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.randoms())
@settings(max_examples=200, deadline=None)
def test_permutation_invariance(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert average_softmax(values).decision == average_softmax(shuffled).decision
    assert majority_vote(values).decision == majority_vote(shuffled).decision


@given(st.floats(0.0, 1.0), st.integers(1, 30))
@settings(max_examples=100, deadline=None)
def test_unanimous_predictions_agree(p, n):
    values = [p] * n
    assert majority_vote(values).decision == average_softmax(values).decision


# -- classify_form ------------------------------------------------------------


ARCH = ArchConfig(
    conv_filters=(4, 4, 4, 4), dense_units=8, dropout_rates=(0.1, 0.1, 0.1),
    input_hw=(16, 16),
)


def _patches(n, form_id="f1", seed=0):
    rng = np.random.default_rng(seed)
    return [
        Patch(rng.random((16, 16)).astype(np.float32), form_id, (0, 0))
        for _ in range(n)
    ]


def test_classify_form_votes_bounded():
    net = build_network(ARCH, seed=0)
    fp = classify_form(net, _patches(20), "majority_vote")
    assert 0 <= fp.positive_votes <= 20
    assert fp.form_id == "f1"


def test_classify_form_both_methods_recorded_independently():
    net = build_network(ARCH, seed=0)
    patches = _patches(15)
    mv = classify_form(net, patches, "majority_vote")
    asx = classify_form(net, patches, "average_softmax")
    assert mv.method == "majority_vote"
    assert asx.method == "average_softmax"
    assert mv.mean_p_female == pytest.approx(asx.mean_p_female)


def test_classify_form_deterministic():
    net = build_network(ARCH, seed=1)
    patches = _patches(10, seed=3)
    a = classify_form(net, patches, "average_softmax")
    b = classify_form(net, patches, "average_softmax")
    assert a == b


def test_classify_form_mixed_ids_rejected():
    net = build_network(ARCH, seed=0)
    patches = _patches(3) + _patches(2, form_id="f2")
    with pytest.raises(UsageError):
        classify_form(net, patches, "majority_vote")


def test_classify_form_unknown_method():
    net = build_network(ARCH, seed=0)
    with pytest.raises(UsageError):
        classify_form(net, _patches(3), "median")
