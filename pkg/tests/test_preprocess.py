import numpy as np
import pytest

from uwbloc.preprocess import (
    CorrectionPolicy,
    EmptySeriesError,
    MAD_SCALE_NORMAL,
    correct_range,
    correct_triple,
    mad_filter,
    mad_keep_mask,
)
from uwbloc.geometry import RangeTriple


def test_mad_filter_drops_the_obvious_outlier():
    # median 100.5, MAD 1.5, cutoff 3 * 1.4826 * 1.5 = 6.6717
    assert mad_filter([98.0, 99.0, 100.0, 101.0, 102.0, 500.0]) == [98.0, 99.0, 100.0, 101.0, 102.0]


def test_mad_zero_keeps_only_median_equal_values():
    # MAD is 0 here, and the rule is a pure inequality
    assert mad_filter([10.0, 10.0, 10.0, 10.0, 25.0]) == [10.0, 10.0, 10.0, 10.0]


def test_mad_filter_preserves_order():
    values = [105.0, 95.0, 100.0, 98.0, 103.0]
    assert mad_filter(values) == values


def test_mad_filter_never_empty():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        values = rng.uniform(1.0, 5000.0, size=n)
        assert len(mad_filter(values)) >= 1


def test_mad_survivors_satisfy_the_rule_exactly():
    rng = np.random.default_rng(17)
    for _ in range(200):
        values = rng.uniform(50.0, 150.0, size=int(rng.integers(3, 60)))
        med = float(np.median(values))
        mad = float(np.median(np.abs(values - med)))
        cutoff = 3.0 * MAD_SCALE_NORMAL * mad
        mask = mad_keep_mask(values)
        expected = np.abs(values - med) <= cutoff
        assert np.array_equal(mask, expected)


def test_mad_validation():
    with pytest.raises(EmptySeriesError):
        mad_filter([])
    with pytest.raises(ValueError):
        mad_filter([1.0, -2.0])
    with pytest.raises(ValueError):
        mad_filter([1.0, float("nan")])
    with pytest.raises(ValueError):
        mad_filter([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        mad_keep_mask([1.0, 2.0], k=0.0)
    with pytest.raises(ValueError):
        mad_keep_mask([1.0, 2.0], scale=-1.0)


def test_correction_policy_validation():
    with pytest.raises(ValueError):
        CorrectionPolicy(ratio=0.0)
    with pytest.raises(ValueError):
        CorrectionPolicy(ratio=1.2)
    with pytest.raises(ValueError):
        CorrectionPolicy(threshold=-5.0)
    assert CorrectionPolicy().ratio == 1.0
    assert CorrectionPolicy().threshold == 1000.0


def test_correct_range_boundary_passes_through():
    policy = CorrectionPolicy(ratio=0.9)
    assert correct_range(1000.0, policy) == 1000.0
    assert correct_range(999.99, policy) == 999.99
    assert correct_range(1000.5, policy) == 1000.5 * 0.9
    assert correct_range(2000.0, policy) == 1800.0


def test_correct_range_unit_ratio_is_identity():
    policy = CorrectionPolicy(ratio=1.0)
    for v in (5.0, 1000.0, 4321.5):
        assert correct_range(v, policy) == v


def test_correct_range_rejects_bad_values():
    policy = CorrectionPolicy()
    with pytest.raises(ValueError):
        correct_range(0.0, policy)
    with pytest.raises(ValueError):
        correct_range(float("inf"), policy)


def test_correct_triple_componentwise():
    policy = CorrectionPolicy(ratio=0.8)
    out = correct_triple(RangeTriple(500.0, 1500.0, 1000.0), policy)
    assert out.as_tuple() == (500.0, 1500.0 * 0.8, 1000.0)
