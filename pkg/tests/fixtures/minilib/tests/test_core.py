"""Direct tests for the core transforms."""

import pytest

from minilib.core import add_scaled, normalize_range, rolling_max, window_sum


def test_add_scaled_basic():
    assert add_scaled([1, 2, 3], 2.0) == [2.0, 4.0, 6.0]


def test_add_scaled_empty():
    assert add_scaled([], 5.0, offset=1.0) == []


def test_add_scaled_negative():
    assert add_scaled([1.0, -1.0], -1.0, offset=0.5) == [-0.5, 1.5]


def test_rolling_max_basic():
    assert rolling_max([3, 1, 4, 1, 5]) == [3, 3, 4, 4, 5]


def test_rolling_max_single():
    assert rolling_max([7]) == [7]


def test_rolling_max_negative():
    assert rolling_max([-5, -9, -2]) == [-5, -5, -2]


def test_window_sum_direct():
    assert window_sum([1, 2, 3, 4], 2) == [3, 5, 7]
    with pytest.raises(ValueError):
        window_sum([1, 2], 3)


def test_normalize_basic():
    assert normalize_range([0.0, 5.0, 10.0]) == [0.0, 0.5, 1.0]


def test_normalize_bounds():
    result = normalize_range([2.0, 8.0, 4.0])
    assert min(result) == 0.0 and max(result) == 1.0


def test_normalize_sorted():
    result = normalize_range([9.0, 1.0, 5.0])
    assert sorted(result) == [0.0, 0.5, 1.0]


def test_normalize_zz_constant():
    # the withheld edge case: constant input must not divide by zero
    assert normalize_range([4.0, 4.0, 4.0]) == [0.0, 0.0, 0.0]
