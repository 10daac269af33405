import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conetree.errors import MalformedInputError
from conetree.matrix import (
    FIBONACCI,
    SubstitutionMatrix,
    primitivity_exponent,
    sphere_counts,
    substitution_matrix,
    validate_matrix,
)


def test_fibonacci_passes_all_axioms():
    report = validate_matrix([[2, 1], [1, 1]])
    assert report.m0 and report.m1 and report.m2
    assert report.ok


def test_single_label_needs_two_children():
    report = validate_matrix([[1]])
    assert not report.m0
    assert not report.ok
    assert any("M0" in line and "FAIL" in line for line in report.lines())


def test_block_diagonal_is_not_primitive():
    report = validate_matrix([[2, 0], [0, 2]])
    assert report.m0 and report.m1
    assert not report.m2
    assert report.m2_witness == (0, 1)


def test_zero_diagonal_fails_m1():
    report = validate_matrix([[0, 1], [1, 1]])
    assert not report.m1
    assert report.m1_witness == 0


@pytest.mark.parametrize("bad", [[[1, 2, 3]], [[1, -1], [1, 1]], [[1.5, 1], [1, 1]], []])
def test_malformed_matrices(bad):
    with pytest.raises(MalformedInputError):
        validate_matrix(bad)


def test_constructor_rejects_invalid():
    with pytest.raises(MalformedInputError):
        substitution_matrix([[1]])
    M = substitution_matrix([[1]], validate=False)
    assert M.label_count == 1


@pytest.mark.parametrize("rows,expected", [
    ([[2, 1], [1, 1]], 1),
    ([[2, 1], [1, 2]], 1),
    ([[1, 0], [1, 1]], None),
])
def test_primitivity_exponent_small(rows, expected):
    assert primitivity_exponent(rows) == expected


def test_cyclic_three_label_exponent():
    # Every entry of M^2 is positive, M itself has zeros.
    M = np.array([[1, 0, 1], [1, 1, 0], [0, 1, 1]])
    assert (M @ M > 0).all() and not (M > 0).all()
    assert primitivity_exponent(M) == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 3), min_size=n, max_size=n), min_size=n, max_size=n)))
def test_exponent_one_iff_positive(rows):
    M = np.array(rows)
    np.fill_diagonal(M, np.maximum(np.diagonal(M), 1))
    assert (primitivity_exponent(M) == 1) == bool((M > 0).all())


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 4).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 2), min_size=n, max_size=n), min_size=n, max_size=n)))
def test_exponent_is_least_positive_power(rows):
    M = np.array(rows, dtype=np.int64)
    np.fill_diagonal(M, np.maximum(np.diagonal(M), 1))
    n = primitivity_exponent(M)
    powers = [np.linalg.matrix_power(M, k) for k in range(1, M.shape[0] + 1)]
    first = next((k + 1 for k, P in enumerate(powers) if (P > 0).all()), None)
    assert n == first


def test_sphere_counts_fibonacci_root_filled():
    M = substitution_matrix(FIBONACCI)
    assert sphere_counts(M, 1, 0) == (0, 1)
    assert sphere_counts(M, 1, 1) == (1, 1)
    assert sphere_counts(M, 1, 2) == (3, 2)
    assert sphere_counts(M, 1, 3) == (8, 5)
    seq = [c for n in range(5) for c in reversed(sphere_counts(M, 1, n))]
    assert seq[2:] == [1, 1, 2, 3, 5, 8, 13, 21]


def test_sphere_counts_exact_integers():
    M = substitution_matrix([[3]])
    assert sphere_counts(M, 0, 50) == (3 ** 50,)


def test_labels_by_name():
    M = SubstitutionMatrix(np.array(FIBONACCI), ("open", "filled"))
    assert M.label_index("filled") == 1
    assert M.label_index(0) == 0
    with pytest.raises(MalformedInputError):
        M.label_index("missing")


def test_children_and_out_degree_use_columns():
    M = substitution_matrix([[2, 1], [1, 1]])
    # column k lists the children of a label-k vertex
    assert M.children[0].tolist() == [2, 1]
    assert M.out_degree.tolist() == [3, 2]
    assert not M.is_regular()
    assert substitution_matrix([[3]]).is_regular()
