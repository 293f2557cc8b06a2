import numpy as np
import pytest

from rankspec.blockmodel import BlockModelSpec, Membership, RankMoments, sample_matrix
from rankspec.distributions import Normal
from rankspec.errors import ArgumentError, TieError
from rankspec.ranks import center_ranks, pass_to_ranks


def _symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return a + a.T


def test_three_node_example():
    a = np.array([[0.0, 0.5, -1.2], [0.5, 0.0, 3.0], [-1.2, 3.0, 0.0]])
    expected = np.array([[0.0, 0.5, 0.25], [0.5, 0.0, 0.75], [0.25, 0.75, 0.0]])
    np.testing.assert_array_equal(pass_to_ranks(a), expected)


def test_ranks_are_a_permutation_of_normalized_integers(rng):
    n = 12
    r = pass_to_ranks(_symmetric(rng, n))
    N = n * (n - 1) // 2
    np.testing.assert_array_equal(r, r.T)
    np.testing.assert_array_equal(np.diag(r), np.zeros(n))
    upper = np.sort(r[np.triu_indices(n, k=1)])
    np.testing.assert_allclose(upper, np.arange(1, N + 1) / (N + 1))


def test_invariant_to_monotone_transforms_and_diagonal(rng):
    a = _symmetric(rng, 9)
    b = np.exp(3.0 * a) + 7.0
    np.fill_diagonal(b, 1e300)
    np.testing.assert_array_equal(pass_to_ranks(a), pass_to_ranks(b))


def test_strict_mode_names_tied_pair():
    a = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 2.0], [1.0, 2.0, 0.0]])
    with pytest.raises(TieError) as info:
        pass_to_ranks(a)
    assert info.value.pair == (0, 1)
    assert info.value.value == 1.0
    assert isinstance(info.value, ArgumentError)


def test_midrank_averages_tied_ranks():
    a = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 2.0], [1.0, 2.0, 0.0]])
    r = pass_to_ranks(a, "midrank")
    assert r[0, 1] == r[0, 2] == pytest.approx(1.5 / 4)
    assert r[1, 2] == pytest.approx(3 / 4)


@pytest.mark.parametrize(
    "a",
    [
        np.zeros((1, 1)),
        np.array([[0.0, 1.0], [2.0, 0.0]]),
        np.array([[0.0, np.nan], [np.nan, 0.0]]),
        np.zeros((2, 3)),
    ],
)
def test_invalid_matrices_rejected(a):
    with pytest.raises(ArgumentError):
        pass_to_ranks(a)


def test_unknown_tie_mode():
    with pytest.raises(ArgumentError, match="tie_mode"):
        pass_to_ranks(np.eye(2), "dense")


def test_center_ranks_checks_shape():
    assert center_ranks(np.ones((2, 2)), np.ones((2, 2))).sum() == 0.0
    with pytest.raises(ArgumentError):
        center_ranks(np.ones((2, 2)), np.ones((3, 3)))


def test_two_nodes_rank_one_half():
    r = pass_to_ranks(np.array([[5.0, -2.5], [-2.5, 1.0]]))
    np.testing.assert_array_equal(r, [[0.0, 0.5], [0.5, 0.0]])


def test_midrank_matches_strict_without_ties(rng):
    a = _symmetric(rng, 15)
    np.testing.assert_array_equal(pass_to_ranks(a, "midrank"), pass_to_ranks(a, "strict"))


def test_matches_sort_then_invert(rng):
    a = _symmetric(rng, 5)
    rows, cols = np.triu_indices(5, k=1)
    order = np.argsort(a[rows, cols])
    expected = np.zeros((5, 5))
    for rank, entry in enumerate(order, start=1):
        expected[rows[entry], cols[entry]] = expected[cols[entry], rows[entry]] = rank / 11
    np.testing.assert_allclose(pass_to_ranks(a), expected, atol=1e-15)


def test_center_ranks_one_block():
    spec = BlockModelSpec(Membership.from_block_sizes([4]), {(1, 1): Normal(0.0, 1.0)})
    expected = RankMoments(spec).expected_rank_matrix()
    r = pass_to_ranks(sample_matrix(spec, 8))
    centered = center_ranks(r, expected)
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(centered[off], r[off] - 0.5, atol=1e-12)
    np.testing.assert_array_equal(np.diag(centered), np.zeros(4))
    np.testing.assert_array_equal(center_ranks(r, r), np.zeros((4, 4)))


def test_center_ranks_by_hand():
    r = pass_to_ranks(np.array([[0.0, 0.5, -1.2], [0.5, 0.0, 3.0], [-1.2, 3.0, 0.0]]))
    expected = np.full((3, 3), 0.5)
    np.fill_diagonal(expected, 0.0)
    centered = center_ranks(r, expected)
    assert centered[0, 1] == 0.0
    assert centered[0, 2] == -0.25
    assert centered[1, 2] == 0.25
