import json

import numpy as np
import pytest

from rankspec.blockmodel import (
    BlockModelSpec,
    Membership,
    RankMoments,
    asymptotic_embedding_covariance,
    block_eigen,
    corrupt_entries,
    finite_embedding_covariance,
    limiting_rank_matrices,
    load_spec,
    population_eigvecs,
    population_expected_rank_entry,
    population_matrices,
    population_rank_covariance,
    population_rank_variance_entry,
    sample_matrix,
    sample_mixed_membership,
    split_block_sizes,
)
from rankspec.distributions import (
    Cauchy,
    Exponential,
    Normal,
    Pareto,
    Uniform,
    contaminated_normal,
)
from rankspec.errors import ArgumentError, ModelError
from rankspec.experiments import contaminated_normal_spec
from rankspec.ranks import pass_to_ranks


def _one_block(n, dist=None):
    return BlockModelSpec(Membership.from_block_sizes([n]), {(1, 1): dist or Normal(0.0, 1.0)})


def test_membership_matrices():
    membership = Membership.from_block_sizes([2, 3])
    assert membership.labels.tolist() == [1, 1, 2, 2, 2]
    assert membership.block_sizes.tolist() == [2, 3]
    np.testing.assert_array_equal(membership.theta.sum(axis=0), [2, 3])
    np.testing.assert_allclose(np.diag(membership.delta), np.sqrt([2, 3]))
    assert [b.tolist() for b in membership.blocks()] == [[0, 1], [2, 3, 4]]
    assert membership == Membership([1, 1, 2, 2, 2])


@pytest.mark.parametrize("labels", [[0, 1], [1.5, 1], [], [1, 3]])
def test_membership_rejects_labels(labels):
    with pytest.raises(ArgumentError):
        Membership(labels, K=2)


def test_split_block_sizes():
    assert split_block_sizes(1000, (0.5, 0.5)) == [500, 500]
    assert split_block_sizes(10, (0.25, 0.75)) == [3, 7]
    assert sum(split_block_sizes(1801, (1 / 3, 1 / 3, 1 / 3))) == 1801
    with pytest.raises(ArgumentError):
        split_block_sizes(10, (0.5, 0.6))


def test_spec_requires_every_pair():
    with pytest.raises(ModelError, match="no distribution"):
        BlockModelSpec(Membership.from_block_sizes([2, 2]), {(1, 1): Normal(0, 1)})
    spec = BlockModelSpec(
        Membership.from_block_sizes([2, 2]),
        {(1, 1): Normal(0, 1), (2, 1): Normal(1, 1), (2, 2): Normal(0, 1)},
    )
    assert spec.dist(1, 2) == spec.dist(2, 1) == Normal(1, 1)


def test_spec_json_round_trip(tmp_path, uniform_exponential_spec):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(uniform_exponential_spec.to_dict()))
    loaded = load_spec(path)
    assert loaded.to_dict() == uniform_exponential_spec.to_dict()
    assert loaded.pair_counts() == {(1, 1): 190, (1, 2): 400, (2, 2): 190}
    with pytest.raises(FileNotFoundError):
        load_spec(tmp_path / "missing.json")


def test_sample_matrix_is_seeded_and_symmetric(uniform_exponential_spec):
    a = sample_matrix(uniform_exponential_spec, 11)
    np.testing.assert_array_equal(a, sample_matrix(uniform_exponential_spec, 11))
    np.testing.assert_array_equal(a, a.T)
    within = a[:20, :20][np.triu_indices(20, k=1)]
    assert within.min() >= 0.0 and within.max() <= 1.0
    hollow = BlockModelSpec(
        uniform_exponential_spec.membership, uniform_exponential_spec.dists, hollow=True
    )
    assert np.all(np.diag(sample_matrix(hollow, 11)) == 0.0)


@pytest.mark.parametrize("n", [2, 3, 5, 15], ids=lambda n: f"N={n * (n - 1) // 2}")
def test_one_block_moments_are_uniform_permutation_moments(n):
    N = n * (n - 1) // 2
    moments = RankMoments(_one_block(n, Exponential(2.0)))
    assert moments.expected(1, 1) == pytest.approx(0.5, abs=1e-12)
    assert moments.variance(1, 1) == pytest.approx(1 / 12 - 1 / (6 * (N + 1)), abs=1e-12)
    if N == 1:
        return
    realizable = [s for s in (True, False) if moments.pattern_count((1, 1), (1, 1), s)]
    assert realizable
    for sharing in realizable:
        assert moments.covariance((1, 1), (1, 1), sharing) == pytest.approx(
            -1 / (12 * (N + 1)), abs=1e-12
        )


def test_one_block_ten_entries():
    moments = RankMoments(_one_block(5))
    assert moments.variance(1, 1) == pytest.approx(3 / 44, abs=1e-12)
    assert moments.covariance((1, 1), (1, 1), True) == pytest.approx(-1 / 132, abs=1e-12)


def test_covariance_rejects_impossible_configuration():
    moments = RankMoments(_one_block(3))
    assert moments.pattern_count((1, 1), (1, 1), True) == 6
    assert moments.pattern_count((1, 1), (1, 1), False) == 0
    with pytest.raises(ArgumentError, match="avoid sharing"):
        moments.covariance((1, 1), (1, 1), sharing=False)


def test_entry_functions_agree_with_engine(uniform_exponential_spec):
    moments = RankMoments(uniform_exponential_spec)
    assert population_expected_rank_entry(uniform_exponential_spec, 2, 1) == moments.expected(1, 2)
    assert population_rank_variance_entry(uniform_exponential_spec, 1, 1) == moments.variance(1, 1)
    assert population_rank_covariance(
        uniform_exponential_spec, (1, 2), (1, 1), True
    ) == moments.covariance((1, 2), (1, 1))


def test_expected_ranks_sum_to_total(uniform_exponential_spec):
    moments = RankMoments(uniform_exponential_spec)
    expected = moments.expected_rank_matrix()
    N = sum(moments.counts.values())
    # the normalized ranks of all N entries always sum to N / 2
    assert expected[np.triu_indices(40, k=1)].sum() == pytest.approx(N / 2)
    assert np.all(np.diag(expected) == 0.0)


def test_expected_rank_matches_monte_carlo(uniform_exponential_spec):
    moments = RankMoments(uniform_exponential_spec)
    draws = np.array(
        [pass_to_ranks(sample_matrix(uniform_exponential_spec, s))[0, 25] for s in range(2000)]
    )
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - moments.expected(1, 2)) < 4 * se
    assert draws.var() == pytest.approx(moments.variance(1, 2), rel=0.15)


def test_population_matrices_mask_missing_moments():
    spec = BlockModelSpec(
        Membership.from_block_sizes([5, 5]),
        {(1, 1): Cauchy(0, 1), (1, 2): Normal(0, 1), (2, 2): Exponential(1.0)},
    )
    matrices = population_matrices(spec)
    assert matrices.mean.mask.tolist() == [[True, False], [False, False]]
    assert matrices.median[0, 0] == 0.0
    assert matrices.mean[1, 1] == pytest.approx(1.0)
    assert abs(matrices.eigenvalues[0]) >= abs(matrices.eigenvalues[1])


def test_rank_matrices_need_two_nodes_per_block():
    spec = BlockModelSpec(
        Membership.from_block_sizes([1, 4]),
        {(1, 1): Normal(0, 1), (1, 2): Normal(1, 1), (2, 2): Normal(0, 1)},
    )
    with pytest.raises(ArgumentError):
        RankMoments(spec).rank_mean_matrix()


def test_block_eigen_matches_dense_eigendecomposition():
    membership = Membership.from_block_sizes([3, 5])
    B = np.array([[2.0, 0.5], [0.5, 1.0]])
    population = block_eigen(membership, B)
    P = membership.theta @ B @ membership.theta.T
    u = population.embedding.vectors
    np.testing.assert_allclose(u @ np.diag(population.embedding.eigenvalues) @ u.T, P, atol=1e-10)
    np.testing.assert_allclose(u.T @ u, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(
        u, membership.theta @ np.diag(1 / np.sqrt([3, 5])) @ population.rotation, atol=1e-10
    )
    assert population.gamma == pytest.approx(np.abs(population.embedding.eigenvalues).min())


def test_block_eigen_rejects_rank_deficient_matrix():
    with pytest.raises(ModelError, match="rank deficient"):
        block_eigen(Membership.from_block_sizes([3, 3]), np.ones((2, 2)))


def test_population_eigvecs_uses_rank_means(uniform_exponential_spec):
    moments = RankMoments(uniform_exponential_spec)
    population = population_eigvecs(uniform_exponential_spec, moments)
    assert population.embedding.d == 2


def test_asymptotic_covariance_gaussian_closed_form():
    mu, nu, sigma = 2.0, 1.0, 1.5
    B = np.array([[mu, nu], [nu, mu]])
    S2 = np.full((2, 2), sigma**2)
    cov = asymptotic_embedding_covariance(B, S2, (0.5, 0.5), k=2)
    frame = np.array([[1.0, 1.0], [1.0, -1.0]])
    separating = 0.5 * (frame @ cov @ frame.T)[1, 1]
    assert separating == pytest.approx(4 * sigma**2 / (mu - nu) ** 2)
    with pytest.raises(ArgumentError):
        asymptotic_embedding_covariance(B, S2, (0.5, 0.5), k=3)


def test_finite_covariance_is_symmetric_positive(uniform_exponential_spec):
    moments = RankMoments(uniform_exponential_spec)
    for k in (1, 2):
        cov = finite_embedding_covariance(moments, k)
        np.testing.assert_allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_limiting_rank_matrices_exponential():
    spec = BlockModelSpec(
        Membership.from_block_sizes([1, 1]),
        {(1, 1): Exponential(4.0), (1, 2): Exponential(2.0), (2, 2): Exponential(1.0)},
    )
    rank_mean, rank_variance = limiting_rank_matrices(spec, (0.5, 0.5), n=100000)
    assert rank_mean[0, 0] == pytest.approx(0.658333, abs=1e-4)
    assert np.all(rank_variance > 0)


def test_corrupt_entries():
    membership = Membership.from_block_sizes([4, 4])
    a = np.ones((8, 8))
    np.testing.assert_array_equal(corrupt_entries(a, membership, 0.0, np.zeros((2, 2)), 1), a)
    corrupted = corrupt_entries(a, membership, 1.0, np.zeros((2, 2)), 1)
    np.testing.assert_array_equal(corrupted, corrupted.T)
    np.testing.assert_array_equal(np.diag(corrupted), np.ones(8))
    assert np.all(corrupted[np.triu_indices(8, k=1)] != 1.0)
    with pytest.raises(ArgumentError):
        corrupt_entries(a, membership, 1.5, np.zeros((2, 2)), 1)


def test_mixed_membership_sample():
    sample = sample_mixed_membership(50, (1.0, 2.0), [[2.0, 1.0], [1.0, 2.0]], 0.1, 4)
    assert sample.matrix.shape == (50, 50)
    np.testing.assert_array_equal(sample.matrix, sample.matrix.T)
    np.testing.assert_allclose(sample.theta.sum(axis=1), 1.0)
    with pytest.raises(ArgumentError):
        sample_mixed_membership(50, (1.0, 2.0), [[2.0, 1.0], [0.0, 2.0]], 0.1, 4)


def _symmetric_spec(sizes, within, between):
    K = len(sizes)
    dists = {
        (k, kp): within if k == kp else between
        for k in range(1, K + 1)
        for kp in range(k, K + 1)
    }
    return BlockModelSpec(Membership.from_block_sizes(sizes), dists)


@pytest.mark.parametrize("K", [2, 3])
def test_smallest_rank_mean_eigenvalue_tracks_pairwise_ordering(K, rng):
    within, between = Normal(1.0, 1.0), Normal(0.0, 1.0)
    spec = _symmetric_spec([2000 // K] * K, within, between)
    smallest = population_matrices(spec).eigenvalues[-1]
    draws = 200000
    ordered = np.mean(between.sample(rng, draws) <= within.sample(rng, draws))
    assert smallest == pytest.approx(ordered - 0.5, abs=0.01)


def _rank_matrices(spec):
    moments = RankMoments(spec)
    return moments.rank_mean_matrix(), moments.rank_variance_matrix()


def test_rank_matrices_invariant_under_log():
    sizes = [5, 8]
    pareto = BlockModelSpec(
        Membership.from_block_sizes(sizes),
        {(1, 1): Pareto(1.0, 1.0), (1, 2): Pareto(1.0, 2.0), (2, 2): Pareto(1.0, 3.0)},
    )
    # log of Pareto(1, alpha) is exponential with mean 1 / alpha
    logged = BlockModelSpec(
        Membership.from_block_sizes(sizes),
        {(1, 1): Exponential(1.0), (1, 2): Exponential(0.5), (2, 2): Exponential(1 / 3)},
    )
    for original, transformed in zip(_rank_matrices(pareto), _rank_matrices(logged)):
        np.testing.assert_allclose(original, transformed, atol=1e-8)


def test_rank_matrices_invariant_under_affine_map():
    sizes = [6, 4]

    def spec(shift, stretch):
        return BlockModelSpec(
            Membership.from_block_sizes(sizes),
            {
                (1, 1): contaminated_normal(2 * stretch + shift, stretch, 0.1, 5.0),
                (1, 2): Normal(shift, stretch),
                (2, 2): Uniform(shift - stretch, shift + 3 * stretch),
            },
        )

    pairs = zip(_rank_matrices(spec(0.0, 1.0)), _rank_matrices(spec(-3.0, 2.5)))
    for original, transformed in pairs:
        np.testing.assert_allclose(original, transformed, atol=1e-8)


def test_population_rows_separate_by_block_sizes():
    sizes = [4, 6, 9]
    means = {(1, 1): 3.0, (1, 2): 0.0, (1, 3): 1.0, (2, 2): 2.0, (2, 3): -1.0, (3, 3): 4.0}
    spec = BlockModelSpec(
        Membership.from_block_sizes(sizes), {pair: Normal(mu, 1.0) for pair, mu in means.items()}
    )
    u = population_eigvecs(spec).embedding.vectors
    labels = spec.membership.labels
    rows = np.array([u[labels == k][0] for k in (1, 2, 3)])
    for k in (1, 2, 3):
        np.testing.assert_allclose(u[labels == k] - rows[k - 1], 0.0, atol=1e-12)
    for k, l in ((1, 2), (1, 3), (2, 3)):
        expected = np.sqrt(1 / sizes[k - 1] + 1 / sizes[l - 1])
        assert np.linalg.norm(rows[k - 1] - rows[l - 1]) == pytest.approx(expected, abs=1e-10)


def test_symmetric_two_block_second_eigenvector():
    spec = _symmetric_spec([10, 10], Normal(2.0, 1.0), Normal(0.0, 1.0))
    second = population_eigvecs(spec).embedding.vectors[:, 1]
    np.testing.assert_allclose(np.abs(second), 1 / np.sqrt(20), atol=1e-12)
    assert np.all(np.sign(second[:10]) == -np.sign(second[10:]))


def test_contaminated_normal_between_block_entries():
    spec = contaminated_normal_spec(n=1000)
    a = sample_matrix(spec, 33)
    between = a[:500, 500:]
    assert np.median(between) == pytest.approx(1.0, abs=0.05)
    standard_error = np.sqrt(spec.dist(1, 2).variance() / between.size)
    assert between.mean() == pytest.approx(1.0, abs=4 * standard_error)
