import numpy as np
import pytest
from scipy.stats import ortho_group

from rankspec.errors import ArgumentError
from rankspec.linalg import (
    Embedding,
    check_symmetric,
    eigs_topk,
    procrustes_align,
    projection_distance,
    trace_correlation,
)


def _orthonormal(rng, n, d):
    q, _ = np.linalg.qr(rng.normal(size=(n, d)))
    return q


def test_eigs_topk_orders_by_magnitude_and_fixes_signs():
    result = eigs_topk(np.array([[0.0, 1.0], [1.0, 0.0]]), 2)
    np.testing.assert_allclose(result.eigenvalues, [1.0, -1.0])
    np.testing.assert_allclose(result.vectors[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    np.testing.assert_allclose(result.vectors[:, 1], [1 / np.sqrt(2), -1 / np.sqrt(2)])


def test_eigs_topk_negative_eigenvalue_first():
    m = np.diag([1.0, -5.0, 2.0])
    result = eigs_topk(m, 2)
    np.testing.assert_allclose(result.eigenvalues, [-5.0, 2.0])
    np.testing.assert_allclose(np.abs(result.vectors), [[0, 0], [1, 0], [0, 1]])


def test_eigs_topk_reconstructs(rng):
    a = rng.normal(size=(8, 8))
    a = a + a.T
    full = eigs_topk(a, 8)
    np.testing.assert_allclose(
        full.vectors @ np.diag(full.eigenvalues) @ full.vectors.T, a, atol=1e-10
    )
    np.testing.assert_allclose(full.vectors.T @ full.vectors, np.eye(8), atol=1e-10)


@pytest.mark.parametrize("d", [0, 4, 1.5, True])
def test_eigs_topk_rejects_bad_dimension(d):
    with pytest.raises(ArgumentError):
        eigs_topk(np.eye(3), d)


def test_check_symmetric():
    with pytest.raises(ArgumentError, match="not symmetric"):
        check_symmetric([[0.0, 1.0], [1.1, 0.0]])
    assert check_symmetric([[0.0, 1.0], [1.0 + 1e-12, 0.0]], tol=1e-9).dtype == float


def test_procrustes_recovers_rotation(rng):
    u = _orthonormal(rng, 30, 3)
    w = ortho_group.rvs(3, random_state=7)
    np.testing.assert_allclose(procrustes_align(u @ w, u), w, atol=1e-10)


def test_projection_distance_and_trace_correlation(rng):
    u = _orthonormal(rng, 20, 2)
    w = ortho_group.rvs(2, random_state=3)
    assert projection_distance(u @ w, u) == pytest.approx(0.0, abs=1e-7)
    assert trace_correlation(u @ w, u) == pytest.approx(1.0)
    e = np.eye(3)
    assert projection_distance(e[:, [0]], e[:, [1]]) == pytest.approx(np.sqrt(2.0))
    assert trace_correlation(e[:, [0]], e[:, [1]]) == pytest.approx(0.0)
    # scaling columns leaves the subspace unchanged
    assert trace_correlation(3.0 * u, u) == pytest.approx(1.0)


def test_shape_mismatch():
    with pytest.raises(ArgumentError):
        projection_distance(np.eye(3)[:, :2], np.eye(3)[:, :1])


def test_embedding_helpers():
    embedding = Embedding(np.eye(4)[:, :2], [3.0, -1.0])
    assert (embedding.n, embedding.d) == (4, 2)
    np.testing.assert_allclose(embedding.scaled(), 2.0 * np.eye(4)[:, :2])
    assert embedding.truncate(1).eigenvalues.tolist() == [3.0]
    with pytest.raises(ArgumentError):
        embedding.truncate(3)
    with pytest.raises(ArgumentError):
        Embedding(np.eye(3), [1.0])


def test_projection_distance_matches_trace_correlation(rng):
    for _ in range(1000):
        n = int(rng.integers(3, 12))
        d = int(rng.integers(1, n))
        u, u_hat = _orthonormal(rng, n, d), _orthonormal(rng, n, d)
        r = trace_correlation(u_hat, u)
        assert projection_distance(u_hat, u) == pytest.approx(
            np.sqrt(2.0) * np.sqrt(1.0 - r**2), abs=1e-10
        )


def test_procrustes_beats_random_rotations(rng):
    u, u_hat = _orthonormal(rng, 15, 3), _orthonormal(rng, 15, 3)
    best = np.linalg.norm(u_hat - u @ procrustes_align(u_hat, u))
    for w in ortho_group.rvs(3, size=1000, random_state=11):
        assert best <= np.linalg.norm(u_hat - u @ w) + 1e-12


def test_eigs_topk_residuals_on_large_matrix(rng):
    m = rng.normal(size=(500, 500))
    m = m + m.T
    top = eigs_topk(m, 10)
    scale = np.abs(top.eigenvalues).max()
    residuals = m @ top.vectors - top.vectors * top.eigenvalues
    assert np.linalg.norm(residuals, axis=0).max() <= 1e-8 * scale
    np.testing.assert_allclose(top.vectors.T @ top.vectors, np.eye(10), atol=1e-10)


def _planar_maps(angles):
    c, s = np.cos(angles), np.sin(angles)
    rotations = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    reflections = rotations @ np.diag([1.0, -1.0])
    return np.concatenate([rotations, reflections])


def test_procrustes_matches_grid_search(rng):
    u, u_hat = _orthonormal(rng, 25, 2), _orthonormal(rng, 25, 2)
    grid = _planar_maps(np.linspace(0.0, 2 * np.pi, 20001))
    errors = np.linalg.norm(u_hat[None] - u[None] @ grid, axis=(1, 2))
    best = np.linalg.norm(u_hat - u @ procrustes_align(u_hat, u))
    assert best <= errors.min() + 1e-12
    # grid step is small enough that the search lands next to the optimum
    assert errors.min() == pytest.approx(best, abs=1e-6)


def test_trace_correlation_of_planes_sharing_one_axis():
    e = np.eye(3)
    assert trace_correlation(e[:, [0, 1]], e[:, [0, 2]]) == pytest.approx(np.sqrt(0.5))
    assert projection_distance(e[:, [0, 1]], e[:, [0, 2]]) == pytest.approx(1.0)
