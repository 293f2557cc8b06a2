"""Dense symmetric eigendecomposition, Procrustes alignment and subspace distances."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ArgumentError
from .utils import TOLERANCES


@dataclass(frozen=True)
class Embedding:
    """Orthonormal eigenvector matrix with its signed eigenvalues.

    Attributes:
        vectors: n x d array with orthonormal columns
        eigenvalues: d signed eigenvalues, ordered by decreasing magnitude
    """

    vectors: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        eigenvalues = np.asarray(self.eigenvalues, dtype=float).ravel()
        if vectors.ndim != 2 or vectors.shape[1] != eigenvalues.size:
            raise ArgumentError(
                f"Embedding needs n x d vectors and d eigenvalues, got"
                f" {vectors.shape} and {eigenvalues.size}"
            )
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def scaled(self) -> np.ndarray:
        """Rows of n^{1/2} U, the scale used for plotting and reports."""
        return np.sqrt(self.n) * self.vectors

    def truncate(self, d: int) -> "Embedding":
        if not 1 <= d <= self.d:
            raise ArgumentError(f"Cannot truncate a {self.d}-dimensional embedding to {d}")
        return Embedding(self.vectors[:, :d], self.eigenvalues[:d])


def check_symmetric(m, tol: float = 0.0, name: str = "matrix") -> np.ndarray:
    """Return `m` as a float array after checking it is square and symmetric.

    Args:
        m (array-like): candidate matrix
        tol (float): largest accepted |m_ij - m_ji|; 0 demands exact symmetry
        name (str): used in error messages

    Raises:
        ArgumentError: not square, empty, or asymmetric beyond `tol`
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ArgumentError(f"{name} must be a non-empty square matrix, got {m.shape}")
    asym = np.abs(m - m.T)
    if asym.max() > tol:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise ArgumentError(
            f"{name} is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {asym[i, j]:.3g}"
        )
    return m


def _magnitude_order(eigenvalues: np.ndarray) -> np.ndarray:
    magnitudes = np.abs(eigenvalues)
    order = np.lexsort((-eigenvalues, -magnitudes))
    tol = TOLERANCES.eigenvalue_tie * max(magnitudes.max(), np.finfo(float).tiny)
    grouped, start = [], 0
    while start < order.size:
        stop = start + 1
        while (
            stop < order.size
            and magnitudes[order[start]] - magnitudes[order[stop]] <= tol
        ):
            stop += 1
        group = order[start:stop]
        grouped.extend(group[np.argsort(-eigenvalues[group], kind="stable")])
        start = stop
    return np.asarray(grouped, dtype=int)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    magnitudes = np.abs(vectors)
    near_max = magnitudes >= magnitudes.max(axis=0) - TOLERANCES.orthonormality
    pivot = np.argmax(near_max, axis=0)  # first index attaining the max
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigs_topk(m, d: int) -> Embedding:
    """Top-d eigenpairs of a symmetric matrix by eigenvalue magnitude.

    Eigenvalues of equal magnitude are ordered positive first. Each eigenvector is
    flipped so its largest-magnitude entry is positive (lowest index on ties).

    Args:
        m (array-like): symmetric n x n matrix
        d (int): number of eigenpairs, 1 <= d <= n

    Returns:
        Embedding

    Raises:
        ArgumentError: d out of range or m not symmetric

    Example:
        > eigs_topk(np.array([[0.0, 1.0], [1.0, 0.0]]), 2).eigenvalues
        array([ 1., -1.])
    """
    m = check_symmetric(m)
    n = m.shape[0]
    if isinstance(d, bool) or int(d) != d or not 1 <= d <= n:
        raise ArgumentError(f"d must be an integer in [1, {n}], got {d}")
    eigenvalues, vectors = scipy.linalg.eigh(m)
    order = _magnitude_order(eigenvalues)[: int(d)]
    return Embedding(_fix_signs(vectors[:, order]), eigenvalues[order])


def _check_pair(u_hat, u) -> tuple:
    u_hat = np.asarray(u_hat, dtype=float)
    u = np.asarray(u, dtype=float)
    if u_hat.ndim == 1:
        u_hat = u_hat[:, None]
    if u.ndim == 1:
        u = u[:, None]
    if u_hat.shape != u.shape:
        raise ArgumentError(
            f"Embedding shapes differ: {u_hat.shape} versus {u.shape}"
        )
    return u_hat, u


def procrustes_align(u_hat, u) -> np.ndarray:
    """Orthogonal W minimizing ||u_hat - u W||_F.

    Args:
        u_hat (array-like): n x d orthonormal columns
        u (array-like): n x d orthonormal columns

    Returns:
        d x d orthogonal matrix W
    """
    u_hat, u = _check_pair(u_hat, u)
    w, _ = scipy.linalg.orthogonal_procrustes(u, u_hat)
    return w


def projection_distance(u_hat, u) -> float:
    """Relative Frobenius distance between the projectors onto two subspaces.

    ||U_hat U_hat^T - U U^T||_F / sqrt(d), evaluated without forming n x n matrices.
    """
    u_hat, u = _check_pair(u_hat, u)
    d = u.shape[1]
    squared = 2.0 * d - 2.0 * np.sum((u.T @ u_hat) ** 2)
    return float(np.sqrt(max(squared, 0.0) / d))


def _orthonormalize(x: np.ndarray, name: str) -> np.ndarray:
    gram = x.T @ x
    if np.linalg.norm(gram - np.eye(x.shape[1])) <= TOLERANCES.orthonormality:
        return x
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise ArgumentError(f"{name} is rank deficient")
    q, _ = np.linalg.qr(x)
    return q


def trace_correlation(u_hat, u) -> float:
    """Matrix trace correlation sqrt(trace(P_Uhat P_U) / d), a value in [0, 1].

    Inputs without orthonormal columns are orthonormalized first, which leaves the
    projectors unchanged.

    Raises:
        ArgumentError: shape mismatch or rank-deficient input
    """
    u_hat, u = _check_pair(u_hat, u)
    u_hat = _orthonormalize(u_hat, "u_hat")
    u = _orthonormalize(u, "u")
    d = u.shape[1]
    return float(min(1.0, np.linalg.norm(u.T @ u_hat) / np.sqrt(d)))
