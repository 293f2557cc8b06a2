"""Spectral clustering pipeline and clustering error measures."""

import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist
from scipy.stats import norm
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import adjusted_rand_score

from .blockmodel import Membership
from .errors import ArgumentError
from .linalg import Embedding, check_symmetric, eigs_topk, procrustes_align
from .ranks import pass_to_ranks
from .utils import TOLERANCES, make_rng, spawn_seeds

logger = logging.getLogger(__name__)

MAX_LLOYD_ITERATIONS = 200
EXHAUSTIVE_PERMUTATION_LIMIT = 8
DIMENSION_RULES = ("lemma", "practical", "profile")


@dataclass
class ClusterResult:
    """Output of approximate k-means on embedding rows.

    Attributes:
        membership_hat: estimated membership (labels 1..K)
        centroids: K x d centroid matrix, row k the mean of the rows labelled k + 1
        cost: sum of squared distances of rows to their centroids
        epsilon_k: approximation factor the restarts target
        selected_d: embedding dimension used
        eigenvalues: eigenvalues of the embedding, when clustering a matrix
        embedding: the embedding itself, when clustering a matrix
    """

    membership_hat: Membership
    centroids: np.ndarray
    cost: float
    epsilon_k: float
    selected_d: int
    eigenvalues: Optional[np.ndarray] = None
    embedding: Optional[Embedding] = None

    @property
    def labels(self) -> np.ndarray:
        return self.membership_hat.labels

    def to_dict(self) -> dict:
        return {
            "labels": self.labels.tolist(),
            "d": int(self.selected_d),
            "eigenvalues": [] if self.eigenvalues is None else self.eigenvalues.tolist(),
            "cost": float(self.cost),
        }


def _assign(points, centers) -> tuple:
    distances = cdist(points, centers, "sqeuclidean")
    labels = np.argmin(distances, axis=1)
    K = centers.shape[0]
    counts = np.bincount(labels, minlength=K)
    reseeded = 0
    for empty in np.flatnonzero(counts == 0):
        # move the farthest point of a multi-member cluster into the empty one
        own = distances[np.arange(labels.size), labels]
        own = np.where(counts[labels] > 1, own, -np.inf)
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] = 1
        distances[far, :] = np.inf
        distances[far, empty] = 0.0
        reseeded += 1
    return labels, reseeded


def _centroids(points, labels, K) -> np.ndarray:
    sums = np.zeros((K, points.shape[1]))
    np.add.at(sums, labels, points)
    return sums / np.bincount(labels, minlength=K)[:, None]


def _cost(points, labels, centers) -> float:
    return float(np.sum((points - centers[labels]) ** 2))


def _lloyd(points, K, seed) -> tuple:
    rng = make_rng(seed)
    centers, _ = kmeans_plusplus(
        points, n_clusters=K, random_state=int(rng.integers(np.iinfo(np.int32).max))
    )
    previous = np.inf
    reseeds = 0
    for _ in range(MAX_LLOYD_ITERATIONS):
        labels, reseeded = _assign(points, centers)
        reseeds += reseeded
        centers = _centroids(points, labels, K)
        cost = _cost(points, labels, centers)
        if cost == 0.0 or (
            np.isfinite(previous)
            and previous - cost <= TOLERANCES.kmeans_convergence * previous
        ):
            break
        previous = cost
    if reseeds > 1:
        logger.warning(f"Reseeded {reseeds} empty clusters during Lloyd iterations")
    elif reseeds:
        logger.debug("Reseeded one empty cluster during Lloyd iterations")
    return labels, centers, cost


def approx_kmeans(
    points, K: int, epsilon_k: float = 0.05, seed=None, restarts: int = 10
) -> ClusterResult:
    """Approximate k-means: best of several seeded Lloyd runs.

    Each restart seeds centroids by distance-weighted (k-means++) sampling and runs
    Lloyd iterations until the relative cost change drops below 1e-10 or 200
    iterations pass. A cluster left empty is reseeded at the farthest point.

    Args:
        points (array-like): n x d rows to cluster
        K (int): number of clusters, 1 <= K <= n
        epsilon_k (float): targeted approximation factor, recorded in the result
        seed: seed for the restarts
        restarts (int): number of independent restarts

    Returns:
        ClusterResult with the lowest cost found

    Raises:
        ArgumentError: K out of range, restarts < 1 or epsilon_k <= 0
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if isinstance(K, bool) or int(K) != K or not 1 <= K <= n:
        raise ArgumentError(f"K must be an integer in [1, {n}], got {K}")
    if int(restarts) != restarts or restarts < 1:
        raise ArgumentError(f"restarts must be a positive integer, got {restarts}")
    if not epsilon_k > 0:
        raise ArgumentError(f"epsilon_k must be positive, got {epsilon_k}")
    K = int(K)

    best = None
    for child in spawn_seeds(seed, int(restarts)):
        labels, centers, cost = _lloyd(points, K, child)
        if best is None or cost < best[2]:
            best = (labels, centers, cost)
    labels, centers, cost = best
    return ClusterResult(
        membership_hat=Membership(labels + 1, K=K),
        centroids=centers,
        cost=cost,
        epsilon_k=float(epsilon_k),
        selected_d=points.shape[1],
    )


def select_dimension(
    eigenvalues, n: int, rule: str = "practical", eps_p: float = 0.1, max_d: int = 50
) -> int:
    """Number of leading eigenvalues to keep.

    Args:
        eigenvalues (array-like): signed eigenvalues ordered by decreasing magnitude
        n (int): matrix size
        rule (str): "lemma" counts |lambda| > 4 n^(3/4 + eps_p); "practical" counts
            |lambda| > 1.001 n^(1/2); "profile" maximizes a two-group Gaussian
            profile likelihood over the top `max_d` magnitudes after setting the
            largest aside, and counts the largest as kept
        eps_p (float): exponent slack of the lemma rule, 0 < eps_p < 1/4
        max_d (int): number of magnitudes the profile rule considers

    Raises:
        ArgumentError: empty spectrum, unknown rule, or eps_p out of range
    """
    magnitudes = np.abs(np.asarray(eigenvalues, dtype=float).ravel())
    if magnitudes.size == 0:
        raise ArgumentError("cannot select a dimension from an empty spectrum")
    if rule not in DIMENSION_RULES:
        raise ArgumentError(f"rule must be one of {DIMENSION_RULES}, got {rule!r}")
    if rule == "lemma":
        if not 0 < eps_p < 0.25:
            raise ArgumentError(f"eps_p must lie in (0, 1/4), got {eps_p}")
        return int(np.count_nonzero(magnitudes > 4.0 * n ** (0.75 + eps_p)))
    if rule == "practical":
        return int(np.count_nonzero(magnitudes > 1.001 * np.sqrt(n)))
    return _profile_likelihood_dimension(magnitudes, max_d)


def _profile_likelihood_dimension(magnitudes, max_d: int) -> int:
    if max_d < 1:
        raise ArgumentError(f"max_d must be positive, got {max_d}")
    top = np.sort(magnitudes)[::-1][:max_d]
    if top[0] == 0.0:
        return 0
    rest = top[1:]
    if rest.size < 2:
        return top.size
    best_q, best_ll = 1, -np.inf
    for q in range(1, rest.size):
        groups = (rest[:q], rest[q:])
        ss = sum(np.sum((g - g.mean()) ** 2) for g in groups)
        scale = np.sqrt(max(ss / rest.size, np.finfo(float).tiny))
        ll = sum(np.sum(norm.logpdf(g, loc=g.mean(), scale=scale)) for g in groups)
        if ll > best_ll:
            best_q, best_ll = q, ll
    return best_q + 1


def embed(
    a,
    d="auto",
    ptr: bool = True,
    tie_mode: str = "strict",
    rule: str = "practical",
    eps_p: float = 0.1,
    max_d: int = 50,
) -> Embedding:
    """Truncated eigendecomposition of A, or of its pass-to-ranks matrix.

    With d="auto" the dimension comes from `select_dimension`; an automatic choice
    of 0 is raised to 1.
    """
    a = check_symmetric(a)
    m = pass_to_ranks(a, tie_mode) if ptr else a
    return _embedding(m, d, 1, rule, eps_p, max_d)


def _embedding(m, d, fallback: int, rule, eps_p, max_d) -> Embedding:
    if d != "auto":
        return eigs_topk(m, d)
    full = eigs_topk(m, m.shape[0])
    selected = select_dimension(full.eigenvalues, m.shape[0], rule, eps_p, max_d)
    if selected == 0:
        selected = min(fallback, m.shape[0])
        logger.warning(f"Rule '{rule}' kept no eigenvalues; using d={selected}")
    logger.info(f"Selected embedding dimension d={selected} by the {rule} rule")
    return full.truncate(selected)


def spectral_cluster(
    a,
    K: int,
    d="auto",
    ptr: bool = True,
    epsilon_k: float = 0.05,
    seed=None,
    restarts: int = 10,
    tie_mode: str = "strict",
    rule: str = "practical",
    eps_p: float = 0.1,
    max_d: int = 50,
) -> ClusterResult:
    """Pass-to-ranks (optional), spectral embedding, then approximate k-means.

    Args:
        a (array-like): symmetric data matrix
        K (int): number of clusters
        d (int or "auto"): embedding dimension, or "auto" to select it by `rule`;
            an automatic choice of 0 falls back to K
        ptr (bool): rank-transform the matrix first
        epsilon_k (float): targeted k-means approximation factor
        seed: seed for k-means restarts
        restarts (int): k-means restarts
        tie_mode (str): PTR tie handling, "strict" or "midrank"

    Returns:
        ClusterResult carrying the embedding, its eigenvalues and the selected d
    """
    a = check_symmetric(a)
    m = pass_to_ranks(a, tie_mode) if ptr else a
    embedding = _embedding(m, d, K, rule, eps_p, max_d)
    result = approx_kmeans(embedding.vectors, K, epsilon_k, seed, restarts)
    result.eigenvalues = embedding.eigenvalues
    result.embedding = embedding
    return result


@dataclass
class LossReport:
    """Overall and worst-case relative misclustering errors.

    Attributes:
        L: (1/n) ||Theta_hat Pi - Theta||_0 at the best permutation
        L_tilde: max_k (1/n_k) ||(Theta_hat Pi - Theta)_{G_k}||_0 at its best permutation
        best_permutation: true label (1-based) assigned to each estimated label
        misclustered_per_block: misclustered nodes per true block under best_permutation
    """

    L: float
    L_tilde: float
    best_permutation: tuple
    misclustered_per_block: np.ndarray


def _as_labels(membership) -> tuple:
    if isinstance(membership, Membership):
        return membership.labels, membership.K
    raw = np.asarray(membership).ravel()
    if raw.size == 0:
        raise ArgumentError("cannot score an empty labeling")
    if np.issubdtype(raw.dtype, np.integer) and raw.min() >= 1:
        return raw.astype(int), int(raw.max())
    # any other labeling (0-based, strings, floats) is numbered 1..K in sorted order
    values, inverse = np.unique(raw, return_inverse=True)
    return inverse.ravel() + 1, values.size


def _bottleneck_assignment(cost) -> float:
    for threshold in np.unique(cost):
        graph = csr_matrix(cost <= threshold)
        if np.all(maximum_bipartite_matching(graph, perm_type="column") >= 0):
            return float(threshold)
    return float(cost.max())


def relative_errors(theta_hat, theta) -> LossReport:
    """Misclustering errors minimized over relabelings of the estimate.

    Each misclustered node contributes 2 to the 0-norm of Theta_hat Pi - Theta.
    Permutations are searched exhaustively for K <= 8; beyond, L uses a linear
    assignment and L_tilde a bottleneck assignment, both exact.

    Args:
        theta_hat (Membership or labels): estimate
        theta (Membership or labels): truth

    Raises:
        ArgumentError: different numbers of nodes
    """
    labels_hat, K_hat = _as_labels(theta_hat)
    labels, K_true = _as_labels(theta)
    if labels_hat.size != labels.size:
        raise ArgumentError(
            f"memberships cover {labels_hat.size} and {labels.size} nodes"
        )
    n = labels.size
    K = max(K_hat, K_true)
    confusion = np.zeros((K, K))
    np.add.at(confusion, (labels_hat - 1, labels - 1), 1.0)
    sizes = confusion.sum(axis=0)
    safe_sizes = np.where(sizes > 0, sizes, 1.0)
    # block_error[a, b]: error of true block b when estimated label a maps to it
    block_error = 2.0 * (sizes[None, :] - confusion) / safe_sizes[None, :]

    if K <= EXHAUSTIVE_PERMUTATION_LIMIT:
        perms = np.array(list(itertools.permutations(range(K))))
        agreement = confusion[np.arange(K), perms].sum(axis=1)
        best = perms[int(np.argmax(agreement))]
        L = 2.0 * (n - agreement.max()) / n
        L_tilde = float(block_error[np.arange(K), perms].max(axis=1).min())
    else:
        rows, best = linear_sum_assignment(-confusion)
        L = 2.0 * (n - confusion[rows, best].sum()) / n
        L_tilde = _bottleneck_assignment(block_error)

    misclustered = sizes.copy()
    misclustered[best] -= confusion[np.arange(K), best]
    return LossReport(
        L=float(L),
        L_tilde=max(float(L_tilde), float(L)),
        best_permutation=tuple(int(b) + 1 for b in best),
        misclustered_per_block=misclustered.astype(int),
    )


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Adjusted Rand index between two labelings.

    Raises:
        ArgumentError: different lengths or fewer than two nodes
    """
    labels_a = np.asarray(labels_a).ravel()
    labels_b = np.asarray(labels_b).ravel()
    if labels_a.size != labels_b.size:
        raise ArgumentError(
            f"labelings have different lengths {labels_a.size} and {labels_b.size}"
        )
    if labels_a.size < 2:
        raise ArgumentError("the adjusted Rand index needs at least two nodes")
    return float(adjusted_rand_score(labels_a, labels_b))


@dataclass
class MisclusterReport:
    """Nodes whose k-means centroid row sits far from the aligned population row.

    Attributes:
        sets: per true block, 0-based indices i in G_k with
            ||U_bar_i - (U W)_i|| >= delta_k / 2
        deltas: delta_k = sqrt(1/n_k + 1/max_{l != k} n_l)
        lhs: sum_k |S_k| delta_k^2
        rhs: 8 (2 + epsilon) ||U_hat - U W||_F^2
        holds: lhs <= rhs
    """

    sets: list
    deltas: np.ndarray
    block_sizes: np.ndarray
    lhs: float
    rhs: float
    holds: bool

    @property
    def fractions(self) -> np.ndarray:
        """|S_k| / n_k per block."""
        return np.array([len(s) for s in self.sets]) / self.block_sizes


def misclustered_sets(
    result: ClusterResult, u_hat, u, theta: Membership
) -> MisclusterReport:
    """Misclustered node sets of an approximate k-means solution.

    Args:
        result (ClusterResult): k-means solution on the rows of u_hat
        u_hat (array-like): n x K sample embedding
        u (array-like): n x K population eigenvectors
        theta (Membership): true membership

    Returns:
        MisclusterReport, including whether sum_k |S_k| delta_k^2 is within
        8 (2 + epsilon) ||U_hat - U W||_F^2
    """
    u_hat = np.asarray(u_hat, dtype=float)
    w = procrustes_align(u_hat, u)
    aligned = np.asarray(u, dtype=float) @ w
    centroid_rows = result.centroids[result.labels - 1]
    distance = np.linalg.norm(centroid_rows - aligned, axis=1)

    sizes = theta.block_sizes.astype(float)
    deltas = np.empty(theta.K)
    for k in range(theta.K):
        others = np.delete(sizes, k)
        deltas[k] = np.sqrt(1.0 / sizes[k] + (1.0 / others.max() if others.size else 0.0))
    sets = [
        nodes[distance[nodes] >= deltas[k] / 2.0]
        for k, nodes in enumerate(theta.blocks())
    ]
    lhs = float(sum(s.size * deltas[k] ** 2 for k, s in enumerate(sets)))
    rhs = float(8.0 * (2.0 + result.epsilon_k) * np.sum((u_hat - aligned) ** 2))
    return MisclusterReport(
        sets=sets, deltas=deltas, block_sizes=sizes, lhs=lhs, rhs=rhs, holds=lhs <= rhs
    )
