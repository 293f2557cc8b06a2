"""Weighted blockmodels: sampling, population parameters and exact rank moments.

Normalized ranks of a blockmodel matrix have block-wise expectations, variances and
pairwise covariances that depend only on the block sizes and the entry distributions.
`RankMoments` computes them exactly at finite n from the CDF functionals in
`rankspec.distributions`.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .distributions import (
    Distribution,
    cross_cdf_moment,
    cross_cdf_product_moment,
    distribution_from_dict,
    g_moment,
)
from .errors import ArgumentError, ModelError
from .linalg import Embedding, _fix_signs, _magnitude_order
from .utils import TOLERANCES, _to_Path, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Membership:
    """Block assignment of n nodes to blocks labelled 1..K.

    Attributes:
        labels: length-n integer array with values in 1..K
        K: number of blocks
    """

    labels: np.ndarray
    K: int = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ArgumentError("membership labels must be a non-empty 1-d sequence")
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ArgumentError("membership labels must be integers")
        labels = labels.astype(int)
        K = int(labels.max()) if self.K is None else int(self.K)
        if labels.min() < 1 or labels.max() > K:
            raise ArgumentError(f"membership labels must lie in 1..{K}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_block_sizes(cls, sizes) -> "Membership":
        """Contiguous blocks: the first sizes[0] nodes in block 1, and so on."""
        sizes = [int(s) for s in sizes]
        if not sizes or min(sizes) < 1:
            raise ArgumentError(f"block sizes must be positive, got {sizes}")
        return cls(np.repeat(np.arange(1, len(sizes) + 1), sizes), K=len(sizes))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.labels - 1, minlength=self.K)

    @property
    def theta(self) -> np.ndarray:
        """n x K one-hot membership matrix."""
        theta = np.zeros((self.n, self.K))
        theta[np.arange(self.n), self.labels - 1] = 1.0
        return theta

    @property
    def delta(self) -> np.ndarray:
        """diag(sqrt(n_1), ..., sqrt(n_K))."""
        return np.diag(np.sqrt(self.block_sizes.astype(float)))

    def blocks(self) -> list:
        """0-based node indices of each block."""
        return [np.flatnonzero(self.labels == k) for k in range(1, self.K + 1)]

    def __eq__(self, other):
        return (
            isinstance(other, Membership)
            and self.K == other.K
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def split_block_sizes(n: int, fractions) -> list:
    """Integer block sizes summing to n, as close as possible to n * fractions.

    Remainders go to the blocks with the largest fractional parts, earliest first.
    """
    fractions = np.asarray(fractions, dtype=float).ravel()
    if fractions.size == 0 or np.any(fractions <= 0):
        raise ArgumentError(f"block fractions must be positive, got {fractions}")
    if abs(fractions.sum() - 1.0) > TOLERANCES.mixture_weights * fractions.size:
        raise ArgumentError(f"block fractions must sum to 1, got {fractions.sum()}")
    target = n * fractions
    sizes = np.floor(target).astype(int)
    extra = np.argsort(-(target - sizes), kind="stable")[: n - sizes.sum()]
    sizes[extra] += 1
    return sizes.tolist()


def _pair_key(k, kp) -> tuple:
    k, kp = int(k), int(kp)
    return (k, kp) if k <= kp else (kp, k)


@dataclass(frozen=True, eq=False)
class BlockModelSpec:
    """Membership plus one entry distribution per unordered block pair.

    Attributes:
        membership: block assignment
        dists: {(k, k'): Distribution} for 1 <= k <= k' <= K, keys in either order
        hollow: whether the diagonal is forced to zero
    """

    membership: Membership
    dists: dict
    hollow: bool = False

    def __post_init__(self):
        K = self.membership.K
        dists = {}
        for key, dist in dict(self.dists).items():
            pair = _pair_key(*key)
            if not (1 <= pair[0] and pair[1] <= K):
                raise ModelError(f"block pair {key} is outside 1..{K}")
            if pair in dists:
                raise ModelError(f"block pair {pair} given more than once")
            if not isinstance(dist, Distribution):
                raise ModelError(f"block pair {pair} has no valid distribution")
            dists[pair] = dist
        missing = [p for p in self.pairs() if p not in dists]
        if missing:
            raise ModelError(f"no distribution for block pair(s) {missing}")
        object.__setattr__(self, "dists", dists)
        object.__setattr__(self, "hollow", bool(self.hollow))

    @property
    def K(self) -> int:
        return self.membership.K

    @property
    def n(self) -> int:
        return self.membership.n

    def pairs(self) -> list:
        """Unordered block pairs (k, k'), k <= k', in lexicographic order."""
        return [(k, kp) for k in range(1, self.K + 1) for kp in range(k, self.K + 1)]

    def dist(self, k, kp) -> Distribution:
        return self.dists[_pair_key(k, kp)]

    def with_block_sizes(self, sizes) -> "BlockModelSpec":
        """Same distributions on contiguous blocks of the given sizes."""
        membership = Membership.from_block_sizes(sizes)
        if membership.K != self.K:
            raise ArgumentError(f"expected {self.K} block sizes, got {len(sizes)}")
        return BlockModelSpec(membership, self.dists, self.hollow)

    def pair_counts(self) -> dict:
        """Number of upper-triangular entries per block pair.

        N(k, k) = n_k (n_k - 1) / 2 and N(k, k') = n_k n_k'.
        """
        sizes = self.membership.block_sizes
        return {
            (k, kp): int(sizes[k - 1] * (sizes[k - 1] - 1) // 2)
            if k == kp
            else int(sizes[k - 1] * sizes[kp - 1])
            for k, kp in self.pairs()
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "BlockModelSpec":
        """Parse {"blocks": [500, 500], "hollow": false, "dists": {"1,1": {...}, ...}}.

        "labels" (1-based, one per node) may replace "blocks".
        """
        if "labels" in spec:
            membership = Membership(spec["labels"], K=spec.get("K"))
        elif "blocks" in spec:
            membership = Membership.from_block_sizes(spec["blocks"])
        else:
            raise ArgumentError("model spec needs 'blocks' or 'labels'")
        dists = {}
        for key, fragment in spec.get("dists", {}).items():
            try:
                pair = tuple(int(k) for k in str(key).split(","))
            except ValueError:
                raise ArgumentError(f"block pair key must look like '1,2', got {key!r}")
            if len(pair) != 2:
                raise ArgumentError(f"block pair key must look like '1,2', got {key!r}")
            dists[pair] = distribution_from_dict(fragment)
        return cls(membership, dists, bool(spec.get("hollow", False)))

    def to_dict(self) -> dict:
        return {
            "blocks": self.membership.block_sizes.tolist(),
            "hollow": self.hollow,
            "dists": {f"{k},{kp}": d.to_dict() for (k, kp), d in self.dists.items()},
        }


def load_spec(path) -> BlockModelSpec:
    """Read a JSON model spec.

    Raises:
        FileNotFoundError: no file at `path`
        ArgumentError: malformed JSON or spec
    """
    path = _to_Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model spec not found: {path}")
    try:
        with open(path) as f:
            spec = json.load(f)
    except json.JSONDecodeError as e:
        raise ArgumentError(f"{path} is not valid JSON: {e}")
    return BlockModelSpec.from_dict(spec)


def sample_matrix(spec: BlockModelSpec, seed) -> np.ndarray:
    """Draw a symmetric matrix from the blockmodel.

    Upper-triangular entries are independent with A_ij ~ F(g_i, g_j). The diagonal is
    drawn from F(g_i, g_i) unless the model is hollow.
    """
    rng = make_rng(seed)
    n = spec.n
    labels = spec.membership.labels
    rows, cols = np.triu_indices(n, k=1)
    lo = np.minimum(labels[rows], labels[cols])
    hi = np.maximum(labels[rows], labels[cols])
    values = np.empty(rows.size)
    for k, kp in spec.pairs():
        mask = (lo == k) & (hi == kp)
        count = int(np.count_nonzero(mask))
        if count:
            values[mask] = spec.dist(k, kp).sample(rng, count)
    a = np.zeros((n, n))
    a[rows, cols] = values
    a = a + a.T
    if not spec.hollow:
        for k, nodes in enumerate(spec.membership.blocks(), start=1):
            if nodes.size:
                a[nodes, nodes] = spec.dist(k, k).sample(rng, nodes.size)
    return a


def corrupt_entries(
    a, membership: Membership, fraction: float, locations, seed, scale: float = 1.0
) -> np.ndarray:
    """Replace a random fraction of off-diagonal entries by Cauchy draws.

    Each upper-triangular entry is independently replaced, with probability
    `fraction`, by a Cauchy(locations[g_i, g_j], scale) draw; the lower triangle
    mirrors it.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ArgumentError(f"fraction must lie in [0, 1], got {fraction}")
    rng = make_rng(seed)
    a = np.array(a, dtype=float)
    locations = np.asarray(locations, dtype=float)
    n = a.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    hit = rng.random(rows.size) < fraction
    rows, cols = rows[hit], cols[hit]
    labels = membership.labels - 1
    a[rows, cols] = stats.cauchy.rvs(
        loc=locations[labels[rows], labels[cols]],
        scale=scale,
        size=rows.size,
        random_state=rng,
    )
    a[cols, rows] = a[rows, cols]
    return a


class MixedMembershipSample(NamedTuple):
    matrix: np.ndarray
    theta: np.ndarray


def sample_mixed_membership(
    n: int, dirichlet_alpha, B, noise_sigma: float, seed
) -> MixedMembershipSample:
    """Mixed-membership matrix A = Theta B Theta^T + symmetric Gaussian noise.

    Rows of Theta are Dirichlet(alpha) draws. Noise entries on and above the diagonal
    are independent Normal(0, noise_sigma); the lower triangle mirrors them.
    """
    alpha = np.asarray(dirichlet_alpha, dtype=float).ravel()
    B = np.asarray(B, dtype=float)
    if alpha.size < 1 or np.any(alpha <= 0):
        raise ArgumentError(f"Dirichlet parameters must be positive, got {alpha}")
    if B.shape != (alpha.size, alpha.size) or not np.array_equal(B, B.T):
        raise ArgumentError(f"B must be a symmetric {alpha.size} x {alpha.size} matrix")
    if noise_sigma < 0:
        raise ArgumentError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = make_rng(seed)
    theta = rng.dirichlet(alpha, size=n)
    a = theta @ B @ theta.T
    if noise_sigma > 0:
        noise = np.triu(rng.normal(0.0, noise_sigma, size=(n, n)))
        a = a + noise + np.triu(noise, k=1).T
    a = 0.5 * (a + a.T)  # exact symmetry after floating-point products
    return MixedMembershipSample(a, theta)


@dataclass
class PopulationMatrices:
    """Block-level population parameters.

    Attributes:
        median: K x K medians
        mean: K x K means, masked where the mean does not exist
        variance: K x K variances, masked where the variance does not exist
        rank_mean: K x K expected normalized ranks at the spec's block sizes
        rank_variance: K x K normalized rank variances at the spec's block sizes
        eigenvalues: eigenvalues of rank_mean ordered by decreasing magnitude
    """

    median: np.ndarray
    mean: np.ma.MaskedArray
    variance: np.ma.MaskedArray
    rank_mean: np.ndarray
    rank_variance: np.ndarray
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        values = np.linalg.eigvalsh(self.rank_mean)
        self.eigenvalues = values[_magnitude_order(values)]


class RankMoments:
    """Exact finite-n moments of normalized ranks for a blockmodel.

    For an entry in block pair l, its rank among all N upper-triangular entries is
    one plus the number of other entries below it. Conditioning on its value gives
    the expectation and variance in terms of E_l[F_c] and E_l[F_c F_c']; the
    covariance of two distinct entries also needs Pr[A <= B <= C] terms.

    Args:
        spec (BlockModelSpec): the model; its block sizes fix the counts

    Example:
        > moments = RankMoments(spec)
        > moments.expected(1, 2), moments.variance(1, 2)
    """

    def __init__(self, spec: BlockModelSpec, method: str = "auto"):
        self.spec = spec
        self.method = method
        self.pairs = spec.pairs()
        self.counts = spec.pair_counts()
        self.total = sum(self.counts.values())
        self.sizes = spec.membership.block_sizes

    def _require(self, pair, count=1):
        if self.counts[pair] < count:
            raise ArgumentError(
                f"block pair {pair} has {self.counts[pair]} entries at block sizes"
                f" {self.sizes.tolist()}; at least {count} needed"
            )

    def _others(self, *excluded) -> dict:
        return {
            c: self.counts[c] - sum(c == e for e in excluded) for c in self.pairs
        }

    def _F(self, outer, other) -> float:
        return cross_cdf_moment(self.spec.dist(*outer), self.spec.dist(*other), self.method)

    def _FF(self, outer, first, second) -> float:
        return cross_cdf_product_moment(
            self.spec.dist(*outer),
            self.spec.dist(*first),
            self.spec.dist(*second),
            self.method,
        )

    def _g(self, lower, inner, outer) -> float:
        return g_moment(
            self.spec.dist(*lower), self.spec.dist(*inner), self.spec.dist(*outer), self.method
        )

    def expected(self, k, kp) -> float:
        """Expected normalized rank of an entry in block pair (k, k')."""
        pair = _pair_key(k, kp)
        self._require(pair)
        others = self._others(pair)
        scale = self.total + 1
        return 1.0 / scale + sum(
            others[c] / scale * self._F(pair, c) for c in self.pairs
        )

    def variance(self, k, kp) -> float:
        """Variance of the normalized rank of an entry in block pair (k, k')."""
        pair = _pair_key(k, kp)
        self._require(pair)
        scale = self.total + 1
        weights = {c: m / scale for c, m in self._others(pair).items()}
        first = {c: self._F(pair, c) for c in self.pairs}
        within = sum(
            weights[c] / scale * (first[c] - self._FF(pair, c, c)) for c in self.pairs
        )
        second = sum(
            weights[c] * weights[cp] * self._FF(pair, c, cp)
            for c in self.pairs
            for cp in self.pairs
        )
        mean = sum(weights[c] * first[c] for c in self.pairs)
        return within + second - mean**2

    def pattern_count(self, pair_a, pair_b, sharing: bool) -> int:
        """Ordered pairs of distinct entries in the two block pairs with or without a shared node."""
        pair_a, pair_b = _pair_key(*pair_a), _pair_key(*pair_b)

        def degree(pair, k):
            # entries of `pair` containing one given node of block k
            if pair == (k, k):
                return self.sizes[k - 1] - 1
            if k == pair[0]:
                return self.sizes[pair[1] - 1]
            if k == pair[1]:
                return self.sizes[pair[0] - 1]
            return 0

        same = pair_a == pair_b
        shared = sum(
            self.sizes[k - 1]
            * (degree(pair_a, k) * degree(pair_b, k) - same * degree(pair_a, k))
            for k in range(1, self.spec.K + 1)
        )
        if sharing:
            return int(shared)
        total = self.counts[pair_a] * self.counts[pair_b] - same * self.counts[pair_a]
        return int(total - shared)

    def covariance(self, pair_a, pair_b, sharing: bool = None) -> float:
        """Covariance of the normalized ranks of two distinct entries.

        The value does not depend on whether the entries share a node, since distinct
        entries are independent; `sharing` (True/False) is checked against the block
        sizes so that impossible configurations are rejected.

        Args:
            pair_a (tuple): block pair (k, k') of the first entry
            pair_b (tuple): block pair of the second entry
            sharing (bool or None): whether the two entries share a node

        Raises:
            ArgumentError: the configuration has no realization at these block sizes
        """
        a, b = _pair_key(*pair_a), _pair_key(*pair_b)
        self._require(a)
        self._require(b, 2 if a == b else 1)
        if sharing is not None and self.pattern_count(a, b, sharing) == 0:
            raise ArgumentError(
                f"no two distinct entries in block pairs {a} and {b}"
                f" {'share' if sharing else 'avoid sharing'} a node at block sizes"
                f" {self.sizes.tolist()}"
            )
        p = self._F(a, b)
        total = -p * (1.0 - p)
        for c, m in self._others(a, b).items():
            if m == 0:
                continue
            fa, fb = self._F(a, c), self._F(b, c)
            # E_c[(1 - F_a)(1 - F_b)] = 1 - E_c[F_a] - E_c[F_b] + E_c[F_a F_b]
            below_both = 1.0 - self._F(c, a) - self._F(c, b) + self._FF(c, a, b)
            total += m * (
                self._g(c, b, a)
                - p * fb
                - self._FF(a, c, b)
                + fa * p
                + below_both
                - fa * fb
            )
        return total / (self.total + 1) ** 2

    def rank_mean_matrix(self) -> np.ndarray:
        """B-tilde: K x K expected normalized ranks."""
        return self._matrix(self.expected)

    def rank_variance_matrix(self) -> np.ndarray:
        """S-tilde squared: K x K normalized rank variances."""
        return self._matrix(self.variance)

    def _matrix(self, entry) -> np.ndarray:
        small = [k for k in range(1, self.spec.K + 1) if self.counts[(k, k)] < 1]
        if small:
            raise ArgumentError(
                f"block(s) {small} have fewer than 2 nodes; rank matrices need n_k >= 2"
            )
        K = self.spec.K
        out = np.empty((K, K))
        for k, kp in self.pairs:
            out[k - 1, kp - 1] = out[kp - 1, k - 1] = entry(k, kp)
        return out

    def expected_rank_matrix(self) -> np.ndarray:
        """E[R-tilde] = Theta B-tilde Theta^T with the diagonal zeroed."""
        theta = self.spec.membership.theta
        expected = theta @ self.rank_mean_matrix() @ theta.T
        np.fill_diagonal(expected, 0.0)
        return expected

    def population_matrices(self) -> PopulationMatrices:
        return population_matrices(self.spec, moments=self)


def _masked_matrix(spec: BlockModelSpec, value) -> np.ma.MaskedArray:
    K = spec.K
    data = np.zeros((K, K))
    mask = np.zeros((K, K), dtype=bool)
    for k, kp in spec.pairs():
        v = value(spec.dist(k, kp))
        for i, j in ((k - 1, kp - 1), (kp - 1, k - 1)):
            if v is None:
                mask[i, j] = True
            else:
                data[i, j] = v
    return np.ma.MaskedArray(data, mask=mask)


def population_matrices(spec: BlockModelSpec, moments: RankMoments = None) -> PopulationMatrices:
    """Medians, means, variances and finite-n rank moments of every block pair."""
    moments = RankMoments(spec) if moments is None else moments
    return PopulationMatrices(
        median=_masked_matrix(spec, lambda d: d.median()).data,
        mean=_masked_matrix(spec, lambda d: d.mean()),
        variance=_masked_matrix(spec, lambda d: d.variance()),
        rank_mean=moments.rank_mean_matrix(),
        rank_variance=moments.rank_variance_matrix(),
    )


def limiting_rank_matrices(
    spec: BlockModelSpec, fractions=None, n: int = 100000, method: str = "auto"
) -> tuple:
    """B-tilde and S-tilde squared at a large n, for asymptotic studies.

    Args:
        spec (BlockModelSpec): supplies the distributions
        fractions (array-like): block proportions; defaults to the spec's own
        n (int): number of nodes to evaluate the moments at
        method (str): functional evaluation method, see `cross_cdf_moment`

    Returns:
        (rank_mean, rank_variance), both K x K
    """
    if fractions is None:
        fractions = spec.membership.block_sizes / spec.n
    moments = RankMoments(spec.with_block_sizes(split_block_sizes(n, fractions)), method)
    return moments.rank_mean_matrix(), moments.rank_variance_matrix()


def population_expected_rank_entry(spec: BlockModelSpec, k: int, kp: int) -> float:
    """Finite-n expected normalized rank of an entry in block pair (k, k')."""
    return RankMoments(spec).expected(k, kp)


def population_rank_variance_entry(spec: BlockModelSpec, k: int, kp: int) -> float:
    """Finite-n variance of the normalized rank of an entry in block pair (k, k')."""
    return RankMoments(spec).variance(k, kp)


def population_rank_covariance(
    spec: BlockModelSpec, blockpair1, blockpair2, sharing: bool
) -> float:
    """Finite-n covariance of the normalized ranks of two distinct entries."""
    return RankMoments(spec).covariance(blockpair1, blockpair2, sharing)


@dataclass(frozen=True)
class PopulationEigen:
    """Eigenstructure of Theta M Theta^T for a K x K block matrix M.

    Attributes:
        embedding: U = Theta Delta^{-1} V with the eigenvalues of Delta M Delta
        rotation: V, eigenvectors of Delta M Delta (signs matched to U)
        gamma: smallest nonzero singular value of Theta M Theta^T
        lambda_min: smallest-magnitude eigenvalue of M
    """

    embedding: Embedding
    rotation: np.ndarray
    gamma: float
    lambda_min: float


def block_eigen(membership: Membership, block_matrix) -> PopulationEigen:
    """Top-K eigenvectors of Theta M Theta^T from the K x K problem Delta M Delta.

    Raises:
        ModelError: empty block, or Delta M Delta has an eigenvalue within
            1e-10 n of zero
    """
    block_matrix = np.asarray(block_matrix, dtype=float)
    K = membership.K
    if block_matrix.shape != (K, K):
        raise ArgumentError(f"block matrix must be {K} x {K}, got {block_matrix.shape}")
    if np.any(membership.block_sizes == 0):
        raise ModelError("every block must be nonempty")
    delta = membership.delta
    values, vectors = np.linalg.eigh(delta @ block_matrix @ delta)
    order = _magnitude_order(values)
    values, vectors = values[order], vectors[:, order]
    smallest = np.abs(values).min()
    if smallest <= TOLERANCES.rank_check * membership.n:
        raise ModelError(
            f"block matrix is rank deficient: Delta M Delta has eigenvalue"
            f" {values[np.argmin(np.abs(values))]:.3g}"
        )
    u = membership.theta @ np.diag(1.0 / np.diag(delta)) @ vectors
    signed = _fix_signs(u)
    signs = np.sign(np.sum(signed * u, axis=0))
    block_values = np.linalg.eigvalsh(block_matrix)
    return PopulationEigen(
        embedding=Embedding(signed, values),
        rotation=vectors * signs,
        gamma=float(smallest),
        lambda_min=float(block_values[np.argmin(np.abs(block_values))]),
    )


def population_eigvecs(spec: BlockModelSpec, moments: RankMoments = None) -> PopulationEigen:
    """Population eigenvectors of Theta B-tilde Theta^T for the spec's block sizes."""
    moments = RankMoments(spec) if moments is None else moments
    return block_eigen(spec.membership, moments.rank_mean_matrix())


def asymptotic_embedding_covariance(B, S2, pi, k: int) -> np.ndarray:
    """Limiting covariance of a block-k row residual, in the membership frame.

    Returns Xi Gamma Xi^T with Xi = diag(pi^{-1/2}) B^{-1} diag(pi^{-1}) and
    Gamma = diag(pi_l S2[k, l]). Pass (B, S2) for raw data or the rank matrices for
    pass-to-ranks data.
    """
    B = np.asarray(B, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if not 1 <= k <= B.shape[0]:
        raise ArgumentError(f"block index must lie in 1..{B.shape[0]}, got {k}")
    xi = np.diag(pi**-0.5) @ np.linalg.inv(B) @ np.diag(1.0 / pi)
    gamma = np.diag(pi * S2[k - 1])
    return xi @ gamma @ xi.T


def finite_embedding_covariance(moments: RankMoments, k: int) -> np.ndarray:
    """Finite-n covariance of n (U_hat - U W) rows for nodes of block k.

    The rows are expressed in the membership frame, where to first order they equal
    n (E Theta Delta^{-2} B^{-1} Delta^{-1}) with E the centred rank matrix. The
    covariance of the row sums of E includes the covariances between distinct
    entries of the same row.
    """
    spec = moments.spec
    K = spec.K
    if not 1 <= k <= K:
        raise ArgumentError(f"block index must lie in 1..{K}, got {k}")
    n = spec.n
    sizes = spec.membership.block_sizes.astype(float)
    others = sizes - (np.arange(1, K + 1) == k)
    row_cov = np.zeros((K, K))
    for l in range(1, K + 1):
        for lp in range(l, K + 1):
            m, mp = others[l - 1], others[lp - 1]
            pairs = m * mp - (m if l == lp else 0.0)
            value = 0.0
            if pairs > 0:
                value = pairs * moments.covariance((k, l), (k, lp))
            if l == lp and m > 0:
                value += m * moments.variance(k, l)
            row_cov[l - 1, lp - 1] = row_cov[lp - 1, l - 1] = value
    delta_inv = np.diag(sizes**-0.5)
    transform = n * np.diag(1.0 / sizes) @ np.linalg.inv(moments.rank_mean_matrix()) @ delta_inv
    return transform.T @ row_cov @ transform
