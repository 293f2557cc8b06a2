"""Entrywise pass-to-ranks transform of a symmetric data matrix."""

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, TieError
from .linalg import check_symmetric

TIE_MODES = ("strict", "midrank")


def pass_to_ranks(a, tie_mode: str = "strict") -> np.ndarray:
    """Replace each off-diagonal entry by its normalized rank.

    The N = n(n-1)/2 upper-triangular entries are ranked among themselves, divided
    by N + 1 and mirrored to the lower triangle. The diagonal is set to zero whatever
    it held.

    Args:
        a (array-like): symmetric n x n matrix, n >= 2
        tie_mode (str): "strict" rejects tied entries, "midrank" gives tied entries
            the average of the normalized ranks they span

    Returns:
        n x n symmetric matrix with zero diagonal and off-diagonal entries in (0, 1)

    Raises:
        ArgumentError: n < 2, unknown tie mode, or NaN entries
        TieError: strict mode and two upper-triangular entries are equal

    Example:
        > pass_to_ranks(np.array([[0, .5, -1.2], [.5, 0, 3.], [-1.2, 3., 0]]))[0]
        array([0.  , 0.5 , 0.25])
    """
    if tie_mode not in TIE_MODES:
        raise ArgumentError(f"tie_mode must be one of {TIE_MODES}, got {tie_mode!r}")
    a = check_symmetric(a)
    n = a.shape[0]
    if n < 2:
        raise ArgumentError(f"pass_to_ranks needs n >= 2, got n={n}")

    rows, cols = np.triu_indices(n, k=1)
    values = a[rows, cols]
    if np.isnan(values).any():
        raise ArgumentError("matrix holds NaN entries and cannot be ranked")
    count = values.size

    if tie_mode == "strict":
        order = np.argsort(values, kind="stable")
        repeats = np.flatnonzero(values[order][1:] == values[order][:-1])
        if repeats.size:
            first = order[repeats[0]]
            raise TieError((rows[first], cols[first]), float(values[first]))
        ranks = np.empty(count, dtype=float)
        ranks[order] = np.arange(1, count + 1)
    else:
        ranks = rankdata(values, method="average")

    r = np.zeros((n, n))
    r[rows, cols] = ranks / (count + 1)
    return r + r.T


def center_ranks(r, expected) -> np.ndarray:
    """Entrywise difference between a rank matrix and its expectation.

    Raises:
        ArgumentError: the two matrices have different shapes
    """
    r = np.asarray(r, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if r.shape != expected.shape:
        raise ArgumentError(
            f"rank matrix {r.shape} and expectation {expected.shape} differ in shape"
        )
    return r - expected
