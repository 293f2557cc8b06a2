import csv
import json
import logging
import pathlib

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ArgumentError
from .linalg import Embedding, check_symmetric
from .utils import TOLERANCES

logger = logging.getLogger(__name__)

MATRIX_FORMATS = ("dense_csv", "edge_list_tsv")
NUMBER_FORMAT = "%.17g"


class MatrixFile:
    """Symmetric weighted matrix stored on disk.

    Supported formats:
        - dense_csv: n rows of n comma-separated numbers, optional header row
        - edge_list_tsv: lines "i<TAB>j<TAB>w" with 0-based node ids, each unordered
          pair at most once; i == j sets a diagonal entry

    The matrix is read on first access and checked for symmetry; asymmetry above
    1e-9 is rejected and smaller differences are resolved by the upper triangle.

    Example:
        > loaded = matrix_io.MatrixFile("graph.tsv", missing="zero")
        > loaded.matrix.shape

    Attributes:
        path: location of the file
        format: one of MATRIX_FORMATS, inferred from the suffix when not given
        header: whether a dense CSV starts with a header row
        missing: "error" rejects absent off-diagonal pairs of an edge list,
            "zero" fills them with 0
        matrix: n x n symmetric float array
        n: number of nodes
    """

    def __init__(
        self, path: str, format: str = None, header: bool = False, missing: str = "error"
    ):
        """Initialize MatrixFile class

        Raises:
            FileNotFoundError: no file at `path`
            ArgumentError: unknown format or missing-pair policy
        """
        self.path = pathlib.Path(path)
        if not self.path.exists():
            raise FileNotFoundError(f"Matrix file not found: {path}")
        if format is None:
            format = "dense_csv" if self.path.suffix.lower() == ".csv" else "edge_list_tsv"
        if format not in MATRIX_FORMATS:
            raise ArgumentError(f"format must be one of {MATRIX_FORMATS}, got {format!r}")
        if missing not in ("error", "zero"):
            raise ArgumentError(f"missing must be 'error' or 'zero', got {missing!r}")
        self.format = format
        self.header = header
        self.missing = missing
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            raw = self._read_dense() if self.format == "dense_csv" else self._read_edges()
            check_symmetric(raw, TOLERANCES.symmetry_on_load, name=str(self.path))
            self._matrix = np.triu(raw) + np.triu(raw, k=1).T
            logger.info(f"Loaded {self._matrix.shape[0]} x {self._matrix.shape[0]} matrix from {self.path}")
        return self._matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def _read_dense(self) -> np.ndarray:
        try:
            m = np.loadtxt(
                self.path, delimiter=",", skiprows=int(self.header), ndmin=2, dtype=float
            )
        except ValueError as e:
            raise ArgumentError(f"{self.path} is not a numeric CSV matrix: {e}")
        if m.size == 0 or m.shape[0] != m.shape[1]:
            raise ArgumentError(f"{self.path} must hold a square matrix, got {m.shape}")
        return m

    def _read_edges(self) -> np.ndarray:
        try:
            edges = np.loadtxt(self.path, delimiter="\t", ndmin=2, dtype=float)
        except ValueError as e:
            raise ArgumentError(f"{self.path} is not a tab-separated edge list: {e}")
        if edges.size == 0 or edges.shape[1] != 3:
            raise ArgumentError(f"{self.path} must hold 'i<TAB>j<TAB>w' lines")
        ids = edges[:, :2]
        if np.any(ids < 0) or np.any(ids != np.round(ids)):
            raise ArgumentError(f"{self.path} node ids must be non-negative integers")
        i, j = ids.astype(int).T
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        n = int(hi.max()) + 1
        present = np.zeros((n, n), dtype=bool)
        if np.unique(lo * n + hi).size != lo.size:
            keys, counts = np.unique(lo * n + hi, return_counts=True)
            dup = keys[np.argmax(counts > 1)]
            raise ArgumentError(
                f"{self.path} lists node pair ({dup // n}, {dup % n}) more than once"
            )
        m = np.zeros((n, n))
        m[lo, hi] = edges[:, 2]
        present[lo, hi] = True
        absent = np.argwhere(np.triu(~present, k=1))
        if absent.size and self.missing == "error":
            raise ArgumentError(
                f"{self.path} has no weight for {len(absent)} node pair(s), e.g."
                f" {tuple(absent[0])}; pass missing='zero' to fill them with 0"
            )
        return m + np.triu(m, k=1).T


def largest_connected_component(a) -> tuple:
    """Restrict a weighted graph to the largest connected component of its nonzero pattern.

    Returns:
        (submatrix, kept) with `kept` the 0-based ids of the retained nodes
    """
    a = check_symmetric(a)
    pattern = a != 0
    np.fill_diagonal(pattern, False)
    count, labels = connected_components(csr_matrix(pattern), directed=False)
    largest = int(np.argmax(np.bincount(labels)))
    kept = np.flatnonzero(labels == largest)
    if count > 1:
        logger.info(f"Kept {kept.size} of {a.shape[0]} nodes in the largest of {count} components")
    return a[np.ix_(kept, kept)], kept


def write_matrix_csv(path, m):
    """Dense CSV with 17 significant digits, so reading it back is bit-exact."""
    np.savetxt(path, np.asarray(m, dtype=float), delimiter=",", fmt=NUMBER_FORMAT, newline="\n")


def write_embedding_csv(path, embedding: Embedding):
    """Eigenvalues on the first row, then one row of d coordinates per node."""
    rows = np.vstack([embedding.eigenvalues[None, :], embedding.vectors])
    np.savetxt(path, rows, delimiter=",", fmt=NUMBER_FORMAT, newline="\n")


def write_masked_csv(path, m: np.ma.MaskedArray):
    """Dense CSV where masked entries are written as empty cells."""
    m = np.ma.asarray(m)
    mask = np.ma.getmaskarray(m)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for values, hidden in zip(m.data, mask):
            writer.writerow(
                ["" if h else NUMBER_FORMAT % v for v, h in zip(values, hidden)]
            )


def read_masked_csv(path) -> np.ma.MaskedArray:
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f)]
    data = np.array([[float(v) if v else 0.0 for v in row] for row in rows])
    mask = np.array([[not v for v in row] for row in rows])
    return np.ma.MaskedArray(data, mask=mask)


def write_labels_json(path, labels, **extra):
    """Write {"labels": [...], **extra}; labels are the 1-based block labels."""
    payload = {"labels": [int(v) for v in np.asarray(labels).ravel()], **extra}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def read_labels_json(path) -> np.ndarray:
    """1-based labels from a labels JSON file.

    Raises:
        FileNotFoundError: no file at `path`
        ArgumentError: no integer "labels" list
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Labels file not found: {path}")
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ArgumentError(f"{path} is not valid JSON: {e}")
    labels = payload.get("labels") if isinstance(payload, dict) else payload
    if not isinstance(labels, list) or not labels:
        raise ArgumentError(f"{path} holds no 'labels' list")
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu" or labels.min() < 1:
        raise ArgumentError(f"{path} labels must be integers >= 1")
    return labels.astype(int)
