import hashlib
import json
import logging
import multiprocessing
import os
import pathlib
import sys
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from tqdm import tqdm

from .errors import ArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by every module."""

    orthonormality: float = 1e-10
    eigen_residual: float = 1e-8
    eigenvalue_tie: float = 1e-12  # relative to the largest magnitude
    symmetry_on_load: float = 1e-9
    quadrature: float = 1e-9
    nested_quadrature: float = 1e-7
    rank_check: float = 1e-10
    mixture_weights: float = 1e-12
    quantile: float = 1e-10
    kmeans_convergence: float = 1e-10


TOLERANCES = Tolerances()


def find_full_path(root_directories: list, relative_path: str) -> pathlib.Path:
    """Given a list of roots and a relative path, search and return the full-path

    Root directories are searched in the provided order. When no roots are given,
    the colon-separated `RANKSPEC_DATA_DIR` environment value is used.

    Args:
        root_directories (list): potential root directories, or None
        relative_path (str): the relative path to find the valid root directory

    Returns:
        full-path (pathlib.Path object)

    Raises:
        FileNotFoundError: No valid full path
    """
    relative_path = _to_Path(relative_path)

    if relative_path.exists():
        return relative_path

    if root_directories is None:
        root_directories = [
            p for p in os.environ.get("RANKSPEC_DATA_DIR", "").split(os.pathsep) if p
        ]
    elif isinstance(root_directories, (str, pathlib.Path)):
        root_directories = [_to_Path(root_directories)]

    for root_dir in root_directories:
        if (_to_Path(root_dir) / relative_path).exists():
            return _to_Path(root_dir) / relative_path

    raise FileNotFoundError(
        "No valid full-path found (from {})"
        " for {}".format(root_directories, relative_path)
    )


def _to_Path(path: str) -> pathlib.Path:
    """Convert the input "path" into a pathlib.Path object

    Args:
        path (str or pathlib.Path): path on disk
    """
    return pathlib.Path(str(path).replace("\\", "/"))


def dict_to_uuid(key: dict) -> uuid.UUID:
    """Given a dictionary `key`, returns a hash string as UUID

    Values are hashed through their canonical JSON form, so numpy scalars, tuples and
    lists with equal contents give the same fingerprint.

    Args:
        key (dict): Any python dictionary
    """
    hashed = hashlib.md5()
    for k, v in sorted(key.items()):
        hashed.update(str(k).encode())
        hashed.update(json.dumps(v, sort_keys=True, default=_jsonable).encode())
    return uuid.UUID(hex=hashed.hexdigest())


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return str(value)


def value_to_bool(value) -> bool:
    """Return whether the provided value represents true. Otherwise false.

    Args:
        value (str, bool, int): Any input

    Returns:
        bool (bool): True if value in ("y", "yes", "t", "true", "on", "1")
    """
    if not value:
        return False
    return str(value).lower() in ("y", "yes", "t", "true", "on", "1")


def worker_count() -> int:
    """Number of Monte Carlo worker processes.

    `RANKSPEC_THREADS` caps the count; otherwise 80% of available cores are used.

    Raises:
        ArgumentError: `RANKSPEC_THREADS` is not a positive integer
    """
    default = max(1, int(np.floor(multiprocessing.cpu_count() * 0.8)))
    value = os.environ.get("RANKSPEC_THREADS")
    if value is None or value == "":
        return default
    try:
        cap = int(value)
    except ValueError:
        raise ArgumentError(f"RANKSPEC_THREADS must be a positive integer, got {value!r}")
    if cap < 1:
        raise ArgumentError(f"RANKSPEC_THREADS must be a positive integer, got {value!r}")
    return cap


def progress_enabled() -> bool:
    value = os.environ.get("RANKSPEC_PROGRESS")
    if value is None:
        return sys.stderr.isatty()
    return value_to_bool(value)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Normalize an int, SeedSequence or None into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return seed.bit_generator.seed_seq
    return np.random.SeedSequence(seed)


def make_rng(seed) -> np.random.Generator:
    """Generator for an explicit seed; Generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(as_seed_sequence(seed))


def spawn_seeds(seed, count: int) -> list:
    """Split `seed` into `count` independent child streams."""
    return as_seed_sequence(seed).spawn(count)


def run_replicates(func, seed, replicates: int, desc: str = None) -> list:
    """Evaluate `func(child_seed)` for every spawned child stream of `seed`.

    Results come back in replicate order whatever the worker count, so reducers that
    sum them in list order are bit-reproducible.

    Args:
        func (callable): picklable function of one SeedSequence
        seed (int or SeedSequence): master seed
        replicates (int): number of replicates
        desc (str): progress bar label

    Returns:
        list of per-replicate results
    """
    if replicates < 1:
        raise ArgumentError(f"replicates must be >= 1, got {replicates}")
    seeds = spawn_seeds(seed, replicates)
    processes = min(worker_count(), replicates)
    show = progress_enabled()
    logger.info(f"Running {replicates} replicate(s) of {desc} on {processes} worker(s)")
    if processes == 1:
        return [func(s) for s in tqdm(seeds, desc=desc, disable=not show)]
    with multiprocessing.Pool(processes=processes) as pool:
        return list(
            tqdm(
                pool.imap(func, seeds, chunksize=max(1, replicates // (4 * processes))),
                total=replicates,
                desc=desc,
                disable=not show,
            )
        )


def memoized_result(uniqueness_dict: dict, output_directory: str, load=None):
    """Decorator factory caching a run that writes its results into a directory.

    If the decorated function was already called with the same `uniqueness_dict` and
    the files in `output_directory` are unchanged since, the cached result is
    returned through `load(output_directory)` instead of calling the function again.

    Args:
        uniqueness_dict: a dictionary that identifies a unique function call
        output_directory: directory holding exclusively the files this call writes
        load: callable rebuilding the result from `output_directory`

    Returns: a decorator to enable a function call to reuse its written results
    """

    def decorator(func):
        def wrapped(*args, **kwargs):
            output_dir = _to_Path(output_directory)
            input_hash = dict_to_uuid(uniqueness_dict)
            input_hash_fp = output_dir / f".{input_hash}.json"
            if input_hash_fp.exists() and load is not None:
                with open(input_hash_fp, "r") as f:
                    meta = json.load(f)
                if str(_directory_state(output_dir, input_hash_fp)) == meta[
                    "output_dir_files_hash"
                ]:
                    logger.info(f"Existing results found, skip '{func.__name__}'")
                    return load(output_dir)
            logger.info(f"No existing results found, calling '{func.__name__}'")
            start_time = datetime.now(timezone.utc)
            results = func(*args, **kwargs)

            output_dir.mkdir(parents=True, exist_ok=True)
            meta = {
                "output_dir_files_hash": str(_directory_state(output_dir, input_hash_fp)),
                "start_time": start_time.isoformat(),
                "completion_time": datetime.now(timezone.utc).isoformat(),
            }
            with open(input_hash_fp, "w") as f:
                json.dump(meta, f)
            return results

        return wrapped

    return decorator


def _directory_state(output_dir: pathlib.Path, exclude: pathlib.Path) -> uuid.UUID:
    return dict_to_uuid(
        {
            f.relative_to(output_dir).as_posix(): f.stat().st_size
            for f in output_dir.rglob("*")
            if f.is_file() and f.name != exclude.name
        }
    )
