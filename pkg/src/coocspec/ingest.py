"""Rating-file loading, binarization, id remapping and per-user k-fold splits."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidParameterError
from .sparse import InteractionMatrix, select_entries

DATA_DIR_ENV = "COOCSPEC_DATA_DIR"

FORMATS = ("csv_with_header", "tab_separated", "double_colon")


class ParseError(ValueError):
    def __init__(self, path, line_no, line, reason):
        self.path, self.line_no, self.line = path, line_no, line
        super().__init__(f"{path}:{line_no}: {reason}: {line!r}")


class EmptyDatasetError(ValueError):
    pass


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data"


@dataclass(frozen=True)
class RatingSet:
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray

    def __len__(self):
        return int(self.users.shape[0])

    @property
    def records(self):
        return list(zip(self.users.tolist(), self.items.tolist(),
                        self.ratings.tolist(), self.timestamps.tolist()))

    @classmethod
    def from_records(cls, records) -> "RatingSet":
        recs = list(records)
        if not recs:
            return cls(*(np.empty(0, dtype=d) for d in (np.int64, np.int64, np.float64, np.int64)))
        cols = list(zip(*[(r + (0,))[:4] for r in recs]))
        return cls(np.asarray(cols[0], dtype=np.int64), np.asarray(cols[1], dtype=np.int64),
                   np.asarray(cols[2], dtype=np.float64), np.asarray(cols[3], dtype=np.int64))


@dataclass(frozen=True)
class IdMaps:
    """Dense index <-> external id.  ``user_ids[i]`` is the external id of row ``i``."""

    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def user_map(self) -> dict:
        return {int(u): i for i, u in enumerate(self.user_ids)}

    @property
    def item_map(self) -> dict:
        return {int(t): j for j, t in enumerate(self.item_ids)}


@dataclass(frozen=True)
class FoldSet:
    """Per-interaction fold labels, aligned with the CSR entry order of the split matrix.

    ``exempt`` marks interactions of users with fewer than ``folds`` interactions;
    those stay in training for every fold.
    """

    folds: int
    assignment: np.ndarray
    exempt: np.ndarray
    seed: int


def guess_format(path) -> str:
    name = Path(path).name
    if name.endswith(".dat"):
        return "double_colon"
    if name.endswith(".csv"):
        return "csv_with_header"
    return "tab_separated"


def _split_line(line, fmt):
    if fmt == "csv_with_header":
        return next(csv.reader([line]))
    if fmt == "double_colon":
        return line.split("::")
    return line.split("\t")


def _parse_row(fields):
    if len(fields) not in (3, 4):
        raise ValueError(f"expected 4 fields, got {len(fields)}")
    u, i, r = int(fields[0]), int(fields[1]), float(fields[2])
    t = int(fields[3]) if len(fields) == 4 else 0
    if not np.isfinite(r):
        raise ValueError("non-finite rating")
    return u, i, r, t


def _scan(path, fmt):
    """Line-by-line parse; slow, but pinpoints the first bad line."""
    recs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if fmt == "csv_with_header" and no == 1:
                continue
            if not line.strip():
                continue
            try:
                recs.append(_parse_row(_split_line(line, fmt)))
            except (ValueError, StopIteration) as exc:
                raise ParseError(path, no, line, str(exc)) from None
    return recs


def load_ratings(path, format: str | None = None) -> RatingSet:
    """Read a MovieLens ``ratings.csv`` / ``u.data`` / ``ratings.dat`` file."""
    fmt = format or guess_format(path)
    if fmt not in FORMATS:
        raise InvalidParameterError(f"unknown format {fmt!r}; choose from {FORMATS}")
    sep = {"csv_with_header": ",", "tab_separated": "\t", "double_colon": "::"}[fmt]
    try:
        df = pd.read_csv(
            path, sep=sep, header=0 if fmt == "csv_with_header" else None,
            engine="python" if fmt == "double_colon" else "c",
            usecols=[0, 1, 2, 3], names=["u", "i", "r", "t"],
            dtype={"u": np.int64, "i": np.int64, "r": np.float64, "t": np.int64},
            skip_blank_lines=True,
        )
        ok = len(df) == 0 or np.all(np.isfinite(df["r"].to_numpy()))
    except (ValueError, pd.errors.ParserError, TypeError):
        ok = False
    if not ok:
        # pandas failed or produced junk: rescan to report the offending line
        recs = _scan(path, fmt)
        rs = RatingSet.from_records(recs)
    else:
        rs = RatingSet(df["u"].to_numpy(), df["i"].to_numpy(), df["r"].to_numpy(), df["t"].to_numpy())
    if len(rs) == 0:
        raise EmptyDatasetError(f"{path}: no rating records")
    return rs


def binarize(r: RatingSet, threshold: float = 0.0) -> tuple[InteractionMatrix, IdMaps]:
    """Keep (user, item) pairs having some rating >= threshold; drop ids left with nothing."""
    if not np.isfinite(threshold):
        raise InvalidParameterError("threshold must be finite")
    keep = r.ratings >= threshold
    if not np.any(keep):
        raise EmptyDatasetError("every interaction was filtered out")
    user_ids, rows = np.unique(r.users[keep], return_inverse=True)
    item_ids, cols = np.unique(r.items[keep], return_inverse=True)
    X = InteractionMatrix.from_coo(rows, cols, (user_ids.size, item_ids.size))
    return X, IdMaps(user_ids, item_ids)


def as_ratings(X: InteractionMatrix, maps: IdMaps) -> RatingSet:
    """Inverse view of :func:`binarize` (every rating 1.0, timestamp 0)."""
    return RatingSet(maps.user_ids[X.row_ids], maps.item_ids[X.col_indices],
                     X.values.copy(), np.zeros(X.nnz, dtype=np.int64))


def kfold_split(X: InteractionMatrix, folds: int = 5, seed: int = 0) -> FoldSet:
    """Randomly partition each user's interactions into ``folds`` groups of near-equal size."""
    if folds < 2:
        raise InvalidParameterError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    rows = X.row_ids
    counts = X.row_counts()
    # random order within each row -> rank of every entry inside its row's shuffle
    order = np.lexsort((rng.random(X.nnz), rows))
    rank = np.empty(X.nnz, dtype=np.int64)
    rank[order] = np.arange(X.nnz) - X.row_offsets[rows[order]]
    # random per-user offset so remainders do not always land in the low folds
    offset = rng.integers(0, folds, size=X.n_rows)
    assignment = (rank + offset[rows]) % folds
    exempt = counts[rows] < folds
    assignment.setflags(write=False)
    exempt.setflags(write=False)
    return FoldSet(folds, assignment, exempt, seed)


def fold_views(X: InteractionMatrix, fs: FoldSet, test_fold: int) -> tuple[InteractionMatrix, list]:
    """Training matrix (same shape as X) and per-user held-out item index arrays."""
    if not 0 <= test_fold < fs.folds:
        raise InvalidParameterError(f"test_fold {test_fold} outside [0, {fs.folds})")
    if fs.assignment.shape != (X.nnz,):
        raise InvalidParameterError("fold set does not match this matrix")
    held = (fs.assignment == test_fold) & ~fs.exempt
    train = select_entries(X, ~held)
    bounds = np.searchsorted(X.row_ids[held], np.arange(X.n_rows + 1))
    cols = X.col_indices[held]
    test = [cols[bounds[i]:bounds[i + 1]] for i in range(X.n_rows)]
    return train, test


def load_interactions(path, format=None, threshold=0.0):
    return binarize(load_ratings(path, format), threshold)
