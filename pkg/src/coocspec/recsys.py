"""Top-N recommendation from truncated-SVD factors and popularity bookkeeping."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .sparse import InteractionMatrix, column_counts
from .spectra import TruncatedSVD


@dataclass(frozen=True, eq=False)
class RecommendationList:
    user: int
    items: np.ndarray
    scores: np.ndarray
    short: bool = False  # fewer than N rankable items

    def __len__(self):
        return int(self.items.shape[0])

    def __eq__(self, other):
        if not isinstance(other, RecommendationList):
            return NotImplemented
        return (self.user == other.user and self.short == other.short
                and np.array_equal(self.items, other.items)
                and np.array_equal(self.scores, other.scores))

    __hash__ = None


def score_user(f: TruncatedSVD, u: int) -> np.ndarray:
    """Row ``u`` of ``U diag(sigma) V^T``."""
    if not 0 <= u < f.n:
        raise InvalidParameterError(f"user {u} outside [0, {f.n})")
    U, sigma, V = _active(f)
    return V @ (U[u] * sigma)


def top_n(scores, N: int, exclude=(), user: int = -1) -> RecommendationList:
    """The ``N`` best non-excluded items; equal scores go to the lower item index."""
    if N < 1:
        raise InvalidParameterError("N must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    if np.any(np.isnan(scores)):
        raise InvalidParameterError("NaN score")
    mask = np.ones(scores.shape[0], dtype=bool)
    ex = np.fromiter(exclude, dtype=np.int64) if not isinstance(exclude, np.ndarray) else exclude
    mask[ex] = False
    cand = np.flatnonzero(mask)
    if cand.size > N:
        s = scores[cand]
        # threshold = N-th largest; everything at or above it is a candidate
        thr = np.partition(s, s.size - N)[s.size - N]
        cand = cand[s >= thr]
    # stable sort on -score keeps ascending item index among ties
    order = np.argsort(-scores[cand], kind="stable")[:N]
    items = cand[order]
    return RecommendationList(user, items, scores[items], short=items.size < N)


def _check_dims(f: TruncatedSVD, X_train: InteractionMatrix):
    if f.n != X_train.n_rows or f.m != X_train.n_cols:
        raise InvalidParameterError(
            f"factors are {f.n}x{f.m} but training data is {X_train.n_rows}x{X_train.n_cols}")


def _active(f: TruncatedSVD):
    # zero-sigma columns contribute nothing; pruning them keeps zeroed and dropped
    # components bit-identical under BLAS reordering
    keep = f.sigma != 0
    if keep.all():
        return f.U, f.sigma, f.V
    return f.U[:, keep], f.sigma[keep], f.V[:, keep]


def _block(f, X_train, users, N, exclude_train):
    U, sigma, V = _active(f)
    S = (U[users] * sigma) @ V.T
    out = []
    for row, u in zip(S, users):
        ex = X_train.row(u) if exclude_train else ()
        out.append(top_n(row, N, ex, user=int(u)))
    return out


def recommend_all(f: TruncatedSVD, X_train: InteractionMatrix, N: int, exclude_train: bool = True,
                  users=None, threads: int = 1, block_size: int = 512) -> list[RecommendationList]:
    """One list per user with at least one training interaction, in user order.

    Scores are built ``block_size`` users at a time, never for the full matrix.
    With ``threads > 1`` blocks run concurrently; the output is identical.
    """
    _check_dims(f, X_train)
    if N < 1:
        raise InvalidParameterError("N must be >= 1")
    if users is None:
        users = np.flatnonzero(X_train.row_counts() > 0)
    users = np.asarray(users, dtype=np.int64)
    blocks = [users[i:i + block_size] for i in range(0, users.size, block_size)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda b: _block(f, X_train, b, N, exclude_train), blocks))
    else:
        parts = [_block(f, X_train, b, N, exclude_train) for b in blocks]
    return [r for part in parts for r in part]


@dataclass(frozen=True)
class PopularityTable:
    counts: np.ndarray

    @classmethod
    def from_matrix(cls, X: InteractionMatrix) -> "PopularityTable":
        return cls(column_counts(X))

    def quantile(self, p):
        return np.quantile(self.counts, p)

    @property
    def median(self) -> float:
        return float(np.median(self.counts))


@dataclass(frozen=True)
class OverlayRow:
    item: int
    popularity: int
    in_a: bool
    in_b: bool
    in_c: bool


def recommended_items(lists) -> set[int]:
    return {int(i) for r in lists for i in r.items}


def popularity_overlay(lists_a, lists_b, lists_c, pop: PopularityTable) -> list[OverlayRow]:
    """Every item recommended under any scenario with its popularity and membership flags,
    sorted by descending popularity then item index."""
    a, b, c = recommended_items(lists_a), recommended_items(lists_b), recommended_items(lists_c)
    rows = [OverlayRow(i, int(pop.counts[i]), i in a, i in b, i in c) for i in a | b | c]
    rows.sort(key=lambda r: (-r.popularity, r.item))
    return rows


def write_lists_csv(path, lists, item_ids=None, user_ids=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "rank", "item", "score"])
        for r in lists:
            u = r.user if user_ids is None else int(user_ids[r.user])
            for rank, (i, s) in enumerate(zip(r.items, r.scores), start=1):
                w.writerow([u, rank, int(i) if item_ids is None else int(item_ids[i]), f"{s:.12g}"])


def write_overlay_csv(path, rows, item_ids=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item", "popularity", "in_a", "in_b", "in_c"])
        for r in rows:
            item = r.item if item_ids is None else int(item_ids[r.item])
            w.writerow([item, r.popularity, int(r.in_a), int(r.in_b), int(r.in_c)])
