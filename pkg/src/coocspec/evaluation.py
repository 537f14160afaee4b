"""Ranking metrics and the cross-validated scenario driver.

Scenarios mirror the three ways of using the spectrum of ``X``:

* ``top_k``    keep the leading ``k`` singular triplets,
* ``drop_top`` keep the leading ``k`` but remove the dominant one,
* ``only_top`` keep the dominant triplet alone.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, InvalidParameterError
from .ingest import FoldSet, fold_views, kfold_split
from .recsys import recommend_all
from .sparse import InteractionMatrix
from .spectra import (
    SolverOptions,
    TruncatedSVD,
    keep_components,
    remove_components,
    truncated_svd,
)

NDCG_CONVENTION = "binary gain, 1/log2(rank+1) discount, IDCG over min(K, |relevant|)"


class FoldError(RuntimeError):
    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause


def _discounts(n):
    return 1.0 / np.log2(np.arange(2, n + 2))


def ndcg_at_k(ranked, relevant, K: int) -> float:
    if K < 1:
        raise InvalidParameterError("K must be >= 1")
    relevant = set(int(i) for i in relevant)
    if not relevant:
        return 0.0
    top = [int(i) for i in list(ranked)[:K]]
    disc = _discounts(K)
    dcg = sum(disc[r] for r, item in enumerate(top) if item in relevant)
    idcg = disc[:min(K, len(relevant))].sum()
    # summation order can push an ideal ranking a hair above 1
    return float(min(dcg / idcg, 1.0))


def recall_at_k(ranked, relevant, K: int) -> float:
    if K < 1:
        raise InvalidParameterError("K must be >= 1")
    relevant = set(int(i) for i in relevant)
    if not relevant:
        return 0.0
    hits = len(relevant.intersection(int(i) for i in list(ranked)[:K]))
    return hits / len(relevant)


def diversity_at_k(lists, K: int) -> int:
    """Distinct items over every user's top-K."""
    seen = set()
    for r in lists:
        items = r.items if hasattr(r, "items") else r
        seen.update(int(i) for i in list(items)[:K])
    return len(seen)


@dataclass(frozen=True)
class Scenario:
    kind: str
    k: int = 1

    KINDS = ("top_k", "drop_top", "only_top")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"scenario must be one of {self.KINDS}")
        if self.k < 1:
            raise InvalidParameterError("k must be >= 1")

    @classmethod
    def parse(cls, name: str, k: int = 1) -> "Scenario":
        return cls(name.replace("-", "_"), k)

    @property
    def dropped(self) -> tuple[int, ...]:
        if self.kind == "drop_top":
            return (1,)
        if self.kind == "only_top":
            return tuple(range(2, self.k + 1))
        return ()

    @property
    def effective_k(self) -> int:
        return {"top_k": self.k, "drop_top": self.k - 1, "only_top": 1}[self.kind]

    @property
    def label(self) -> str:
        tag = {"top_k": "(a)", "drop_top": "(b)", "only_top": "(c)"}[self.kind]
        return f"{tag}SVD(k={self.effective_k})"

    def apply(self, f: TruncatedSVD) -> TruncatedSVD:
        if self.kind == "top_k":
            return f
        if self.kind == "drop_top":
            return remove_components(f, {1})
        return keep_components(f, {1})


@dataclass
class FoldResult:
    fold: int
    ndcg: float
    recall: float
    diversity: int
    users_evaluated: int
    users_skipped: int
    seconds: float


@dataclass
class ReportRow:
    method: str
    k: int
    dropped: tuple
    ndcg: float
    recall: float
    diversity: float
    seconds: float
    folds: list = field(default_factory=list)

    def as_dict(self):
        d = asdict(self)
        d["dropped"] = list(self.dropped)
        return d


@dataclass
class EvalReport:
    rows: list
    K: int
    folds: int
    seed: int
    metadata: dict = field(default_factory=dict)


def evaluate_lists(lists, test, K):
    """Macro NDCG/Recall over users with held-out items, D@K over all lists.

    Users with held-out items but no list (empty training row) are skipped.
    """
    by_user = {r.user: r for r in lists}
    nd, rc, skipped = [], [], 0
    for u, held in enumerate(test):
        if len(held) == 0:
            continue
        r = by_user.get(u)
        if r is None:
            skipped += 1
            continue
        nd.append(ndcg_at_k(r.items, held, K))
        rc.append(recall_at_k(r.items, held, K))
    return (float(np.mean(nd)) if nd else 0.0, float(np.mean(rc)) if rc else 0.0,
            diversity_at_k(lists, K), len(nd), skipped)


def _factor_rank(scenario: Scenario) -> int:
    return scenario.k


def run_fold(X, fs: FoldSet, fold: int, scenario: Scenario, K: int, opts: SolverOptions,
             exclude_train=True, factors: TruncatedSVD | None = None, threads: int = 1) -> FoldResult:
    t0 = time.perf_counter()
    train, test = fold_views(X, fs, fold)
    try:
        if factors is None:
            factors = truncated_svd(train, _factor_rank(scenario), opts)
        model = scenario.apply(factors)
    except ConvergenceError as exc:
        raise FoldError(fold, exc) from exc
    lists = recommend_all(model, train, K, exclude_train=exclude_train, threads=threads)
    nd, rc, dk, n_eval, skipped = evaluate_lists(lists, test, K)
    return FoldResult(fold, nd, rc, dk, n_eval, skipped, time.perf_counter() - t0)


def run_experiment(X: InteractionMatrix, scenario: Scenario, K: int = 50, folds: int = 5,
                   seed: int = 0, opts: SolverOptions | None = None, exclude_train: bool = True,
                   factor_provider=None, threads: int = 1) -> ReportRow:
    """Cross-validate one scenario; metrics are fold means, time is the total.

    ``factor_provider(fold)`` may supply precomputed training factors (for
    example from serialized runs); otherwise each fold is factorized here.
    With ``threads > 1`` folds run concurrently and produce the same row.
    """
    if K < 1:
        raise InvalidParameterError("K must be >= 1")
    opts = opts or SolverOptions(seed=seed)
    fs = kfold_split(X, folds, seed)

    def one(fold):
        fac = factor_provider(fold) if factor_provider is not None else None
        return run_fold(X, fs, fold, scenario, K, opts, exclude_train, fac)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(folds)))
    else:
        results = [one(f) for f in range(folds)]
    return ReportRow(
        method=scenario.label, k=scenario.effective_k, dropped=scenario.dropped,
        ndcg=float(np.mean([r.ndcg for r in results])),
        recall=float(np.mean([r.recall for r in results])),
        diversity=float(np.mean([r.diversity for r in results])),
        seconds=float(sum(r.seconds for r in results)),
        folds=results,
    )


def run_table(X, scenarios, K=50, folds=5, seed=0, opts=None, exclude_train=True,
              threads=1, metadata=None) -> EvalReport:
    """Run several scenarios, factorizing each (fold, rank) pair only once.

    Reused factorizations are charged to the first scenario that needed them.
    """
    opts = opts or SolverOptions(seed=seed)
    fs = kfold_split(X, folds, seed)
    cache = {}
    rows = []
    for sc in scenarios:
        def provider(fold, sc=sc):
            key = (fold, _factor_rank(sc))
            if key not in cache:
                train, _ = fold_views(X, fs, fold)
                try:
                    cache[key] = truncated_svd(train, key[1], opts)
                except ConvergenceError as exc:
                    raise FoldError(fold, exc) from exc
            return cache[key]
        rows.append(run_experiment(X, sc, K, folds, seed, opts, exclude_train, provider, threads))
    meta = {"seed": seed, "solver": asdict(opts), "exclude_train": exclude_train,
            "ndcg": NDCG_CONVENTION, "metric_averaging": "macro over users with held-out items",
            "diversity_across_folds": "mean of per-fold D@K"}
    meta.update(metadata or {})
    return EvalReport(rows, K, folds, seed, meta)


def table_columns(K: int) -> list[str]:
    return ["Method", f"NDCG@{K}", f"Recall@{K}", f"D@{K}", "Time(min.)"]


def _fmt_d(d):
    return str(int(d)) if float(d).is_integer() else f"{d:.1f}"


def table_report(report: EvalReport) -> tuple[str, str]:
    """Aligned text table and CSV, both with the columns of ``table_columns``."""
    cols = table_columns(report.K)
    body = [[r.method, f"{r.ndcg:.5f}", f"{r.recall:.5f}", _fmt_d(r.diversity),
             f"{r.seconds / 60:.1f}"] for r in report.rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in report.rows:
        w.writerow([r.method, repr(r.ndcg), repr(r.recall), repr(r.diversity), repr(r.seconds / 60)])
    return "\n".join(lines) + "\n", buf.getvalue()


def read_table_csv(text: str) -> list[dict]:
    rdr = csv.reader(io.StringIO(text))
    header = next(rdr)
    out = []
    for row in rdr:
        d = dict(zip(header, row))
        for key in header[1:]:
            d[key] = float(d[key])
        out.append(d)
    return out

