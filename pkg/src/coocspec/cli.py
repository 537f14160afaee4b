"""Command line front end: ingest, spectrum, factorize, recommend, evaluate.

Exit status: 0 success, 1 runtime/convergence failure, 2 usage or input error.
Options may come from a JSON ``--config`` file; explicit flags override it.
Every command that writes output drops a ``manifest.json`` with the resolved
configuration next to its files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


from . import rmt, synthetic
from .errors import ConvergenceError, EmptyModelError, FitError, InvalidParameterError
from .evaluation import FoldError, Scenario, run_table, table_report
from .ingest import binarize, default_data_dir, fold_views, kfold_split, load_ratings
from .recsys import (
    PopularityTable,
    popularity_overlay,
    recommend_all,
    write_lists_csv,
    write_overlay_csv,
)
from .spectra import (
    SolverOptions,
    dump_component,
    fix_signs,
    load_factors,
    save_factors,
    truncated_svd,
)

log = logging.getLogger("coocspec")

KNOWN_FILES = ("ratings.csv", "ratings.dat", "u.data")
SCENARIOS = ("top-k", "drop-top", "only-top")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    format: str | None = None
    threshold: float = 0.0
    k: int = 20
    scenarios: list = field(default_factory=lambda: list(SCENARIOS))
    cutoff: int = 50
    folds: int = 5
    seed: int = 0
    tolerance: float = 1e-8
    max_iterations: int = 1000
    subspace_dim: int | None = None
    exclude_train: bool = True
    threads: int = 1
    out: str = "runs/latest"

    def validate(self):
        if self.k < 1:
            raise UsageError("--k must be >= 1")
        if self.folds < 2:
            raise UsageError("--folds must be >= 2")
        if self.cutoff < 1:
            raise UsageError("-K/--cutoff must be >= 1")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad:
            raise UsageError(f"unknown scenario(s) {bad}; choose from {SCENARIOS}")

    def solver(self) -> SolverOptions:
        return SolverOptions(self.tolerance, self.max_iterations, self.subspace_dim, self.seed)


def resolve_dataset(name) -> Path:
    """A file, a directory holding a MovieLens file, or either relative to the data dir."""
    if name is None:
        raise UsageError("no dataset given (--data)")
    for cand in (Path(name), default_data_dir() / name):
        if cand.is_file():
            return cand
        if cand.is_dir():
            for f in KNOWN_FILES:
                if (cand / f).is_file():
                    return cand / f
    raise UsageError(f"dataset {name!r} not found (data dir: {default_data_dir()})")


def _config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        names = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - names
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        for key, val in raw.items():
            setattr(cfg, key, val)
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(cfg, f.name, val)
    cfg.validate()
    return cfg


def _outdir(cfg, command, extra=None) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": asdict(cfg)}
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    return out


def _load(cfg):
    path = resolve_dataset(cfg.dataset)
    X, maps = binarize(load_ratings(path, cfg.format), cfg.threshold)
    return X, maps, path


def _summary(X, path=None):
    n, m = X.shape
    return {"path": None if path is None else str(path), "n": n, "m": m, "nnz": X.nnz,
            "density": X.nnz / (n * m), "q": m / n}


def cmd_ingest(args):
    cfg = _config(args)
    X, _, path = _load(cfg)
    s = _summary(X, path)
    print(f"users n={s['n']}  items m={s['m']}  nnz={s['nnz']}  density={s['density']:.6f}  q=m/n={s['q']:.6f}")
    if args.write:
        out = _outdir(cfg, "ingest")
        (out / "summary.json").write_text(json.dumps(s, indent=2))
    return 0


def cmd_spectrum(args):
    cfg = _config(args)
    if args.synthetic:
        X = synthetic.from_spec(args.synthetic, cfg.seed)
        source = {"synthetic": args.synthetic}
    else:
        X, _, path = _load(cfg)
        source = _summary(X, path)
    if args.mode == "full":
        s = rmt.covariance_spectrum(X, "full_dense")
    else:
        s = rmt.covariance_spectrum(X, "top_k", k=args.top, opts=cfg.solver())
    out = _outdir(cfg, "spectrum", {"source": source})
    result = {"q": s.q, "n_samples": s.n_samples, "n_variables": s.n_variables,
              "transposed": s.transposed, "complete": s.complete,
              "top_eigenvalues": s.eigenvalues[:10].tolist()}
    if s.complete:
        model = rmt.fit_sigma2(s)
        h = rmt.spectrum_histogram(s, args.bins, model, include_zeros=args.include_zeros)
        rmt.write_histogram_csv(out / "histogram.csv", h)
        rank = rmt.noise_rank(s, model, args.edge_buffer)
        result.update(model=model.as_dict(), noise_rank=rank, edge_buffer=args.edge_buffer,
                      mass_outside_bulk=rmt.mass_outside_bulk(s, model),
                      histogram_l1=h.l1_distance(), overflow=h.overflow.tolist())
    else:
        model = rmt.MPModel(s.q, args.sigma2) if args.sigma2 else None
        if model is not None:
            result.update(model=model.as_dict(), noise_rank=rmt.noise_rank(s, model, args.edge_buffer))
    rmt.write_spectrum_csv(out / "spectrum.csv", s, model)
    (out / "spectrum.json").write_text(json.dumps(result, indent=2))
    print(f"q={s.q:.6f}  (n_samples={s.n_samples}, n_variables={s.n_variables})")
    if model is not None:
        print(f"sigma2={model.sigma2:.6g}  bulk=[{model.lambda_minus:.6g}, {model.lambda_plus:.6g}]")
        print(f"noise_rank={result['noise_rank']}  lambda_1={s.eigenvalues[0]:.6g}")
    return 0


def _train_matrix(cfg, X, fold):
    if fold is None:
        return X
    fs = kfold_split(X, cfg.folds, cfg.seed)
    return fold_views(X, fs, fold)[0]


def cmd_factorize(args):
    cfg = _config(args)
    X, maps, path = _load(cfg)
    folds = range(cfg.folds) if args.all_folds else [args.fold]
    out = _outdir(cfg, "factorize", {"dataset": _summary(X, path)})
    for fold in folds:
        train = _train_matrix(cfg, X, fold)
        f = fix_signs(truncated_svd(train, cfg.k, cfg.solver()))
        stem = "factors" if fold is None else f"factors_fold{fold}"
        save_factors(f, out / stem, {"fold": fold, "folds": cfg.folds, "split_seed": cfg.seed,
                                     "threshold": cfg.threshold, "dataset": str(path)})
        _write_components(out / f"{stem}_components.csv", f, args.bulk_component)
        print(f"{stem}: k={f.k} sigma_1={f.sigma[0]:.6g} sigma_k={f.sigma[-1]:.6g} "
              f"max residual={f.residuals.max():.2e} restarts={f.iterations}")
    return 0


def _write_components(path, f, bulk_component):
    j = min(bulk_component or f.k, f.k)
    with open(path, "w") as fh:
        fh.write(f"side,index,v_h,component_{j}\n")
        for side in ("user", "item"):
            top = dump_component(f, 1, side)
            other = dump_component(f, j, side)
            for (i, a), (_, b) in zip(top, other):
                fh.write(f"{side},{i},{a:.12g},{b:.12g}\n")


def _factors_for(cfg, args, X, fold=None):
    if args.factors:
        f, info = load_factors(args.factors)
        if (f.n, f.m) != X.shape:
            raise UsageError(f"factors are {f.n}x{f.m} but the dataset is {X.shape[0]}x{X.shape[1]}")
        return f
    return fix_signs(truncated_svd(_train_matrix(cfg, X, fold), cfg.k, cfg.solver()))


def cmd_recommend(args):
    cfg = _config(args)
    X, maps, path = _load(cfg)
    train = _train_matrix(cfg, X, args.fold)
    f = _factors_for(cfg, args, X, args.fold)
    out = _outdir(cfg, "recommend", {"dataset": _summary(X, path)})
    lists = {}
    for name in cfg.scenarios:
        sc = Scenario.parse(name, f.k)
        lists[name] = recommend_all(sc.apply(f), train, cfg.cutoff, cfg.exclude_train,
                                    threads=cfg.threads)
        write_lists_csv(out / f"recs_{sc.kind}.csv", lists[name], maps.item_ids, maps.user_ids)
        n_items = len({int(i) for r in lists[name] for i in r.items})
        print(f"{sc.label}: {len(lists[name])} users, D@{cfg.cutoff}={n_items}")
    if all(s in lists for s in SCENARIOS):
        rows = popularity_overlay(lists["top-k"], lists["drop-top"], lists["only-top"],
                                  PopularityTable.from_matrix(train))
        write_overlay_csv(out / "popularity_overlay.csv", rows, maps.item_ids)
    return 0


def cmd_evaluate(args):
    cfg = _config(args)
    X, maps, path = _load(cfg)
    scenarios = [Scenario.parse(s, cfg.k) for s in cfg.scenarios]
    provider = None
    if args.factors_dir:
        fdir = Path(args.factors_dir)

        def provider(fold):
            f, info = load_factors(fdir / f"factors_fold{fold}")
            if (info.get("folds"), info.get("split_seed"), f.k, (f.n, f.m)) != (
                    cfg.folds, cfg.seed, cfg.k, X.shape):
                raise UsageError(f"{fdir}: factors do not match this dataset, k or fold layout")
            return f
    meta = {"dataset": _summary(X, path), "threshold": cfg.threshold}
    if provider is None:
        report = run_table(X, scenarios, cfg.cutoff, cfg.folds, cfg.seed, cfg.solver(),
                           cfg.exclude_train, cfg.threads, meta)
    else:
        from .evaluation import EvalReport, NDCG_CONVENTION, run_experiment

        rows = [run_experiment(X, sc, cfg.cutoff, cfg.folds, cfg.seed, cfg.solver(),
                               cfg.exclude_train, provider, cfg.threads) for sc in scenarios]
        meta.update(seed=cfg.seed, solver=asdict(cfg.solver()), exclude_train=cfg.exclude_train,
                    ndcg=NDCG_CONVENTION, factors_dir=str(args.factors_dir))
        report = EvalReport(rows, cfg.cutoff, cfg.folds, cfg.seed, meta)
    text, csv_text = table_report(report)
    out = _outdir(cfg, "evaluate")
    (out / "table.txt").write_text(text)
    (out / "table.csv").write_text(csv_text)
    (out / "report.json").write_text(json.dumps(
        {"K": report.K, "folds": report.folds, "seed": report.seed, "metadata": report.metadata,
         "rows": [r.as_dict() for r in report.rows]}, indent=2, default=str))
    print(text, end="")
    return 0


def _add_common(p, data=True):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    if data:
        p.add_argument("--data", dest="dataset", help="ratings file or dataset directory")
        p.add_argument("--format", choices=["csv_with_header", "tab_separated", "double_colon"])
        p.add_argument("--threshold", type=float, help="binarization threshold (default 0)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default runs/latest)")
    p.add_argument("--threads", type=int)
    p.add_argument("--tol", dest="tolerance", type=float)
    p.add_argument("--max-iter", dest="max_iterations", type=int)
    p.add_argument("--subspace-dim", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="coocspec", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, binarize and summarize a ratings file")
    _add_common(p)
    p.add_argument("--write", action="store_true", help="also write summary.json")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("spectrum", help="MP fit, noise rank and histogram data")
    _add_common(p)
    p.add_argument("--synthetic", help="gaussian:NxM or bernoulli:NxM:P instead of --data")
    p.add_argument("--mode", choices=["full", "top-k"], default="full")
    p.add_argument("--top", type=int, default=50, help="eigenvalues for --mode top-k")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--edge-buffer", type=float, default=0.0,
                   help="relative margin above lambda_plus before counting signal")
    p.add_argument("--include-zeros", action="store_true")
    p.add_argument("--sigma2", type=float, help="fixed MP scale for --mode top-k")
    p.set_defaults(func=cmd_spectrum)

    for name, func, hlp in (("factorize", cmd_factorize, "truncated SVD to disk"),
                            ("recommend", cmd_recommend, "top-N lists per scenario"),
                            ("evaluate", cmd_evaluate, "cross-validated metric table")):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        p.add_argument("--k", type=int)
        p.add_argument("--folds", type=int)
        if name != "factorize":
            p.add_argument("--scenario", dest="scenarios", action="append", choices=SCENARIOS)
            p.add_argument("-K", "--cutoff", type=int)
            p.add_argument("--no-exclude", dest="exclude_train", action="store_const", const=False)
        if name == "factorize":
            p.add_argument("--fold", type=int, help="factorize the training part of this fold")
            p.add_argument("--all-folds", action="store_true")
            p.add_argument("--bulk-component", type=int, help="second component written next to v_H")
        if name == "recommend":
            p.add_argument("--fold", type=int)
            p.add_argument("--factors", help="factor file stem written by factorize")
        if name == "evaluate":
            p.add_argument("--factors-dir", help="directory with factors_fold<i> from factorize --all-folds")
        p.set_defaults(func=func)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConvergenceError, FoldError, FitError, EmptyModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
