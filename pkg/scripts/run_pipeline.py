"""Full pipeline on one dataset: spectrum histogram, v_H components, scenario table, popularity overlay.

    python scripts/run_pipeline.py --data ml-1m --out runs/ml-1m
    python scripts/run_pipeline.py --data ml-100k --sweep 5 10 20 40

Everything goes through the ``coocspec`` command line so the outputs carry the
usual manifests.
"""

import argparse
import json
import sys
from pathlib import Path

from coocspec.cli import main as cli


def step(argv):
    print("$ coocspec " + " ".join(argv), flush=True)
    code = cli(argv)
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="ml-1m")
    ap.add_argument("--out", default=None)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("-K", "--cutoff", type=int, default=50)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--sweep", type=int, nargs="*", help="extra k values for an NDCG / D@K sweep")
    args = ap.parse_args()
    out = Path(args.out or f"runs/{Path(args.data).name}")
    common = ["--data", args.data, "--seed", str(args.seed), "--threads", str(args.threads)]

    step(["ingest", *common, "--write", "--out", str(out / "ingest")])
    step(["spectrum", *common, "--out", str(out / "spectrum")])
    step(["factorize", *common, "--k", str(args.k), "--out", str(out / "components")])
    step(["recommend", *common, "--k", str(args.k), "-K", str(args.cutoff), "--out", str(out / "overlay")])
    step(["evaluate", *common, "--k", str(args.k), "-K", str(args.cutoff), "--folds", str(args.folds),
          "--out", str(out / "table")])

    sweep = {}
    for k in args.sweep or []:
        d = out / f"sweep_k{k}"
        step(["evaluate", *common, "--k", str(k), "-K", str(args.cutoff), "--folds", str(args.folds),
              "--scenario", "top-k", "--scenario", "drop-top", "--out", str(d)])
        rows = json.loads((d / "report.json").read_text())["rows"]
        sweep[k] = {r["method"]: {"ndcg": r["ndcg"], "diversity": r["diversity"]} for r in rows}
    if sweep:
        (out / "sweep.json").write_text(json.dumps(sweep, indent=2))
        for k, rows in sweep.items():
            print(k, "  ".join(f"{m}: NDCG={v['ndcg']:.4f} D={v['diversity']:.0f}" for m, v in rows.items()))


if __name__ == "__main__":
    main()
