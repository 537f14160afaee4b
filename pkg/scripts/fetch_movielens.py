"""Materialize MovieLens-100K as ``<data_dir>/ml-100k/u.data``.

GroupLens is not reachable from every build host.  The ``pytorch-widedeep``
wheel on PyPI ships the unmodified ML-100K ratings table as parquet, so this
script pulls that wheel (no install, no dependencies) and writes the rows back
out in the original tab-separated ``u.data`` layout.

MovieLens-1M / 20M have no equivalent mirror; place ``ml-1m/ratings.dat`` or
``ml-20m/ratings.csv`` under the data directory by hand.
"""

import argparse
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

from coocspec.ingest import default_data_dir

WHEEL = "pytorch-widedeep==1.7.0"
MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", type=Path, default=default_data_dir())
    args = ap.parse_args(argv)

    out = args.data_dir / "ml-100k" / "u.data"
    if out.exists():
        print(f"{out} already present")
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, WHEEL],
            check=True,
        )
        wheel = next(Path(tmp).glob("*.whl"))
        with zipfile.ZipFile(wheel) as z:
            df = pd.read_parquet(io.BytesIO(z.read(MEMBER)))
    df = df[["user_id", "movie_id", "rating", "timestamp"]]
    if len(df) != 100_000:
        raise SystemExit(f"unexpected row count {len(df)}")
    out.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out, sep="\t", header=False, index=False)
    print(f"wrote {len(df)} ratings to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
