#!/usr/bin/env python
"""Materialize MovieLens 100K as ``data/ml-100k/u.data``.

GroupLens is not always reachable, so this pulls the copy bundled inside
the ``pytorch-widedeep`` wheel from the package index and rewrites it in
the original tab-separated ``user item rating timestamp`` layout.
"""
from __future__ import annotations

import argparse
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL = "pytorch-widedeep==1.7.0"
MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/ml-100k/u.data")
    args = parser.parse_args()

    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", WHEEL, "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            frame = pd.read_parquet(io.BytesIO(zf.read(MEMBER)))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame[["user_id", "movie_id", "rating", "timestamp"]].to_csv(
        out, sep="\t", header=False, index=False
    )
    print(f"wrote {len(frame)} ratings to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
