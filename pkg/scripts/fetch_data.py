#!/usr/bin/env python3
"""Fetch the benchmark data used by the acceptance suite into ``data/``.

Sources are files bundled inside PyPI wheels, so only a package index is
needed:

* ``mlxtend`` ships a 5,000-image MNIST sample (500 per digit). It is written
  out as an IDX pair ``mnist5k-images-idx3-ubyte`` / ``mnist5k-labels-idx1-ubyte``.
* ``keel-ds`` ships the 20,000-row UCI LETTER table, written as ``letter.csv``
  (16 integer features, letter label in the last column).
"""
from __future__ import annotations

import argparse
import gzip
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from hwforest.dataset import write_idx  # noqa: E402

MNIST_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
LETTER_MEMBER = "keel_ds/data/balanced/raw/letter.dat"


def _wheel(package: str, workdir: Path) -> Path:
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q",
                    "-d", str(workdir), package], check=True)
    return next(workdir.glob(f"{package.replace('-', '_')}-*.whl"))


def fetch(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        if not (out / "mnist5k-images-idx3-ubyte").exists():
            raw = gzip.decompress(zipfile.ZipFile(_wheel("mlxtend", tmp)).read(MNIST_MEMBER))
            table = np.loadtxt(raw.decode().splitlines(), delimiter=",", dtype=np.int64)
            write_idx(table[:, :-1].reshape(-1, 28, 28), table[:, -1],
                      out / "mnist5k-images-idx3-ubyte", out / "mnist5k-labels-idx1-ubyte")
            print(f"wrote {len(table)} MNIST images")
        if not (out / "letter.csv").exists():
            raw = zipfile.ZipFile(_wheel("keel-ds", tmp)).read(LETTER_MEMBER).decode()
            rows = [r for r in raw.splitlines() if r and not r.startswith("@")]
            header = ",".join([f"x{i}" for i in range(1, 17)] + ["letter"])
            (out / "letter.csv").write_text(header + "\n" + "\n".join(rows) + "\n")
            print(f"wrote {len(rows)} LETTER rows")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "data")
    fetch(ap.parse_args().out)


if __name__ == "__main__":
    main()
