#!/usr/bin/env python3
"""Fetch the ionosphere / satellite / letter benchmark datasets and convert
them into the CSV layout the CLI and the acceptance gate expect.

The canonical distribution is the ODDS collection (.mat files with an `X`
feature matrix and a `y` outlier indicator, 1 = anomaly). This script either
downloads those files (NEEDS NETWORK ACCESS) or converts local copies:

    python3 tools/fetch_datasets.py                   # download into data/
    python3 tools/fetch_datasets.py --mat-dir ~/mats  # convert local .mat files

Output: data/<name>.csv, one sample per row, feature columns followed by a
trailing 0/1 label, no header -- exactly what `wvad prepare --input` and the
acceptance binary read.

If the download mirrors have moved (university hosting does that), download
ionosphere.mat, satellite.mat and letter.mat manually from the ODDS site and
re-run with --mat-dir pointing at them.
"""

import argparse
import io
import sys
import urllib.request
from pathlib import Path

DATASETS = {
    "ionosphere": [
        "https://odds.cs.stonybrook.edu/wp-content/uploads/ionosphere.mat",
        "https://github.com/jkooy/ODDS/raw/master/ionosphere.mat",
    ],
    "satellite": [
        "https://odds.cs.stonybrook.edu/wp-content/uploads/satellite.mat",
        "https://github.com/jkooy/ODDS/raw/master/satellite.mat",
    ],
    "letter": [
        "https://odds.cs.stonybrook.edu/wp-content/uploads/letter.mat",
        "https://github.com/jkooy/ODDS/raw/master/letter.mat",
    ],
}

# sanity bars so a truncated or mislabeled download fails loudly
EXPECTED = {
    "ionosphere": (351, 126),  # rows, anomalies
    "satellite": (6435, 2036),
    "letter": (1600, 100),
}


def load_mat(blob: bytes):
    """Return (X, y) from a .mat payload; handles both v5 and v7.3 files."""
    import numpy as np

    try:
        from scipy.io import loadmat

        mat = loadmat(io.BytesIO(blob))
        return np.asarray(mat["X"], dtype=float), np.asarray(mat["y"]).ravel()
    except NotImplementedError:
        # v7.3 .mat files are HDF5 containers
        import h5py

        with h5py.File(io.BytesIO(blob), "r") as f:
            x = np.asarray(f["X"], dtype=float).T
            y = np.asarray(f["y"]).ravel()
        return x, y


def write_csv(path: Path, x, y) -> None:
    with path.open("w") as out:
        for row, label in zip(x, y):
            cells = ",".join(repr(float(v)) for v in row)
            out.write(f"{cells},{int(label)}\n")


def fetch(urls):
    last = None
    for url in urls:
        try:
            print(f"  trying {url}")
            with urllib.request.urlopen(url, timeout=60) as resp:
                return resp.read()
        except Exception as exc:  # noqa: BLE001 - report and try the next mirror
            print(f"    failed: {exc}")
            last = exc
    raise RuntimeError(f"all mirrors failed (last error: {last})")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parent.parent / "data",
        help="output directory (default: <repo>/data)",
    )
    parser.add_argument(
        "--mat-dir",
        type=Path,
        help="convert <name>.mat files from this directory instead of downloading",
    )
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    failures = []
    for name in DATASETS:
        print(f"{name}:")
        try:
            if args.mat_dir:
                blob = (args.mat_dir / f"{name}.mat").read_bytes()
            else:
                blob = fetch(DATASETS[name])
            x, y = load_mat(blob)
            rows, anomalies = EXPECTED[name]
            if x.shape[0] != rows or int(y.sum()) != anomalies:
                raise RuntimeError(
                    f"unexpected shape: {x.shape[0]} rows / {int(y.sum())} anomalies, "
                    f"wanted {rows} / {anomalies}"
                )
            out = args.out / f"{name}.csv"
            write_csv(out, x, y)
            print(f"  wrote {out} ({x.shape[0]} rows, {x.shape[1]} features, "
                  f"{int(y.sum())} anomalies)")
        except Exception as exc:  # noqa: BLE001 - keep going, summarize at the end
            print(f"  ERROR: {exc}")
            failures.append(name)

    if failures:
        print(f"\nfailed: {', '.join(failures)}")
        print("download the .mat files manually and re-run with --mat-dir")
        return 1
    print("\nall datasets ready")
    return 0


if __name__ == "__main__":
    sys.exit(main())
