#!/usr/bin/env python3
"""Fetch or synthesize the benchmark datasets into data/ as normalized CSVs.

Every output file has the label token in column 0 and numeric features
after it, no header. Sources:

  wine      UCI wine recognition (178 x 13, 3 classes). Downloaded when
            the network allows; otherwise taken from scikit-learn's
            bundled copy of the same data.
  glass     UCI glass identification (214 x 9 after dropping the Id
            column, 6 classes). Download only.
  vehicle   Statlog vehicle silhouettes (846 x 18, 4 classes), nine
            xa*.dat chunks. Download only.
  waveform  CART waveform (21 features, 3 equiprobable classes). The
            UCI file is one fixed draw of 5000 rows from the published
            generator; --generate produces a seeded draw of the same
            size locally.

Downloads are validated structurally (row/column counts and class
histograms of the canonical files) before being written.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
import urllib.request

import numpy as np

UCI_ROOT = "https://archive.ics.uci.edu/ml/machine-learning-databases"

EXPECTED = {
    "wine": {"rows": 178, "features": 13, "class_counts": {"1": 59, "2": 71, "3": 48}},
    "glass": {"rows": 214, "features": 9,
              "class_counts": {"1": 70, "2": 76, "3": 17, "5": 13, "6": 9, "7": 29}},
    "vehicle": {"rows": 846, "features": 18,
                "class_counts": {"opel": 212, "saab": 217, "bus": 218, "van": 199}},
    "waveform": {"rows": 5000, "features": 21},
}


def fetch(url: str, timeout: float = 30.0) -> str:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read().decode("utf-8", errors="strict")


def validate(name: str, rows: list[list[str]]):
    spec = EXPECTED[name]
    if len(rows) != spec["rows"]:
        raise SystemExit(f"{name}: expected {spec['rows']} rows, got {len(rows)}")
    widths = {len(r) for r in rows}
    if widths != {spec["features"] + 1}:
        raise SystemExit(f"{name}: unexpected column counts {sorted(widths)}")
    if "class_counts" in spec:
        counts = {}
        for r in rows:
            counts[r[0]] = counts.get(r[0], 0) + 1
        if counts != spec["class_counts"]:
            raise SystemExit(f"{name}: class histogram {counts} != {spec['class_counts']}")


def write_rows(rows: list[list[str]], path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        for r in rows:
            fh.write(",".join(r) + "\n")
    print(f"wrote {path} ({len(rows)} rows)")


def wine_rows_from_sklearn() -> list[list[str]]:
    from sklearn.datasets import load_wine

    bundle = load_wine()
    rows = []
    for label, feats in zip(bundle.target, bundle.data):
        rows.append([str(label + 1)] + [repr(float(v)) for v in feats])
    return rows


def get_wine(out_dir: str):
    rows = None
    try:
        text = fetch(f"{UCI_ROOT}/wine/wine.data")
        rows = [line.split(",") for line in text.strip().splitlines()]
    except OSError as exc:
        print(f"wine: download failed ({exc}); using scikit-learn's bundled copy")
        rows = wine_rows_from_sklearn()
    validate("wine", rows)
    write_rows(rows, os.path.join(out_dir, "wine.csv"))


def get_glass(out_dir: str):
    text = fetch(f"{UCI_ROOT}/glass/glass.data")
    rows = []
    for line in text.strip().splitlines():
        cells = line.split(",")
        # drop the Id column; move the class token to the front
        rows.append([cells[-1]] + cells[1:-1])
    validate("glass", rows)
    write_rows(rows, os.path.join(out_dir, "glass.csv"))


def get_vehicle(out_dir: str):
    rows = []
    for chunk in "abcdefghi":
        text = fetch(f"{UCI_ROOT}/statlog/vehicle/xa{chunk}.dat")
        for line in text.strip().splitlines():
            cells = line.split()
            rows.append([cells[-1].lower()] + cells[:-1])
    validate("vehicle", rows)
    write_rows(rows, os.path.join(out_dir, "vehicle.csv"))


def make_waveform(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample the CART waveform generator: 21 features, 3 classes.

    Three shifted triangular base waves peak at positions 7, 11 and 15;
    each class mixes two of them with a uniform weight and adds unit
    Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(1, 22, dtype=float)
    h1 = np.maximum(6.0 - np.abs(t - 11.0), 0.0)
    h2 = np.maximum(6.0 - np.abs(t - 15.0), 0.0)
    h3 = np.maximum(6.0 - np.abs(t - 7.0), 0.0)
    pairs = [(h1, h2), (h1, h3), (h2, h3)]
    labels = rng.integers(0, 3, n)
    u = rng.uniform(0.0, 1.0, n)
    x = np.empty((n, 21))
    for cls, (a, b) in enumerate(pairs):
        mask = labels == cls
        x[mask] = u[mask, None] * a + (1.0 - u[mask, None]) * b
    x += rng.standard_normal((n, 21))
    return x, labels + 1


def get_waveform(out_dir: str, generate: bool, seed: int):
    if not generate:
        try:
            text = fetch(f"{UCI_ROOT}/waveform/waveform.data")
            rows = [line.split(",") for line in text.strip().splitlines()]
            # UCI keeps the class (0/1/2) last; normalize to the front
            rows = [[r[-1]] + r[:-1] for r in rows]
            validate("waveform", rows)
            write_rows(rows, os.path.join(out_dir, "waveform.csv"))
            return
        except OSError as exc:
            print(f"waveform: download failed ({exc}); generating locally")
    x, labels = make_waveform(EXPECTED["waveform"]["rows"], seed)
    rows = [[str(label)] + [repr(float(v)) for v in feats]
            for label, feats in zip(labels, x)]
    validate("waveform", rows)
    write_rows(rows, os.path.join(out_dir, "waveform.csv"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("datasets", nargs="*",
                        default=["wine", "glass", "waveform", "vehicle"],
                        help="subset of: wine glass waveform vehicle")
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--generate-waveform", action="store_true",
                        help="synthesize waveform locally instead of downloading")
    parser.add_argument("--waveform-seed", type=int, default=20240817)
    args = parser.parse_args(argv)
    failures = []
    for name in args.datasets:
        try:
            if name == "wine":
                get_wine(args.out)
            elif name == "glass":
                get_glass(args.out)
            elif name == "vehicle":
                get_vehicle(args.out)
            elif name == "waveform":
                get_waveform(args.out, args.generate_waveform, args.waveform_seed)
            else:
                raise SystemExit(f"unknown dataset {name!r}")
        except OSError as exc:
            print(f"{name}: failed ({exc})", file=sys.stderr)
            failures.append(name)
    if failures:
        print(f"unavailable without network access: {', '.join(failures)}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
