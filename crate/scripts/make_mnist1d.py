#!/usr/bin/env python3
"""Regenerate MNIST-1D (5000 x 40, default arguments, seed 42) as CSV.

Requires the `mnist1d` PyPI package (pip install mnist1d) plus numpy/scipy.
Train and test parts of the generator output are pooled; the runner does
its own seeded splits.

    python3 scripts/make_mnist1d.py [--out data/mnist1d/mnist1d.csv]
"""
import argparse
import csv
import os

import numpy as np
from mnist1d.data import get_dataset_args, make_dataset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist1d", "mnist1d.csv"))
    args = ap.parse_args()
    data = make_dataset(get_dataset_args())
    x = np.concatenate([data["x"], data["x_test"]])
    y = np.concatenate([data["y"], data["y_test"]])
    os.makedirs(os.path.dirname(args.out), exist_ok=True)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i}" for i in range(x.shape[1])] + ["label"])
        for row, label in zip(x, y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
    print(f"wrote {len(y)} rows to {args.out}")


if __name__ == "__main__":
    main()
