#!/usr/bin/env python3
"""Write a 10000-digit MNIST sample as IDX files.

The digits come from the `mnist` npm package (src/digits/<d>.json), which
stores 28x28 grey levels as k/255 rounded to three decimals. Pixels are
mapped back to bytes with round(v * 255).

    python3 scripts/fetch_mnist.py [--pkg-dir DIR] [--out data/mnist]

Without --pkg-dir the package tarball is fetched with `npm pack mnist@1.1.0`.
"""
import argparse
import json
import os
import struct
import subprocess
import tarfile
import tempfile


def load_digits(pkg_dir):
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(pkg_dir, "src", "digits", f"{digit}.json")) as f:
            data = json.load(f)["data"]
        assert len(data) % 784 == 0
        for start in range(0, len(data), 784):
            images.append(bytes(min(255, max(0, round(v * 255))) for v in data[start:start + 784]))
            labels.append(digit)
    return images, labels


def write_idx(out_dir, images, labels):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(os.path.join(out_dir, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pkg-dir")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    args = ap.parse_args()
    if args.pkg_dir:
        images, labels = load_digits(args.pkg_dir)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True, capture_output=True)
            with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
                tar.extractall(tmp)
            images, labels = load_digits(os.path.join(tmp, "package"))
    write_idx(args.out, images, labels)
    print(f"wrote {len(images)} images to {args.out}")


if __name__ == "__main__":
    main()
