#!/usr/bin/env python3
"""Convert the digit samples shipped in the npm ``mnist`` package into IDX files.

The package stores 10000 MNIST digits as per-class JSON arrays of pixel
intensities in [0, 1] rounded to three decimals.  This script shuffles them
with a fixed seed and writes gzip-compressed IDX train/test files that the
C++ loader reads like the original distribution.

Usage: make_digits_idx.py <npm-package-dir> <out-dir> [--train 6000]
Obtain the package with ``npm pack mnist && tar xzf mnist-*.tgz``.
"""
import argparse
import gzip
import json
import pathlib
import random
import struct


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            fh.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("package")
    parser.add_argument("out")
    parser.add_argument("--train", type=int, default=6000)
    parser.add_argument("--seed", type=int, default=20240501)
    args = parser.parse_args()

    samples = []
    for digit in range(10):
        src = pathlib.Path(args.package) / "src" / "digits" / f"{digit}.json"
        data = json.loads(src.read_text())["data"]
        for k in range(len(data) // 784):
            pixels = [min(255, max(0, round(v * 255))) for v in data[784 * k:784 * (k + 1)]]
            samples.append((pixels, digit))

    random.Random(args.seed).shuffle(samples)
    train, test = samples[:args.train], samples[args.train:]
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
