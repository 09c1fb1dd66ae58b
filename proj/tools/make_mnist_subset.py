#!/usr/bin/env python3
"""Build the desk-scale MNIST subset in IDX format.

Reads per-digit JSON arrays (pixel floats in [0,1], 784 per sample) and
emits the four standard IDX files: a ~9k-sample training split and a
1k-sample test split (last 100 samples of each class).

Usage: make_mnist_subset.py <digit-json-dir> <out-dir>
"""
import json
import random
import struct
import sys
from pathlib import Path

TEST_PER_CLASS = 100
SHUFFLE_SEED = 1234


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(raw) // 784
        samples = [
            [min(255, max(0, round(v * 255))) for v in raw[i * 784 : (i + 1) * 784]]
            for i in range(n)
        ]
        train += [(img, digit) for img in samples[:-TEST_PER_CLASS]]
        test += [(img, digit) for img in samples[-TEST_PER_CLASS:]]
    random.Random(SHUFFLE_SEED).shuffle(train)
    random.Random(SHUFFLE_SEED + 1).shuffle(test)
    write_idx_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_idx_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_idx_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"train={len(train)} test={len(test)} -> {out}")


if __name__ == "__main__":
    main()
