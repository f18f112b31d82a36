#!/usr/bin/env python3
"""Write a 5000-image MNIST subset as IDX files.

The source is the 5k-sample MNIST CSV bundled in the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz), 500 images per digit. Samples are
shuffled with a fixed seed and split 4000 train / 1000 test.

    pip download --no-deps -d /tmp/whl mlxtend
    python3 scripts/make_mnist_subset.py /tmp/whl/mlxtend-*.whl data/mnist
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = np.loadtxt(gzip.decompress(raw).decode().splitlines(), delimiter=",")
    images, labels = rows[:, :784].reshape(-1, 28, 28), rows[:, 784]

    order = np.random.default_rng(20220101).permutation(len(rows))
    images, labels = images[order], labels[order]

    write_images(out / "train-images-idx3-ubyte", images[:4000])
    write_labels(out / "train-labels-idx1-ubyte", labels[:4000])
    write_images(out / "t10k-images-idx3-ubyte", images[4000:])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[4000:])


if __name__ == "__main__":
    main()
