#!/usr/bin/env python3
"""Writes MNIST images and labels as IDX files into data/mnist.

Tries the usual gzip mirrors first. When none is reachable, falls back to the
10,000 digits bundled with the `mnist` npm package (pixels stored as k/255
rounded to three decimals, which round back to the original bytes), shuffled
with a fixed seed so the class order is mixed.
"""

import argparse
import gzip
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile
import urllib.request

import numpy as np

MIRRORS = [
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "http://yann.lecun.com/exdb/mnist/",
]
FILES = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"]


def try_mirrors(out: pathlib.Path) -> bool:
    for base in MIRRORS:
        try:
            for name in FILES:
                with urllib.request.urlopen(base + name + ".gz", timeout=20) as r:
                    (out / name).write_bytes(gzip.decompress(r.read()))
            print(f"downloaded from {base}")
            return True
        except Exception as exc:  # noqa: BLE001
            print(f"mirror {base} failed: {exc}")
    return False


def from_npm(out: pathlib.Path, seed: int) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist", "--silent"], cwd=tmp, check=True, stdout=subprocess.DEVNULL)
        tgz = next(pathlib.Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(tgz) as tar:
            tar.extractall(tmp)
        images, labels = [], []
        for digit in range(10):
            data = json.loads((pathlib.Path(tmp) / "package/src/digits" / f"{digit}.json").read_text())["data"]
            arr = np.rint(np.asarray(data, dtype=np.float64) * 255.0).astype(np.uint8).reshape(-1, 784)
            images.append(arr)
            labels.append(np.full(len(arr), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(seed).permutation(len(images))
    images, labels = images[order], labels[order]
    (out / FILES[0]).write_bytes(struct.pack(">IIII", 0x803, len(images), 28, 28) + images.tobytes())
    (out / FILES[1]).write_bytes(struct.pack(">II", 0x801, len(labels)) + labels.tobytes())
    print(f"wrote {len(images)} digits from the npm package")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--offline-only", action="store_true", help="skip the mirrors")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.offline_only or not try_mirrors(out):
        from_npm(out, args.seed)


if __name__ == "__main__":
    main()
