#!/usr/bin/env python3
"""Write the 5000-image MNIST subset bundled with mlxtend as IDX files.

Usage: make_mnist_subset.py <mlxtend wheel or mnist_5k.csv.gz> <out_dir>

Produces mnist5k-images-idx3-ubyte and mnist5k-labels-idx1-ubyte.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def read_csv_gz(src: Path) -> bytes:
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as z:
            return gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    return gzip.decompress(src.read_bytes())


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 1
    rows = read_csv_gz(Path(sys.argv[1])).decode().strip().split("\n")
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    pixels = bytearray()
    labels = bytearray()
    for line in rows:
        vals = [int(float(x)) for x in line.split(",")]
        pixels.extend(vals[:784])
        labels.append(vals[784])
    n = len(rows)
    (out / "mnist5k-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 0x803, n, 28, 28) + bytes(pixels))
    (out / "mnist5k-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 0x801, n) + bytes(labels))
    print(f"wrote {n} images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
