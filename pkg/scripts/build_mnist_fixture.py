"""Write the bundled MNIST fixture (tests/data/mnist5k) as gzipped IDX files.

Source: the 5000-image MNIST sample shipped inside the ``mlxtend`` wheel
(``mlxtend/data/data/mnist_5k.csv.gz``, 500 images per digit). The first 400
images of each digit become the train split, the remaining 100 the test split.

    pip download --no-deps mlxtend -d /tmp/wheels
    python scripts/build_mnist_fixture.py /tmp/wheels/mlxtend-*.whl
"""

import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from fplus.data import MNIST_FILES, write_idx_images, write_idx_labels

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_PER_CLASS = 400


def main(wheel: str, out: str = "tests/data/mnist5k") -> None:
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.int64)

    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train_idx.extend(idx[:TRAIN_PER_CLASS])
        test_idx.extend(idx[TRAIN_PER_CLASS:])

    dest = Path(out)
    dest.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", sorted(train_idx)), ("test", sorted(test_idx))):
        img_name, lbl_name = MNIST_FILES[split]
        # mtime=0 keeps the archives byte-reproducible
        (dest / f"{img_name}.gz").write_bytes(gzip.compress(write_idx_images(pixels[idx]), mtime=0))
        (dest / f"{lbl_name}.gz").write_bytes(gzip.compress(write_idx_labels(labels[idx]), mtime=0))
        print(f"{split}: {len(idx)} images -> {dest}")


if __name__ == "__main__":
    main(*sys.argv[1:])
