"""Shared corpora for the baseline tests.

Everything protected is produced by the container tool's command line, so
these tests exercise the real file-level interface and never import the
producer package.
"""

import struct
import subprocess
import sys

import numpy as np
import pytest

SIDE = 28
CLASSES = 10


def write_idx_images(path, images: np.ndarray):
    n = images.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x0000_0803, n, SIDE, SIDE))
        fh.write(np.ascontiguousarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x0000_0801, labels.size))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def make_templates(rng):
    """One coarse random pattern per class, upsampled to full resolution."""
    coarse = rng.integers(0, 200, size=(CLASSES, SIDE // 4, SIDE // 4))
    return np.kron(coarse, np.ones((4, 4))).reshape(CLASSES, SIDE * SIDE)


def gen_images(rng, templates, count):
    # templates must be shared across splits or validation is unlearnable
    labels = np.arange(count) % CLASSES  # balanced by construction
    images = templates[labels] + rng.normal(0.0, 25.0, (count, SIDE * SIDE))
    return np.clip(images, 0, 255).astype(np.uint8), labels


def cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "simsketch.cli", *map(str, args)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, f"cli {args}: {proc.stderr}"
    return proc.stdout


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """IDX sources plus plaintext/protected containers at two sizes."""
    d = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(2718)
    templates = make_templates(rng)
    train_x, train_y = gen_images(rng, templates, 10_000)
    val_x, val_y = gen_images(rng, templates, 2_000)

    write_idx_images(d / "train-images.idx", train_x)
    write_idx_labels(d / "train-labels.idx", train_y)
    write_idx_images(d / "val-images.idx", val_x)
    write_idx_labels(d / "val-labels.idx", val_y)
    # a small slice for the fast behavioral tests
    write_idx_images(d / "small-train-images.idx", train_x[:1_500])
    write_idx_labels(d / "small-train-labels.idx", train_y[:1_500])
    write_idx_images(d / "small-val-images.idx", val_x[:500])
    write_idx_labels(d / "small-val-labels.idx", val_y[:500])
    # same records, labels shuffled: the chance-level control
    shuffled = rng.permutation(train_y[:1_500])
    write_idx_labels(d / "shuffled-labels.idx", shuffled)

    cli("genkey", "--out", d / "owner.key")
    pairs = [
        ("train", "train-images.idx", "train-labels.idx"),
        ("val", "val-images.idx", "val-labels.idx"),
        ("small-train", "small-train-images.idx", "small-train-labels.idx"),
        ("small-val", "small-val-images.idx", "small-val-labels.idx"),
    ]
    for stem, images, labels in pairs:
        cli("ingest-idx", "--images", d / images, "--labels", d / labels,
            "--out", d / f"{stem}-plain.hai1")
        permute = ["--permute-classes"] if stem.endswith("train") else []
        cli("protect", "--key", d / "owner.key", "--scheme", "real-projection",
            "--delta", "3", "--n-out", "256", *permute,
            "--in", d / f"{stem}-plain.hai1", "--out", d / f"{stem}-d3.hai1")
    cli("ingest-idx", "--images", d / "small-train-images.idx",
        "--labels", d / "shuffled-labels.idx", "--out", d / "small-train-shuffled.hai1")
    cli("protect", "--key", d / "owner.key", "--scheme", "real-projection",
        "--delta", "3", "--n-out", "256", "--strip-labels",
        "--in", d / "small-val-plain.hai1", "--out", d / "small-val-unlabeled.hai1")
    return d
