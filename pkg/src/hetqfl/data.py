"""Datasets: IDX and CSV loaders, dimension reduction, synthetic blobs,
class-subset (non-IID) partitioning and stratified splitting."""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = ""

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.features.shape[0] != len(self.labels):
            raise ValueError(f"{self.features.shape[0]} feature rows but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in 0..num_classes-1")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices, provenance: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes, provenance or self.provenance)

    def with_features(self, features: np.ndarray, note: str = "") -> "Dataset":
        prov = f"{self.provenance}|{note}" if note else self.provenance
        return Dataset(features, self.labels.copy(), self.num_classes, prov)


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _parse_idx(blob: bytes, magic: int, ndim: int, what: str) -> np.ndarray:
    if len(blob) < 4 + 4 * ndim:
        raise DataFormatError(f"{what} file truncated in header")
    (found,) = struct.unpack_from(">I", blob)
    if found != magic:
        raise DataFormatError(f"{what} file has magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(">" + "I" * ndim, blob, 4)
    offset = 4 + 4 * ndim
    size = int(np.prod(dims))
    if len(blob) - offset < size:
        raise DataFormatError(f"{what} file truncated: {len(blob) - offset} of {size} bytes")
    return np.frombuffer(blob, dtype=np.uint8, count=size, offset=offset).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Read an IDX image/label pair (MNIST layout); pixels scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, "images")
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    n = images.shape[0]
    classes = num_classes if num_classes is not None else (int(labels.max()) + 1 if n else 0)
    return Dataset(
        images.reshape(n, -1).astype(float) / 255.0,
        labels.astype(np.int64),
        classes,
        f"idx:{Path(images_path).name}",
    )


def save_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def load_csv(path, num_classes: int | None = None) -> Dataset:
    """CSV with a header row, an integer ``label`` column and numeric features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "label" not in header:
            raise DataFormatError(f"{path}: header must contain a 'label' column")
        col = header.index("label")
        rows = [r for r in reader if r]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    try:
        table = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric value ({exc})") from None
    labels = table[:, col]
    if np.any(labels != np.round(labels)):
        raise DataFormatError(f"{path}: labels must be integers")
    feats = np.delete(table, col, axis=1)
    labels = labels.astype(np.int64)
    classes = num_classes if num_classes is not None else int(labels.max()) + 1
    return Dataset(feats, labels, classes, f"csv:{Path(path).name}")


def synth_blobs(n: int, num_classes: int, dim: int, spread: float, seed: int) -> Dataset:
    """Gaussian clusters around seeded standard-normal centers, balanced labels."""
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(num_classes, dim))
    labels = np.arange(n) % num_classes
    labels = labels[rng.permutation(n)]
    feats = centers[labels] + spread * rng.normal(size=(n, dim))
    return Dataset(feats, labels, num_classes, f"blobs(n={n},c={num_classes},d={dim},s={spread},seed={seed})")


def subsample(ds: Dataset, n: int, seed: int) -> Dataset:
    if n >= len(ds):
        return ds
    idx = np.sort(np.random.default_rng(seed).choice(len(ds), size=n, replace=False))
    return ds.subset(idx, f"{ds.provenance}|sub{n}")


# ---------------------------------------------------------------------------
# Dimension reduction
# ---------------------------------------------------------------------------


def reduce_dims(ds: Dataset, out_dim: int, method: str = "avgpool", reference: Dataset | None = None) -> Dataset:
    """Shrink features to `out_dim` columns.

    ``avgpool`` treats rows as square images and takes block means onto a
    square grid. ``pca`` projects onto the leading principal axes of
    `reference` (the training split) or of `ds` itself when no reference is
    given.
    """
    d = ds.dim
    if out_dim > d or out_dim < 1:
        raise ValueError(f"out_dim={out_dim} must be in 1..{d}")
    if method == "avgpool":
        side, out_side = math.isqrt(d), math.isqrt(out_dim)
        if side * side != d or out_side * out_side != out_dim:
            raise ValueError("avgpool needs square images and a square output size")
        if side % out_side:
            raise ValueError(f"image side {side} is not a multiple of {out_side}")
        k = side // out_side
        img = ds.features.reshape(len(ds), out_side, k, out_side, k)
        return ds.with_features(img.mean(axis=(2, 4)).reshape(len(ds), out_dim), f"avgpool{out_dim}")
    if method == "pca":
        ref = (reference if reference is not None else ds).features
        mean, axes = _pca_axes(ref, out_dim)
        return ds.with_features((ds.features - mean) @ axes.T, f"pca{out_dim}")
    raise ValueError(f"unknown reduction method {method!r}")


def _pca_axes(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    axes = vt[:k]
    # fix each axis' sign so the largest-magnitude loading is positive
    flip = np.sign(axes[np.arange(len(axes)), np.argmax(np.abs(axes), axis=1)])
    flip[flip == 0] = 1
    return mean, axes * flip[:, None]


# ---------------------------------------------------------------------------
# Partitioning and splitting
# ---------------------------------------------------------------------------


@dataclass
class PartitionPlan:
    num_clients: int
    classes_per_client: int
    seed: int
    assignment: list[np.ndarray] = field(default_factory=list)
    client_classes: list[list[int]] = field(default_factory=list)

    def sizes(self) -> list[int]:
        return [len(a) for a in self.assignment]


def partition_noniid(ds: Dataset, num_clients: int, classes_per_client: int, seed: int) -> PartitionPlan:
    """Give each client a seeded subset of classes and split every class's
    samples evenly among the clients that hold it.

    Class subsets are consecutive windows over a seeded class permutation, so
    every class present in `ds` is owned by someone whenever
    ``num_clients * classes_per_client`` reaches the number of classes.
    """
    if num_clients < 1 or num_clients > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples among {num_clients} clients")
    present = np.unique(ds.labels)
    c = len(present)
    if not 1 <= classes_per_client <= c:
        raise ValueError(f"classes_per_client must be in 1..{c}")
    if num_clients * classes_per_client < c:
        raise ValueError(
            f"infeasible partition: {num_clients} clients x {classes_per_client} classes cannot cover {c} classes"
        )
    rng = np.random.default_rng(seed)
    order = present[rng.permutation(c)]
    owned = [sorted(int(order[(i * classes_per_client + j) % c]) for j in range(classes_per_client)) for i in range(num_clients)]
    buckets: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    for cls in present:
        owners = [i for i in range(num_clients) if cls in owned[i]]
        idx = np.flatnonzero(ds.labels == cls)
        idx = idx[rng.permutation(len(idx))]
        for owner, part in zip(owners, np.array_split(idx, len(owners))):
            buckets[owner].append(part)
    assignment = [np.sort(np.concatenate(b)) if b else np.zeros(0, dtype=np.int64) for b in buckets]
    empty = [i for i, a in enumerate(assignment) if len(a) == 0]
    if empty:
        raise ValueError(f"infeasible partition: clients {empty} received no samples")
    return PartitionPlan(num_clients, classes_per_client, seed, assignment, owned)


def split_train_test(ds: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split: floor(fraction * n_c) samples of each class go to train."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == cls)
        if len(idx) < 2:
            raise ValueError(f"class {cls} has fewer than 2 samples")
        idx = idx[rng.permutation(len(idx))]
        k = math.floor(train_fraction * len(idx) + 1e-9)
        train.append(idx[:k])
        test.append(idx[k:])
    tr, te = np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
    return ds.subset(tr, f"{ds.provenance}|train"), ds.subset(te, f"{ds.provenance}|test")


def holdout_split(n: int, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Unstratified (keep, held_out) index split; held-out size is
    ``floor(fraction * n)`` but at least one sample when n >= 2."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    k = math.floor(fraction * n + 1e-9)
    if n >= 2:
        k = max(k, 1)
    return np.sort(perm[k:]), np.sort(perm[:k])
