"""Datasets: the permutation-invariant sequence task, splits, and IDX image files."""
from __future__ import annotations

import gzip
import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import SeedLike, as_generator, derive_seed
from .groups import GroupAction, block_permutation, image_euclidean

__all__ = [
    "XpermSpec",
    "LabeledDataset",
    "IdxImageSet",
    "IdxError",
    "IdxFormatError",
    "IdxTruncatedError",
    "IdxCountMismatchError",
    "InfeasibleSplitError",
    "one_hot",
    "gen_xperm",
    "split_train_test",
    "load_idx",
    "write_idx",
    "build_image_group",
]

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass(frozen=True)
class XpermSpec:
    alphabet: int = 8
    length: int = 5
    targets: tuple[int, int] = (0, 1)

    @property
    def dimension(self) -> int:
        return self.alphabet * self.length


@dataclass
class LabeledDataset:
    """Points with integer labels and orbit bookkeeping.

    ``indices`` are positions in the parent dataset (identity for a freshly
    generated one), so features computed once for the parent can be reused
    for any subset.
    """

    points: np.ndarray
    labels: np.ndarray
    orbit_ids: np.ndarray
    core_mask: np.ndarray
    indices: np.ndarray
    action: GroupAction | None = None
    sequences: np.ndarray | None = None
    spec: XpermSpec | None = None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            self.points[idx], self.labels[idx], self.orbit_ids[idx], self.core_mask[idx],
            self.indices[idx], self.action,
            None if self.sequences is None else self.sequences[idx], self.spec)


def one_hot(sequences: np.ndarray, alphabet: int = 8) -> np.ndarray:
    """Concatenate per-position one-hot blocks; shape ``(N, length*alphabet)``."""
    sequences = np.atleast_2d(np.asarray(sequences))
    N, L = sequences.shape
    out = np.zeros((N, L * alphabet))
    out[np.arange(N)[:, None], np.arange(L) * alphabet + sequences] = 1.0
    return out


def gen_xperm(seed: SeedLike = 0, alphabet: int = 8, length: int = 5,
              targets: tuple[int, int] | None = None) -> LabeledDataset:
    """All ``alphabet**length`` sequences, positive iff both target characters occur.

    Points are the one-hot encodings scaled to unit norm.  Orbits are the
    character multisets; the core set holds each orbit's lexicographically
    smallest member, i.e. the sorted sequence.
    """
    if targets is None:
        rng = as_generator(derive_seed(seed, "xperm-targets") if isinstance(seed, int) else seed)
        targets = tuple(int(c) for c in sorted(rng.choice(alphabet, size=2, replace=False)))
    c1, c2 = targets
    if c1 == c2:
        raise ValueError("target characters must differ")
    seqs = np.array(list(itertools.product(range(alphabet), repeat=length)), dtype=np.int64)
    labels = (np.any(seqs == c1, axis=1) & np.any(seqs == c2, axis=1)).astype(np.int64)
    sorted_seqs = np.sort(seqs, axis=1)
    _, orbit_ids = np.unique(sorted_seqs, axis=0, return_inverse=True)
    core = np.all(seqs == sorted_seqs, axis=1)
    points = one_hot(seqs, alphabet) / np.sqrt(length)
    spec = XpermSpec(alphabet, length, (c1, c2))
    return LabeledDataset(points, labels, orbit_ids.ravel().astype(np.int64), core,
                          np.arange(len(seqs)), block_permutation(length, alphabet), seqs, spec)


class InfeasibleSplitError(ValueError):
    pass


def split_train_test(dataset: LabeledDataset, n_train: int, balanced: bool = True,
                     core_only: bool = False, seed: SeedLike = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Random disjoint split; every point not drawn for training is a test point.

    ``balanced`` draws ``n_train / T`` points per class; ``core_only`` draws
    training points from the core set only.
    """
    rng = as_generator(seed)
    N = len(dataset)
    if n_train < 1 or n_train >= N:
        raise InfeasibleSplitError(f"n_train={n_train} must lie in [1, {N - 1}]")
    pool = np.flatnonzero(dataset.core_mask) if core_only else np.arange(N)
    if balanced:
        T = dataset.n_classes
        if n_train % T:
            raise InfeasibleSplitError(f"n_train={n_train} is not divisible by {T} classes")
        per = n_train // T
        picks = []
        for t in range(T):
            members = pool[dataset.labels[pool] == t]
            if len(members) < per:
                raise InfeasibleSplitError(
                    f"class {t} has {len(members)} eligible points, {per} requested")
            picks.append(rng.choice(members, size=per, replace=False))
        train_idx = np.sort(np.concatenate(picks))
    else:
        if len(pool) < n_train:
            raise InfeasibleSplitError(f"only {len(pool)} eligible points, {n_train} requested")
        train_idx = np.sort(rng.choice(pool, size=n_train, replace=False))
    mask = np.ones(N, dtype=bool)
    mask[train_idx] = False
    return dataset.subset(train_idx), dataset.subset(np.flatnonzero(mask))


class IdxError(ValueError):
    pass


class IdxFormatError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


@dataclass
class IdxImageSet:
    images: np.ndarray          # (count, rows, cols) uint8
    labels: np.ndarray          # (count,) uint8

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def pixels(self) -> np.ndarray:
        """Flattened images scaled to [0, 1]."""
        return self.images.reshape(len(self.images), -1).astype(float) / 255.0

    def unit_vectors(self) -> np.ndarray:
        """Flattened images normalised to unit Euclidean norm."""
        X = self.pixels()
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("blank image cannot be normalised")
        return X / norms


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> tuple[tuple[int, ...], bytes]:
    header = 4 * (1 + ndim)
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: {len(raw)} bytes is shorter than the {header}-byte header")
    found, *dims = struct.unpack(f">{1 + ndim}i", raw[:header])
    if found != magic:
        raise IdxFormatError(f"{path}: magic number {found}, expected {magic}")
    body = raw[header:]
    expected = int(np.prod(dims))
    if len(body) < expected:
        raise IdxTruncatedError(f"{path}: {len(body)} data bytes, header promises {expected}")
    return tuple(dims), body[:expected]


def load_idx(images_path, labels_path) -> IdxImageSet:
    """Read an IDX image/label pair (optionally gzip-compressed)."""
    (count, rows, cols), img = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, 3, images_path)
    (n_labels,), lab = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, 1, labels_path)
    if count != n_labels:
        raise IdxCountMismatchError(f"{count} images but {n_labels} labels")
    images = np.frombuffer(img, dtype=np.uint8).reshape(count, rows, cols)
    labels = np.frombuffer(lab, dtype=np.uint8)
    return IdxImageSet(images.copy(), labels.copy())


def write_idx(data: IdxImageSet, images_path, labels_path) -> None:
    images = np.ascontiguousarray(data.images, dtype=np.uint8)
    labels = np.ascontiguousarray(data.labels, dtype=np.uint8)
    if images.ndim != 3 or len(images) != len(labels):
        raise ValueError("images must be (count, rows, cols) with one label each")
    Path(images_path).write_bytes(struct.pack(">4i", IMAGE_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2i", LABEL_MAGIC, len(labels)) + labels.tobytes())


def build_image_group(rows: int, cols: int, max_shift: int = 3, angle_range: float = 20.0,
                      angle_step: float = 5.0) -> GroupAction:
    """Translations by up to ``max_shift`` pixels combined with small rotations."""
    return image_euclidean(rows, cols, max_shift, angle_range, angle_step)
