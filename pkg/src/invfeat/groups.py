"""Finite groups acting on R^d by coordinate re-indexing.

Every action supported here maps a vector ``x`` to ``gx`` with
``gx[k] = x[src[k]]`` for an integer source map ``src`` (``-1`` meaning the
output coordinate is zero-filled).  Block permutations, cyclic shifts and
cyclic image translations are permutation matrices and therefore exactly
unitary; nearest-neighbour image rotations are not, and actions containing
them are flagged ``exact=False``.

The uniform measure over the element table stands in for the Haar measure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._seeding import SeedLike, as_generator

__all__ = [
    "CapacityError",
    "GroupElement",
    "GroupAction",
    "trivial_group",
    "block_permutation",
    "cyclic_shift",
    "image_euclidean",
    "action_from_descriptor",
    "apply",
    "enumerate_elements",
    "sample_elements",
]

BLOCK_PERMUTATION = "block-permutation"
CYCLIC_SHIFT = "cyclic-shift"
IMAGE_EUCLIDEAN = "image-euclidean"
TRIVIAL = "trivial"

MAX_BLOCKS = 8
DEFAULT_ELEMENT_CAP = 100_000


class CapacityError(RuntimeError):
    """Raised when an element table would exceed the configured cap."""


@dataclass(frozen=True)
class GroupElement:
    """An entry of a group's element table.

    ``index`` addresses the owning action's table; ``descriptor`` holds the
    kind-specific parameters (a block permutation tuple, a shift offset, or
    ``(dx, dy, angle)`` for image transforms).
    """

    index: int
    descriptor: tuple


class GroupAction:
    """A finite set of coordinate maps acting on vectors of length ``dimension``."""

    def __init__(self, kind: str, dimension: int, descriptors: Sequence[tuple],
                 source_maps: np.ndarray, exact: bool, params: dict | None = None):
        source_maps = np.asarray(source_maps, dtype=np.int64)
        if source_maps.shape != (len(descriptors), dimension):
            raise ValueError(
                f"source maps have shape {source_maps.shape}, "
                f"expected {(len(descriptors), dimension)}")
        source_maps.setflags(write=False)
        self.kind = kind
        self.dimension = int(dimension)
        self.exact = bool(exact)
        self.params = dict(params or {})
        self.elements: tuple[GroupElement, ...] = tuple(
            GroupElement(i, tuple(desc)) for i, desc in enumerate(descriptors))
        self._src = source_maps
        # on small images two rotation angles can round to the same pixel map;
        # those stay distinct elements (by descriptor) and lookups return the first
        self._lookup = {}
        for i, row in enumerate(source_maps):
            self._lookup.setdefault(row.tobytes(), i)
        if exact and len(self._lookup) != len(self.elements):
            raise ValueError("element table contains duplicate transforms")

    def __len__(self) -> int:
        return len(self.elements)

    def __repr__(self) -> str:
        return (f"GroupAction(kind={self.kind!r}, dimension={self.dimension}, "
                f"order={len(self)}, exact={self.exact})")

    @property
    def exactness(self) -> str:
        return "exactly-unitary" if self.exact else "approximately-unitary"

    @property
    def source_maps(self) -> np.ndarray:
        """Read-only ``(|G|, d)`` array of source indices."""
        return self._src

    def source_map(self, g: GroupElement | int) -> np.ndarray:
        return self._src[self._index_of(g)]

    def _index_of(self, g: GroupElement | int) -> int:
        i = g.index if isinstance(g, GroupElement) else int(g)
        if not 0 <= i < len(self.elements):
            raise ValueError(f"element index {i} outside table of size {len(self)}")
        if isinstance(g, GroupElement) and self.elements[i].descriptor != g.descriptor:
            raise ValueError(f"element {g} does not belong to this action")
        return i

    def apply(self, g: GroupElement | int, x: np.ndarray) -> np.ndarray:
        """Return ``gx``; ``x`` may be a vector or a batch with rows of length d."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise ValueError(
                f"vector has length {x.shape[-1]}, action acts on dimension {self.dimension}")
        src = self._src[self._index_of(g)]
        out = x[..., src]
        if (src < 0).any():
            out[..., src < 0] = 0.0
        return out

    def orbit(self, x: np.ndarray, elements: Iterable[GroupElement] | None = None) -> np.ndarray:
        """Stack ``g x`` for every element (or the given subset), shape ``(len, d)``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected a vector of length {self.dimension}, got shape {x.shape}")
        if elements is None:
            src = self._src
        else:
            src = self._src[[self._index_of(g) for g in elements]]
        out = x[src]
        out[src < 0] = 0.0
        return out

    @property
    def identity(self) -> GroupElement:
        ident = np.arange(self.dimension).tobytes()
        try:
            return self.elements[self._lookup[ident]]
        except KeyError:
            raise LookupError("element table has no identity") from None

    def find(self, source_map: np.ndarray) -> GroupElement:
        key = np.asarray(source_map, dtype=np.int64).tobytes()
        try:
            return self.elements[self._lookup[key]]
        except KeyError:
            raise LookupError("transform is not in the element table") from None

    def compose(self, a: GroupElement, b: GroupElement) -> GroupElement:
        """Table element equal to ``a o b`` (apply ``b`` first)."""
        sa, sb = self.source_map(a), self.source_map(b)
        composed = np.where(sa < 0, -1, sb[np.maximum(sa, 0)])
        return self.find(composed)

    def inverse(self, g: GroupElement) -> GroupElement:
        src = self.source_map(g)
        if (src < 0).any():
            raise LookupError(f"element {g.descriptor} is not invertible")
        inv = np.empty_like(src)
        inv[src] = np.arange(self.dimension)
        return self.find(inv)

    def descriptor(self) -> dict:
        """Plain-data description, inverse of :func:`action_from_descriptor`."""
        return {"kind": self.kind, **self.params}


def trivial_group(dimension: int) -> GroupAction:
    return GroupAction(TRIVIAL, dimension, [()], np.arange(dimension)[None, :], exact=True,
                       params={"dimension": int(dimension)})


def block_permutation(blocks: int, block_size: int, max_elements: int = DEFAULT_ELEMENT_CAP) -> GroupAction:
    """Symmetric group on ``blocks`` contiguous blocks of ``block_size`` coordinates.

    Output block ``b`` is input block ``perm[b]``.  Elements are listed in
    lexicographic order of ``perm`` so the identity comes first.
    """
    if blocks < 1 or block_size < 1:
        raise ValueError("blocks and block_size must be positive")
    if blocks > MAX_BLOCKS:
        raise CapacityError(f"block permutation limited to {MAX_BLOCKS} blocks, got {blocks}")
    order = math.factorial(blocks)
    if order > max_elements:
        raise CapacityError(f"{blocks}! = {order} elements exceeds cap {max_elements}")
    perms = list(itertools.permutations(range(blocks)))
    offsets = np.arange(block_size)
    src = np.array([np.concatenate([p * block_size + offsets for p in perm]) for perm in perms])
    return GroupAction(BLOCK_PERMUTATION, blocks * block_size, perms, src, exact=True,
                       params={"blocks": int(blocks), "block_size": int(block_size)})


def cyclic_shift(dimension: int, order: int | None = None) -> GroupAction:
    """Cyclic coordinate rotations; shift ``r`` sends ``x[k]`` to position ``k + r``.

    With ``order`` given, only shifts by multiples of ``dimension // order``
    are kept (the cyclic subgroup of that order).
    """
    if dimension < 1:
        raise ValueError("dimension must be positive")
    order = dimension if order is None else int(order)
    if order < 1 or dimension % order:
        raise ValueError(f"order {order} must divide dimension {dimension}")
    step = dimension // order
    shifts = [r * step for r in range(order)]
    k = np.arange(dimension)
    src = np.array([(k - r) % dimension for r in shifts])
    params = {"dimension": int(dimension)}
    if order != dimension:
        params["order"] = order
    return GroupAction(CYCLIC_SHIFT, dimension, [(r,) for r in shifts], src, exact=True,
                       params=params)


def _angle_grid(angle_range: float, angle_step: float) -> list[float]:
    if angle_range == 0:
        return [0.0]
    if angle_step <= 0:
        raise ValueError("angle_step must be positive")
    count = int(math.floor(2 * angle_range / angle_step + 1e-9))
    return [float(-angle_range + i * angle_step) for i in range(count + 1)]


def _image_source_map(rows: int, cols: int, dx: int, dy: int, angle: float) -> np.ndarray:
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    # undo the cyclic translation, then look up the nearest pre-rotation pixel
    r0 = (r - dy) % rows
    c0 = (c - dx) % cols
    if angle == 0:
        sr, sc = r0, c0
        valid = np.ones_like(r0, dtype=bool)
    else:
        theta = math.radians(angle)
        cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
        u, v = c0 - cx, r0 - cy
        su = math.cos(theta) * u + math.sin(theta) * v
        sv = -math.sin(theta) * u + math.cos(theta) * v
        sc = np.rint(su + cx).astype(np.int64)
        sr = np.rint(sv + cy).astype(np.int64)
        valid = (sr >= 0) & (sr < rows) & (sc >= 0) & (sc < cols)
    src = np.where(valid, sr * cols + sc, -1)
    return src.ravel()


def image_euclidean(rows: int, cols: int, max_shift: int = 3, angle_range: float = 20.0,
                    angle_step: float = 5.0, max_elements: int = DEFAULT_ELEMENT_CAP) -> GroupAction:
    """Integer translations (cyclic boundary) composed with nearest-neighbour rotations.

    The table is the product of ``(2*max_shift+1)**2`` translations and the
    angle grid ``-angle_range, -angle_range+angle_step, ..., angle_range``.
    Only the translation-only table (``angle_range == 0``) is exactly unitary.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"image dimensions must be positive, got {rows}x{cols}")
    if max_shift < 0 or angle_range < 0:
        raise ValueError("max_shift and angle_range must be non-negative")
    angles = _angle_grid(angle_range, angle_step)
    shifts = range(-max_shift, max_shift + 1)
    count = len(angles) * len(shifts) ** 2
    if count > max_elements:
        raise CapacityError(f"{count} image transforms exceeds cap {max_elements}")
    descriptors, maps = [], []
    for angle in angles:
        for dy in shifts:
            for dx in shifts:
                descriptors.append((dx, dy, angle))
                maps.append(_image_source_map(rows, cols, dx, dy, angle))
    exact = all(a == 0 for a in angles)
    params = {"rows": int(rows), "cols": int(cols), "max_shift": int(max_shift),
              "angle_range": float(angle_range), "angle_step": float(angle_step)}
    return GroupAction(IMAGE_EUCLIDEAN, rows * cols, descriptors, np.array(maps), exact=exact,
                       params=params)


def action_from_descriptor(desc: dict) -> GroupAction:
    desc = dict(desc)
    kind = desc.pop("kind")
    builders = {
        TRIVIAL: trivial_group,
        BLOCK_PERMUTATION: block_permutation,
        CYCLIC_SHIFT: cyclic_shift,
        IMAGE_EUCLIDEAN: image_euclidean,
    }
    if kind not in builders:
        raise ValueError(f"unknown group kind {kind!r}")
    return builders[kind](**desc)


def apply(action: GroupAction, g: GroupElement | int, x: np.ndarray) -> np.ndarray:
    return action.apply(g, x)


def enumerate_elements(action: GroupAction, cap: int | None = None) -> list[GroupElement]:
    """All table elements in deterministic order."""
    if cap is not None and len(action) > cap:
        raise CapacityError(f"enumeration of {len(action)} elements exceeds cap {cap}")
    return list(action.elements)


def sample_elements(action: GroupAction, count: int, seed: SeedLike) -> list[GroupElement]:
    """Draw ``count`` elements i.i.d. uniformly, with replacement."""
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    rng = as_generator(seed)
    picks = rng.integers(0, len(action), size=count)
    return [action.elements[i] for i in picks]
