"""Random templates and the table of their group-transformed copies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._seeding import SeedLike, as_generator, derive_seed
from .groups import GroupAction, GroupElement

__all__ = [
    "SamplingError",
    "TemplateBank",
    "ProjectionTable",
    "sample_gaussian_rejection",
    "sample_uniform_sphere",
    "make_bank",
    "build_projection_table",
]

GAUSSIAN_REJECTION = "gaussian-rejection"
UNIFORM_SPHERE = "uniform-sphere"
SAMPLERS = (GAUSSIAN_REJECTION, UNIFORM_SPHERE)

MAX_REJECTIONS = 1_000_000


class SamplingError(RuntimeError):
    pass


def sample_gaussian_rejection(d: int, epsilon: float, seed: SeedLike) -> np.ndarray:
    """Draw ``n ~ N(0, I/d)`` conditioned on ``||n||^2 < 1 + epsilon``."""
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    rng = as_generator(seed)
    scale = 1.0 / np.sqrt(d)
    for _ in range(MAX_REJECTIONS):
        n = rng.normal(0.0, scale, size=d)
        if n @ n < 1.0 + epsilon:
            return n
    raise SamplingError(f"{MAX_REJECTIONS} consecutive rejections at d={d}, epsilon={epsilon}")


def sample_uniform_sphere(d: int, seed: SeedLike) -> np.ndarray:
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    rng = as_generator(seed)
    while True:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 0:
            return v / norm


@dataclass(frozen=True)
class TemplateBank:
    """``m`` templates of length ``d`` plus the truncation level ``s``.

    ``s = radius * (1 + epsilon)``; ``radius`` is 1 for unit-norm data and
    only differs in relaxed-norm mode.
    """

    templates: np.ndarray
    epsilon: float
    kind: str = GAUSSIAN_REJECTION
    seed: int | None = None
    radius: float = 1.0

    def __post_init__(self):
        t = np.array(self.templates, dtype=float)
        if t.ndim != 2 or t.shape[0] < 1:
            raise ValueError(f"templates must be a non-empty (m, d) array, got shape {t.shape}")
        if self.kind not in SAMPLERS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        t.setflags(write=False)
        object.__setattr__(self, "templates", t)

    @property
    def m(self) -> int:
        return self.templates.shape[0]

    @property
    def d(self) -> int:
        return self.templates.shape[1]

    @property
    def s(self) -> float:
        return self.radius * (1.0 + self.epsilon)

    def subset(self, indices) -> "TemplateBank":
        return TemplateBank(self.templates[indices], self.epsilon, self.kind, self.seed, self.radius)


def make_bank(d: int, m: int, epsilon: float = 0.1, kind: str = GAUSSIAN_REJECTION,
              seed: int = 0, radius: float = 1.0, start: int = 0) -> TemplateBank:
    """Sample templates ``start .. start+m-1`` of the stream for ``seed``.

    Template ``j`` always comes from the child seed ``(seed, "template", j)``,
    so banks of different sizes drawn from the same seed share a prefix.
    """
    if m < 1:
        raise ValueError(f"need at least one template, got m={m}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    rows = []
    for j in range(start, start + m):
        child = derive_seed(seed, "template", j)
        if kind == GAUSSIAN_REJECTION:
            rows.append(sample_gaussian_rejection(d, epsilon, child))
        elif kind == UNIFORM_SPHERE:
            rows.append(sample_uniform_sphere(d, child))
        else:
            raise ValueError(f"unknown sampler kind {kind!r}")
    return TemplateBank(np.array(rows), epsilon, kind, seed, radius)


@dataclass(frozen=True)
class ProjectionTable:
    """Stored transformed templates ``g_i t_j``, shape ``(|G|, m, d)``.

    Projections of a data point are computed on demand with :meth:`project`.
    """

    vectors: np.ndarray
    bank: TemplateBank
    elements: tuple[GroupElement, ...]
    group: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def n_elements(self) -> int:
        return self.vectors.shape[0]

    @property
    def m(self) -> int:
        return self.vectors.shape[1]

    @property
    def d(self) -> int:
        return self.vectors.shape[2]

    @property
    def s(self) -> float:
        return self.bank.s

    @property
    def provenance(self) -> dict:
        return {"group": self.group, "bank_seed": self.bank.seed, "m": self.m,
                "epsilon": self.bank.epsilon, "kind": self.bank.kind,
                "elements": [g.index for g in self.elements]}

    def project(self, X: np.ndarray, chunk: int = 1024) -> np.ndarray:
        """Dot products ``<g_i t_j, x>`` for every row ``x``; shape ``(N, |G|, m)``.

        A single vector gives shape ``(|G|, m)``.
        """
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.d:
            raise ValueError(f"points have dimension {X.shape[1]}, table has {self.d}")
        flat = self.vectors.reshape(-1, self.d)
        out = np.empty((X.shape[0], self.n_elements, self.m))
        for lo in range(0, X.shape[0], chunk):
            out[lo:lo + chunk] = (X[lo:lo + chunk] @ flat.T).reshape(-1, self.n_elements, self.m)
        return out[0] if single else out


def build_projection_table(bank: TemplateBank, elements: Sequence[GroupElement],
                           action: GroupAction) -> ProjectionTable:
    if bank.d != action.dimension:
        raise ValueError(f"templates have dimension {bank.d}, action acts on {action.dimension}")
    if len(elements) < 1:
        raise ValueError("need at least one group element")
    vectors = np.stack([action.apply(g, bank.templates) for g in elements])
    return ProjectionTable(vectors, bank, tuple(elements), action.descriptor())
