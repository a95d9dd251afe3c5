"""CSV dumps for banks, tables, features, Gram matrices, models and datasets.

Every file starts with one ``# <tag> <json>`` metadata line, then plain CSV.
Floats are written with ``repr`` so a dump reloads bit-for-bit.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .datasets import LabeledDataset
from .features import FeatureMeta, feature_matrix
from .groups import GroupAction
from .kernels import GramMatrix
from .learning import RlsModel
from .templates import ProjectionTable, TemplateBank

__all__ = [
    "FormatError",
    "write_bank",
    "read_bank",
    "write_table",
    "read_table",
    "write_features",
    "read_features",
    "cached_feature_matrix",
    "write_gram",
    "read_gram",
    "write_model",
    "read_model",
    "write_dataset",
]


class FormatError(ValueError):
    pass


def _fmt(v) -> str:
    return repr(float(v))


def _write(path, tag: str, meta: dict, header: list[str] | None, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {tag} {json.dumps(meta, sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _read(path, tag: str, has_header: bool) -> tuple[dict, list[str] | None, np.ndarray]:
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        prefix = f"# {tag} "
        if not first.startswith(prefix):
            raise FormatError(f"{path}: expected a '{prefix.strip()}' metadata line")
        try:
            meta = json.loads(first[len(prefix):])
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: bad metadata: {exc}") from exc
        reader = csv.reader(fh)
        header = next(reader, None) if has_header else None
        rows = [r for r in reader if r]
    data = np.array([[float(v) for v in r] for r in rows]) if rows else np.empty((0, 0))
    return meta, header, data


def _bank_meta(bank: TemplateBank) -> dict:
    return {"d": bank.d, "m": bank.m, "epsilon": bank.epsilon, "kind": bank.kind,
            "seed": bank.seed, "radius": bank.radius}


def write_bank(bank: TemplateBank, path) -> None:
    """One template per row."""
    _write(path, "bank", _bank_meta(bank), None, ([_fmt(v) for v in t] for t in bank.templates))


def read_bank(path) -> TemplateBank:
    meta, _, data = _read(path, "bank", False)
    if data.shape != (meta["m"], meta["d"]):
        raise FormatError(f"{path}: expected {meta['m']}x{meta['d']} values, got {data.shape}")
    return TemplateBank(data, meta["epsilon"], meta["kind"], meta["seed"], meta["radius"])


def write_table(table: ProjectionTable, path) -> None:
    """The ``m`` bank templates, then ``g_i t_j`` at row ``m + i*m + j``."""
    meta = {**_bank_meta(table.bank), "group": table.group,
            "elements": [g.index for g in table.elements]}
    flat = np.concatenate([table.bank.templates, table.vectors.reshape(-1, table.d)])
    _write(path, "table", meta, None, ([_fmt(v) for v in row] for row in flat))


def read_table(path, action: GroupAction) -> ProjectionTable:
    """Reload a table; ``action`` supplies the element objects and must match the dump."""
    meta, _, data = _read(path, "table", False)
    if action.descriptor() != meta["group"]:
        raise FormatError(f"{path}: table was built for {meta['group']}, not {action.descriptor()}")
    G, m, d = len(meta["elements"]), meta["m"], meta["d"]
    if data.shape != ((G + 1) * m, d):
        raise FormatError(f"{path}: expected {(G + 1) * m}x{d} values, got {data.shape}")
    bank = TemplateBank(data[:m], meta["epsilon"], meta["kind"], meta["seed"], meta["radius"])
    elements = tuple(action.elements[i] for i in meta["elements"])
    return ProjectionTable(data[m:].reshape(G, m, d), bank, elements, meta["group"])


def _feature_header(meta: FeatureMeta) -> list[str]:
    return [f"j{j}:k{k}" for j in range(meta.m) for k in range(-meta.n, meta.n + 1)]


def write_features(F: np.ndarray, meta: FeatureMeta, path) -> None:
    F = np.atleast_2d(F)
    if F.shape[1] != meta.dim:
        raise ValueError(f"feature width {F.shape[1]} does not match metadata ({meta.dim})")
    info = {"m": meta.m, "n": meta.n, "s": meta.s, "n_elements": meta.n_elements}
    _write(path, "features", info, _feature_header(meta), ([_fmt(v) for v in row] for row in F))


def read_features(path) -> tuple[np.ndarray, FeatureMeta]:
    info, header, data = _read(path, "features", True)
    meta = FeatureMeta(info["m"], info["n"], info["s"], info["n_elements"])
    if header != _feature_header(meta):
        raise FormatError(f"{path}: column header does not match m={meta.m}, n={meta.n}")
    return data.reshape(-1, meta.dim), meta


def cached_feature_matrix(X: np.ndarray, table: ProjectionTable, n: int, cache_dir,
                          relaxed: bool = False) -> np.ndarray:
    """:func:`feature_matrix` memoised in ``cache_dir`` as ``.npy``.

    The key hashes the point bytes, the table vectors and provenance, and ``n``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    h = hashlib.sha256()
    h.update(X.tobytes())
    h.update(str(X.shape).encode())
    h.update(np.ascontiguousarray(table.vectors).tobytes())
    h.update(json.dumps(table.provenance, sort_keys=True, default=str).encode())
    h.update(f"n={n};relaxed={relaxed}".encode())
    path = Path(cache_dir) / f"features-{h.hexdigest()[:32]}.npy"
    if path.exists():
        return np.load(path)
    F = feature_matrix(X, table, n, relaxed=relaxed)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npy")
    np.save(tmp, F)
    tmp.replace(path)
    return F


def write_gram(gram: GramMatrix, path) -> None:
    _write(path, "gram", gram.descriptor, None, ([_fmt(v) for v in row] for row in gram.values))


def read_gram(path) -> GramMatrix:
    meta, _, data = _read(path, "gram", False)
    if data.shape[0] != data.shape[1]:
        raise FormatError(f"{path}: Gram matrix is not square ({data.shape})")
    return GramMatrix(data, meta)


def write_model(model: RlsModel, path, extra: dict | None = None) -> None:
    """``W`` with one row per feature and one column per class."""
    meta = {"lambda": model.lam, "n_features": model.n_features, "n_classes": model.n_classes,
            **(extra or {})}
    header = [f"class{t}" for t in range(model.n_classes)]
    _write(path, "rls-model", meta, header, ([_fmt(v) for v in row] for row in model.W))


def read_model(path) -> RlsModel:
    meta, header, W = _read(path, "rls-model", True)
    W = W.reshape(meta["n_features"], meta["n_classes"])
    return RlsModel(W, meta["lambda"], meta["n_features"], meta["n_classes"])


def write_dataset(dataset: LabeledDataset, path, meta: dict | None = None) -> None:
    """One row per point: label, orbit id, core flag, coordinates."""
    d = dataset.points.shape[1]
    header = ["label", "orbit", "core"] + [f"x{i}" for i in range(d)]
    info = dict(meta or {})
    if dataset.spec is not None:
        info.update(alphabet=dataset.spec.alphabet, length=dataset.spec.length,
                    targets=list(dataset.spec.targets))
    if dataset.action is not None:
        info["group"] = dataset.action.descriptor()

    def rows():
        for y, o, c, x in zip(dataset.labels, dataset.orbit_ids, dataset.core_mask, dataset.points):
            yield [int(y), int(o), int(bool(c))] + [_fmt(v) for v in x]

    _write(path, "dataset", info, header, rows())
