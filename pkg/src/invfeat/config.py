"""Experiment configuration files.

A config is a small TOML document::

    kind = "xperm-learning-curve"
    seed = 7
    trials = 20

    [features]
    templates = 25
    bins = 20

    [classifier]
    methods = ["phi-rls", "bow-rls"]

``kind`` and ``seed`` are mandatory; everything else has a per-kind default.
Unknown keys and wrongly typed values are rejected with the offending line.
:func:`emit_config` writes the fully resolved canonical form, whose SHA-256
is the config hash stamped on every output file.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field

from .groups import CapacityError, action_from_descriptor

try:
    import tomllib
except ModuleNotFoundError:                 # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "KINDS",
    "parse_config",
    "load_config",
    "emit_config",
    "config_hash",
]

KINDS = (
    "invariance-check",
    "kernel-concentration",
    "xperm-learning-curve",
    "bins-templates-sweep",
    "group-subsample-sweep",
    "mnist-sweep",
    "bounds-report",
)
SECTIONS = ("group", "features", "dataset", "classifier", "sweep")
METHODS = ("phi-rls", "bow-rls", "raw-rls", "phi-nn", "haar-rls")


class ConfigError(ValueError):
    """Validation failure; ``path`` is the dotted key and ``line`` its line (if known)."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = f"line {line}: " if line else ""
        what = f"{path}: " if path else ""
        super().__init__(f"{where}{what}{message}")


# value checkers ---------------------------------------------------------------

def _int(v, pos=True):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    if pos and v < 1:
        raise ValueError("must be positive")
    return v


def _nonneg_int(v):
    _int(v, pos=False)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _pos_float(v):
    v = _float(v)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _unit_open(v):
    v = _float(v)
    if not 0 < v < 1:
        raise ValueError("must lie in (0, 1)")
    return v


def _nonneg_float(v):
    v = _float(v)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _dimension(v):
    _int(v)
    if v < 2:
        raise ValueError("must be at least 2")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _choice(*options):
    def check(v):
        _str(v)
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return check


def _list(item, min_len=1, max_len=None):
    def check(v):
        if not isinstance(v, list):
            raise TypeError("expected a list")
        if len(v) < min_len or (max_len is not None and len(v) > max_len):
            raise ValueError(f"expected {min_len}..{max_len or 'any'} entries")
        return [item(x) for x in v]
    return check


def _elements(v):
    if v == "full":
        return v
    try:
        return _int(v)
    except TypeError:
        raise TypeError('expected a positive integer or "full"') from None


def _lambda(v):
    if v == "auto":
        return v
    try:
        return _pos_float(v)
    except TypeError:
        raise TypeError('expected a positive number or "auto"') from None


TOP = {
    "kind": _choice(*KINDS),
    "seed": _nonneg_int,
    "output": _str,
    "trials": _int,
}

SCHEMA = {
    "group": {
        "kind": _choice("block-permutation", "cyclic-shift", "image-euclidean", "trivial"),
        "blocks": _int, "block_size": _int, "dimension": _int, "order": _int,
        "rows": _int, "cols": _int, "max_shift": _nonneg_int,
        "angle_range": _nonneg_float,
        "angle_step": _pos_float,
    },
    "features": {
        "epsilon": _unit_open,
        "templates": _int,
        "bins": _int,
        "elements": _elements,
        "sampler": _choice("gaussian-rejection", "uniform-sphere"),
    },
    "dataset": {
        "name": _choice("xperm", "idx"),
        "targets": _list(_nonneg_int, 2, 2),
        "train_mode": _choice("full", "core"),
        "balanced": _bool,
        "train_size": _int,
        "test_points": _nonneg_int,
        "points": _int,
        "images": _str,
        "labels": _str,
        "test_images": _str,
        "test_labels": _str,
    },
    "classifier": {
        "methods": _list(_choice(*METHODS)),
        "lambda": _lambda,
        "lambda_grid": _list(_pos_float),
        "holdout": _unit_open,
    },
    "sweep": {
        "sizes": _list(_int),
        "bins": _list(_int),
        "templates": _list(_int),
        "elements": _list(_int),
        "pairs": _int,
        "reference_templates": _int,
        "dimensions": _list(_dimension),
        "epsilons": _list(_unit_open),
        "draws": _int,
        "resamples": _int,
    },
}

XPERM_GROUP = {"kind": "block-permutation", "blocks": 5, "block_size": 8}
IMAGE_GROUP = {"kind": "image-euclidean", "max_shift": 3, "angle_range": 20.0, "angle_step": 5.0}
BASE_FEATURES = {"epsilon": 0.1, "sampler": "gaussian-rejection", "elements": "full"}
BASE_CLASSIFIER = {"lambda": "auto", "lambda_grid": [1e-8, 1e-6, 1e-4, 1e-2, 1.0], "holdout": 0.2}
XPERM = {"name": "xperm", "train_mode": "full", "balanced": True, "test_points": 0}

DEFAULTS = {
    "invariance-check": {
        "trials": 1,
        "group": XPERM_GROUP,
        "features": {**BASE_FEATURES, "templates": 10, "bins": 20},
        "dataset": {"name": "xperm", "points": 100},
    },
    "kernel-concentration": {
        "trials": 50,
        "group": XPERM_GROUP,
        "features": {**BASE_FEATURES, "templates": 25, "bins": 500},
        "dataset": {"name": "xperm"},
        "sweep": {"templates": [8, 16, 32, 64, 128, 256, 512, 1024], "pairs": 20,
                  "reference_templates": 4096},
    },
    "xperm-learning-curve": {
        "trials": 100,
        "group": XPERM_GROUP,
        "features": {**BASE_FEATURES, "templates": 25, "bins": 20},
        "dataset": dict(XPERM),
        "classifier": {**BASE_CLASSIFIER, "methods": ["phi-rls", "bow-rls", "raw-rls", "phi-nn"]},
        "sweep": {"sizes": [250, 500, 1000, 2000, 4000]},
    },
    "bins-templates-sweep": {
        "trials": 30,
        "group": XPERM_GROUP,
        "features": dict(BASE_FEATURES),
        "dataset": {**XPERM, "train_size": 4000},
        "classifier": {**BASE_CLASSIFIER, "methods": ["phi-rls"]},
        "sweep": {"bins": [5, 10, 20, 40], "templates": [5, 10, 25, 50]},
    },
    "group-subsample-sweep": {
        "trials": 20,
        "group": XPERM_GROUP,
        "features": {**BASE_FEATURES, "templates": 25, "bins": 20},
        "dataset": {**XPERM, "train_size": 4000},
        "classifier": {**BASE_CLASSIFIER, "methods": ["phi-rls"]},
        "sweep": {"elements": [10, 30, 60, 120]},
    },
    "mnist-sweep": {
        "trials": 5,
        "group": IMAGE_GROUP,
        "features": {**BASE_FEATURES, "bins": 20},
        "dataset": {"name": "idx", "train_size": 500, "test_points": 500},
        "classifier": {**BASE_CLASSIFIER, "methods": ["phi-rls"]},
        "sweep": {"templates": [5, 10, 25, 50]},
    },
    "bounds-report": {
        "trials": 1,
        "features": {"epsilon": 0.1},
        "sweep": {"dimensions": [10, 100, 1000, 10000], "epsilons": [0.1, 0.3, 0.5, 0.7, 0.9],
                  "draws": 100000, "resamples": 2000},
    },
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    output: str
    trials: int
    group: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def canonical(self) -> str:
        return emit_config(self)

    @property
    def hash(self) -> str:
        return config_hash(self)


_SECTION_RE = re.compile(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]")
_KEY_RE = re.compile(r'^\s*("?)([A-Za-z0-9_-]+)\1\s*=')


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of each ``key = value`` line, keyed by (section, key)."""
    lines, section = {}, ""
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            lines.setdefault((section, ""), no)
            continue
        m = _KEY_RE.match(line)
        if m:
            lines.setdefault((section, m.group(2)), no)
    return lines


def _check(checker, value, path, line):
    try:
        return checker(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{exc} (got {value!r})", path, line) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse, validate and fill defaults."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed document: {exc}") from None
    lines = _key_lines(text)

    top = {}
    sections = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SCHEMA:
                raise ConfigError("unknown section", key, lines.get((key, "")))
            sections[key] = value
        elif key in TOP:
            top[key] = _check(TOP[key], value, key, lines.get(("", key)))
        else:
            raise ConfigError("unknown key", key, lines.get(("", key)))
    for key in ("kind", "seed"):
        if key not in top:
            raise ConfigError("missing mandatory key", key)

    kind = top["kind"]
    defaults = DEFAULTS[kind]
    resolved = {}
    for name, schema in SCHEMA.items():
        given = sections.get(name, {})
        out = {}
        for key, value in given.items():
            path = f"{name}.{key}"
            line = lines.get((name, key))
            if key not in schema:
                raise ConfigError("unknown key", path, line)
            out[key] = _check(schema[key], value, path, line)
        base = copy.deepcopy(defaults.get(name, {}))
        if name == "group" and "kind" in out and out["kind"] != base.get("kind"):
            base = {}
        resolved[name] = {**base, **out}

    cfg = ExperimentConfig(
        kind=kind, seed=top["seed"],
        output=top.get("output", f"results/{kind}.csv"),
        trials=top.get("trials", defaults["trials"]),
        **resolved)
    _cross_check(cfg, lines)
    return cfg


def _cross_check(cfg: ExperimentConfig, lines: dict) -> None:
    def fail(msg, section, key):
        raise ConfigError(msg, f"{section}.{key}", lines.get((section, key)))

    ds, feat, sweep = cfg.dataset, cfg.features, cfg.sweep
    if cfg.kind == "mnist-sweep":
        for key in ("images", "labels"):
            if key not in ds:
                fail("required for mnist-sweep", "dataset", key)
    if ds.get("name") == "xperm" and "targets" in ds and ds["targets"][0] == ds["targets"][1]:
        fail("target characters must differ", "dataset", "targets")
    if "targets" in ds and max(ds["targets"]) >= 8:
        fail("target characters must be below the alphabet size 8", "dataset", "targets")
    if cfg.kind == "xperm-learning-curve" and ds.get("balanced", True):
        for size in sweep.get("sizes", []):
            if size % 2:
                fail(f"balanced training size {size} must be even", "sweep", "sizes")
    if cfg.kind == "group-subsample-sweep" and feat.get("elements") != "full":
        fail('the sweep sets the element count; leave features.elements = "full"', "features",
             "elements")
    group = dict(cfg.group)
    if group and not (group.get("kind") == "image-euclidean" and "rows" not in group):
        try:
            action_from_descriptor(group)
        except (TypeError, ValueError, CapacityError) as exc:
            raise ConfigError(f"invalid group: {exc}", "group", lines.get(("group", ""))) from None
    if "bins" not in feat and cfg.kind not in ("bins-templates-sweep", "bounds-report"):
        fail("missing", "features", "bins")


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v).__name__}")


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical text: fixed key order, every default spelled out."""
    out = [f"kind = {_fmt_value(cfg.kind)}", f"seed = {cfg.seed}",
           f"output = {_fmt_value(cfg.output)}", f"trials = {cfg.trials}"]
    for name in SECTIONS:
        values = getattr(cfg, name)
        if not values:
            continue
        out.append("")
        out.append(f"[{name}]")
        for key in sorted(values):
            out.append(f"{key} = {_fmt_value(values[key])}")
    return "\n".join(out) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
