"""Experiment runners behind ``invfeat run``.

Each kind writes a long-format CSV (``x, series, trial, value, seed``) and a
``_summary.csv`` with per-(x, series) mean, sd and standard error.  Both
files open with ``#`` lines echoing the canonical config and its hash.

Trial ``t`` draws everything from ``derive_seed(master, kind, t)``, so a
trial's numbers do not depend on how many trials run or in which order; the
worker count (``INVFEAT_WORKERS``) only changes wall-clock time.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from . import __version__
from ._seeding import as_generator, derive_seed
from .analysis import (BoundReport, chi2_tail_lower, chunked_sampled_ks_pairs, chi2_tail_upper, clark_max_moments,
                       delta_bounds, dkw_bound, dkw_violation_rate, empirical_chi2_tails,
                       mc_max_moments, measure_concentration, reports_to_csv,
                       theorem2_sample_sizes, theorem3_terms)
from .config import ExperimentConfig, config_hash, emit_config
from .datasets import LabeledDataset, gen_xperm, load_idx, split_train_test
from .features import feature_matrix
from .groups import GroupAction, action_from_descriptor, enumerate_elements, sample_elements
from .learning import (accuracy, bag_of_words, kernel_rls_predict, kernel_rls_train,
                       nn_classify_batch, rls_predict, rls_train, select_lambda)
from .templates import build_projection_table, make_bank

__all__ = ["Row", "RunResult", "run", "trial_seed", "summarize", "xperm_orbit_gram"]

WORKERS_ENV = "INVFEAT_WORKERS"
HEADER = ["x", "series", "trial", "value", "seed"]


@dataclass(frozen=True)
class Row:
    x: float
    series: str
    trial: int
    value: float
    seed: int


@dataclass
class RunResult:
    rows: list
    paths: list
    reports: list | None = None


def trial_seed(cfg: ExperimentConfig, trial: int) -> int:
    """32-bit seed for one trial, recorded in every output row."""
    return int(derive_seed(cfg.seed, cfg.kind, trial).generate_state(1)[0])


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _map_trials(fn: Callable[[int, int], list], cfg: ExperimentConfig) -> list[Row]:
    trials = range(cfg.trials)
    seeds = [trial_seed(cfg, t) for t in trials]
    workers = min(_workers(), cfg.trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(fn, trials, seeds))
    else:
        chunks = [fn(t, s) for t, s in zip(trials, seeds)]
    return [row for chunk in chunks for row in chunk]


# shared pieces ----------------------------------------------------------------

def _action(cfg: ExperimentConfig, rows: int | None = None, cols: int | None = None) -> GroupAction:
    desc = dict(cfg.group)
    if desc.get("kind") == "image-euclidean":
        desc.setdefault("rows", rows)
        desc.setdefault("cols", cols)
    return action_from_descriptor(desc)


def _elements(cfg: ExperimentConfig, action: GroupAction, seed, count=None):
    count = cfg.features.get("elements", "full") if count is None else count
    if count == "full":
        return enumerate_elements(action)
    return sample_elements(action, int(count), derive_seed(seed, "elements", int(count)))


def _bank(cfg: ExperimentConfig, d: int, m: int, seed: int):
    return make_bank(d, m, cfg.features["epsilon"], cfg.features["sampler"], seed)


def _xperm(cfg: ExperimentConfig) -> LabeledDataset:
    targets = cfg.dataset.get("targets")
    return gen_xperm(cfg.seed, targets=None if targets is None else tuple(targets))


def _check_dims(action: GroupAction, d: int, what: str):
    if action.dimension != d:
        raise ValueError(f"group acts on dimension {action.dimension} but {what} has {d}")


def _split(cfg: ExperimentConfig, ds: LabeledDataset, n_train: int, seed):
    train, test = split_train_test(ds, n_train, balanced=cfg.dataset.get("balanced", True),
                                   core_only=cfg.dataset.get("train_mode") == "core",
                                   seed=derive_seed(seed, "split", n_train))
    k = cfg.dataset.get("test_points", 0)
    if k and k < len(test):
        pick = np.sort(as_generator(derive_seed(seed, "test", n_train)).choice(len(test), k, replace=False))
        test = test.subset(pick)
    return train, test


def _lambda(cfg: ExperimentConfig, F, y, T, seed, tag) -> float:
    lam = cfg.classifier.get("lambda", "auto")
    if lam != "auto":
        return float(lam)
    return select_lambda(F, y, cfg.classifier["lambda_grid"], cfg.classifier["holdout"],
                         seed=derive_seed(seed, "lambda", tag), T=T)


def _fit_score(cfg, method, Ftr, ytr, Fte, yte, T, seed, tag) -> float:
    if method.endswith("-nn"):
        return accuracy(nn_classify_batch(Ftr, ytr, Fte), yte)
    lam = _lambda(cfg, Ftr, ytr, T, seed, (method, tag))
    return accuracy(rls_predict(rls_train(Ftr, ytr, T, lam), Fte), yte)


def _select_kernel_lambda(cfg, K, y, T, seed) -> float:
    lam = cfg.classifier.get("lambda", "auto")
    if lam != "auto":
        return float(lam)
    grid = sorted(cfg.classifier["lambda_grid"])
    N = len(y)
    perm = as_generator(seed).permutation(N)
    n_hold = int(round(cfg.classifier["holdout"] * N))
    hold, fit = perm[:n_hold], perm[n_hold:]
    if n_hold == 0 or len(fit) == 0 or len(np.unique(y[hold])) < 2:
        return grid[len(grid) // 2]
    best, best_acc = grid[0], -1.0
    for g in grid:
        alpha = kernel_rls_train(K[np.ix_(fit, fit)], y[fit], T, g)
        acc = accuracy(kernel_rls_predict(K[np.ix_(hold, fit)], alpha), y[hold])
        if acc >= best_acc:
            best, best_acc = g, acc
    return best


def xperm_orbit_gram(ds: LabeledDataset, gamma: float | None = None, chunk: int = 64) -> np.ndarray:
    """Exact Haar-integrated RBF kernel between X_perm orbits.

    For a group acting unitarily, averaging ``k(g x, g' z)`` over both
    elements equals averaging ``k(x, g z)`` over one, so orbit ``a`` against
    orbit ``b`` only needs the representative of ``a`` against the orbit of ``b``.
    """
    action = ds.action
    d = ds.points.shape[1]
    gamma = 1.0 / d if gamma is None else gamma
    n_orbits = int(ds.orbit_ids.max()) + 1
    reps = np.empty((n_orbits, d))
    reps[ds.orbit_ids[ds.core_mask]] = ds.points[ds.core_mask]
    G = len(action)
    K = np.empty((n_orbits, n_orbits))
    for lo in range(0, n_orbits, chunk):
        block = reps[lo:lo + chunk]
        orbits = np.stack([action.orbit(r) for r in block]).reshape(-1, d)
        vals = np.exp(-gamma * cdist(reps, orbits, "sqeuclidean"))
        K[:, lo:lo + len(block)] = vals.reshape(n_orbits, len(block), G).mean(axis=2)
    return K


# kinds ------------------------------------------------------------------------

def _invariance_check(cfg: ExperimentConfig) -> list[Row]:
    action = _action(cfg)
    feat = cfg.features
    n_points = cfg.dataset.get("points", 100)
    ds = _xperm(cfg) if action.dimension == 40 and cfg.dataset.get("name") == "xperm" else None

    def trial(t, seed):
        rng = as_generator(derive_seed(seed, "points"))
        if ds is not None:
            idx = np.sort(rng.choice(len(ds), size=min(n_points, len(ds)), replace=False))
            X = ds.points[idx]
        else:
            idx = np.arange(n_points)
            X = rng.standard_normal((n_points, action.dimension))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
        bank = _bank(cfg, action.dimension, feat["templates"], seed)
        table = build_projection_table(bank, _elements(cfg, action, seed), action)
        base = feature_matrix(X, table, feat["bins"])
        worst = np.zeros(len(X))
        for g in action.elements:
            diff = np.abs(feature_matrix(action.apply(g, X), table, feat["bins"], relaxed=not action.exact) - base)
            worst = np.maximum(worst, diff.max(axis=1))
        return [Row(int(i), "max-abs-diff", t, float(w), seed) for i, w in zip(idx, worst)]

    return _map_trials(trial, cfg)


def _kernel_concentration(cfg: ExperimentConfig) -> list[Row]:
    action = _action(cfg)
    ds = _xperm(cfg)
    _check_dims(action, ds.points.shape[1], "X_perm")
    sweep, feat = cfg.sweep, cfg.features
    rng = as_generator(derive_seed(cfg.seed, "pairs"))
    idx = rng.choice(len(ds), size=(sweep["pairs"], 2), replace=False)
    pairs = [(ds.points[i], ds.points[j]) for i, j in idx]
    ref_seed = int(derive_seed(cfg.seed, "reference").generate_state(1)[0])
    ref_bank = _bank(cfg, action.dimension, sweep["reference_templates"], ref_seed)
    k_ref = chunked_sampled_ks_pairs(pairs, ref_bank, action.elements, action)

    def trial(t, seed):
        rows = []
        elements = _elements(cfg, action, seed)
        for m in sweep["templates"]:
            bank = _bank(cfg, action.dimension, m, int(derive_seed(seed, "m", m).generate_state(1)[0]))
            reports = measure_concentration(pairs, bank, elements, action, feat["bins"],
                                            reference=ref_bank.m, reference_values=k_ref)
            for r in reports:
                rows.append(Row(m, r.name, t, float(r.empirical), seed))
                rows.append(Row(m, f"{r.name}-bound", t, float(r.value), seed))
        return rows

    return _map_trials(trial, cfg)


def _xperm_features(cfg, ds, methods, seed_label="templates"):
    """Per-method feature matrices over the whole dataset (``None`` for kernel methods)."""
    action = _action(cfg)
    _check_dims(action, ds.points.shape[1], "X_perm")
    feats = {}
    if any(m.startswith("phi") for m in methods):
        bank_seed = int(derive_seed(cfg.seed, seed_label).generate_state(1)[0])
        bank = _bank(cfg, action.dimension, cfg.features["templates"], bank_seed)
        table = build_projection_table(bank, _elements(cfg, action, bank_seed), action)
        feats["phi"] = feature_matrix(ds.points, table, cfg.features["bins"])
    if "bow-rls" in methods:
        feats["bow"] = np.stack([bag_of_words(x, ds.spec.alphabet) for x in ds.points])
    if "raw-rls" in methods:
        feats["raw"] = ds.points
    return feats


def _learning_curve(cfg: ExperimentConfig) -> list[Row]:
    ds = _xperm(cfg)
    methods = cfg.classifier["methods"]
    feats = _xperm_features(cfg, ds, methods)
    K_orbit = xperm_orbit_gram(ds) if "haar-rls" in methods else None
    T = ds.n_classes

    def trial(t, seed):
        rows = []
        for size in cfg.sweep["sizes"]:
            train, test = _split(cfg, ds, size, seed)
            for method in methods:
                if method == "haar-rls":
                    K = K_orbit[np.ix_(train.orbit_ids, train.orbit_ids)]
                    lam = _select_kernel_lambda(cfg, K, train.labels, T, derive_seed(seed, "lambda", method, size))
                    alpha = kernel_rls_train(K, train.labels, T, lam)
                    pred = kernel_rls_predict(K_orbit[np.ix_(test.orbit_ids, train.orbit_ids)], alpha)
                    acc = accuracy(pred, test.labels)
                else:
                    F = feats[method.split("-")[0]]
                    acc = _fit_score(cfg, method, F[train.indices], train.labels,
                                     F[test.indices], test.labels, T, seed, size)
                rows.append(Row(size, method, t, acc, seed))
        return rows

    return _map_trials(trial, cfg)


def _phi_on(points, bank, elements, action, n):
    return feature_matrix(points, build_projection_table(bank, elements, action), n)


def _bins_templates_sweep(cfg: ExperimentConfig) -> list[Row]:
    ds = _xperm(cfg)
    action = _action(cfg)
    _check_dims(action, ds.points.shape[1], "X_perm")
    ms, ns = cfg.sweep["templates"], cfg.sweep["bins"]
    methods = [m for m in cfg.classifier["methods"] if m.startswith("phi")]
    if not methods:
        raise ValueError("bins-templates-sweep needs a phi-* classifier method")
    T = ds.n_classes

    def trial(t, seed):
        rows = []
        train, test = _split(cfg, ds, cfg.dataset["train_size"], seed)
        bank = _bank(cfg, action.dimension, max(ms), seed)
        elements = _elements(cfg, action, seed)
        for m in ms:
            table = build_projection_table(bank.subset(slice(0, m)), elements, action)
            for n in ns:
                Ftr = feature_matrix(train.points, table, n)
                Fte = feature_matrix(test.points, table, n)
                for method in methods:
                    acc = _fit_score(cfg, method, Ftr, train.labels, Fte, test.labels, T, seed, (m, n))
                    rows.append(Row(m, f"{method}|n={n}", t, acc, seed))
        return rows

    return _map_trials(trial, cfg)


def _group_subsample_sweep(cfg: ExperimentConfig) -> list[Row]:
    ds = _xperm(cfg)
    action = _action(cfg)
    _check_dims(action, ds.points.shape[1], "X_perm")
    methods = [m for m in cfg.classifier["methods"] if m.startswith("phi")]
    if not methods:
        raise ValueError("group-subsample-sweep needs a phi-* classifier method")
    T = ds.n_classes
    n = cfg.features["bins"]

    def trial(t, seed):
        rows = []
        train, test = _split(cfg, ds, cfg.dataset["train_size"], seed)
        bank = _bank(cfg, action.dimension, cfg.features["templates"], seed)
        for G in cfg.sweep["elements"]:
            elements = _elements(cfg, action, seed, count=G)
            Ftr = _phi_on(train.points, bank, elements, action, n)
            Fte = _phi_on(test.points, bank, elements, action, n)
            for method in methods:
                acc = _fit_score(cfg, method, Ftr, train.labels, Fte, test.labels, T, seed, G)
                rows.append(Row(G, method, t, acc, seed))
        return rows

    return _map_trials(trial, cfg)


def _mnist_sweep(cfg: ExperimentConfig) -> list[Row]:
    ds = cfg.dataset
    train_set = load_idx(ds["images"], ds["labels"])
    separate = "test_images" in ds
    test_set = load_idx(ds["test_images"], ds["test_labels"]) if separate else train_set
    rows_px, cols_px = train_set.shape
    action = _action(cfg, rows_px, cols_px)
    _check_dims(action, rows_px * cols_px, "the images")
    Xtr_all, ytr_all = train_set.unit_vectors(), train_set.labels.astype(np.int64)
    Xte_all, yte_all = (test_set.unit_vectors(), test_set.labels.astype(np.int64)) if separate else (Xtr_all, ytr_all)
    T = int(max(ytr_all.max(), yte_all.max())) + 1
    n_train, n_test = ds["train_size"], ds.get("test_points", 0)
    methods = cfg.classifier["methods"]

    def trial(t, seed):
        rng = as_generator(derive_seed(seed, "images"))
        if separate:
            tr = rng.choice(len(Xtr_all), n_train, replace=False)
            pool = np.arange(len(Xte_all))
        else:
            perm = rng.permutation(len(Xtr_all))
            tr, pool = perm[:n_train], perm[n_train:]
        te = pool if not n_test or n_test >= len(pool) else rng.choice(pool, n_test, replace=False)
        Xtr, ytr, Xte, yte = Xtr_all[tr], ytr_all[tr], Xte_all[te], yte_all[te]
        rows = []
        ms = cfg.sweep["templates"]
        bank = _bank(cfg, action.dimension, max(ms), seed)
        elements = _elements(cfg, action, seed)
        for m in ms:
            table = build_projection_table(bank.subset(slice(0, m)), elements, action)
            Ftr = feature_matrix(Xtr, table, cfg.features["bins"])
            Fte = feature_matrix(Xte, table, cfg.features["bins"])
            for method in methods:
                if method.startswith("phi"):
                    acc = _fit_score(cfg, method, Ftr, ytr, Fte, yte, T, seed, m)
                elif method == "raw-rls":
                    acc = _fit_score(cfg, method, Xtr, ytr, Xte, yte, T, seed, m)
                else:
                    raise ValueError(f"method {method} is not available for image data")
                rows.append(Row(m, method, t, acc, seed))
        return rows

    return _map_trials(trial, cfg)


def _mc_slack(p: float, draws: int) -> float:
    """Three binomial standard errors at ``p`` plus one draw of resolution."""
    return 3 * math.sqrt(p * (1 - p) / draws) + 1 / draws


def bound_reports(cfg: ExperimentConfig) -> list[BoundReport]:
    sweep = cfg.sweep
    draws, resamples = sweep["draws"], sweep["resamples"]
    seed = cfg.seed
    reports = []
    for d in sweep["dimensions"]:
        for eps in sweep["epsilons"]:
            d1, d2 = delta_bounds(d, eps)
            inputs = {"d": d, "epsilon": eps}
            reports.append(BoundReport("delta1", inputs, d1))
            reports.append(BoundReport("delta2", dict(inputs), d2))
            up, low = empirical_chi2_tails(d, eps, draws, derive_seed(seed, "chi2", d, repr(eps)))
            bu, bl = chi2_tail_upper(d, eps), chi2_tail_lower(d, eps)
            inputs = {"k": d, "epsilon": eps, "draws": draws}
            reports.append(BoundReport("chi2-upper", inputs, bu, up, up <= bu + _mc_slack(bu, draws)))
            reports.append(BoundReport("chi2-lower", dict(inputs), bl, low, low <= bl + _mc_slack(bl, draws)))
    for n in sweep["dimensions"]:
        for eps in sweep["epsilons"]:
            gamma = eps / math.sqrt(n)
            rate = dkw_violation_rate(n, gamma, resamples, derive_seed(seed, "dkw", n, repr(eps)))
            bound = dkw_bound(n, gamma)
            reports.append(BoundReport("dkw", {"nsamples": n, "gamma": gamma, "resamples": resamples},
                                       bound, rate, rate <= bound + _mc_slack(bound, resamples)))
    for rho in (-0.9, -0.5, 0.0, 0.5, 0.9):
        mu, ez2, _ = clark_max_moments(0.0, 0.0, 1.0, 1.0, rho)
        mc = mc_max_moments(0.0, 0.0, 1.0, 1.0, rho, draws, derive_seed(seed, "clark", repr(rho)))
        inputs = {"rho": rho, "draws": draws}
        reports.append(BoundReport("clark-mean", inputs, mu, mc["mean"],
                                   abs(mc["mean"] - mu) <= 4 * mc["mean_se"]))
        reports.append(BoundReport("clark-second-moment", dict(inputs), ez2, mc["ez2"],
                                   abs(mc["ez2"] - ez2) <= 4 * mc["ez2_se"]))
    eps = cfg.features.get("epsilon", 0.1)
    s = 1 + eps
    t2 = {"N": 4000, "eps0": 0.1, "eps1": 0.1, "eps2": 0.1, "delta1": 0.05, "delta2": 0.05, "s": s}
    for name, v in zip(("n", "m", "nG"), theorem2_sample_sizes(**t2)):
        reports.append(BoundReport(f"theorem2-{name}", dict(t2), float(v)))
    t3 = {"N": 4000, "m": 25, "nG": 120, "n": 20, "L": 1.0, "C": 1.0, "V0": 1.0, "s": s, "delta": 0.05}
    terms = theorem3_terms(**t3)
    for name, v in terms.items():
        reports.append(BoundReport(f"theorem3-{name}", dict(t3), v))
    reports.append(BoundReport("theorem3", dict(t3), sum(terms.values())))
    return reports


RUNNERS = {
    "invariance-check": _invariance_check,
    "kernel-concentration": _kernel_concentration,
    "xperm-learning-curve": _learning_curve,
    "bins-templates-sweep": _bins_templates_sweep,
    "group-subsample-sweep": _group_subsample_sweep,
    "mnist-sweep": _mnist_sweep,
}


# output -----------------------------------------------------------------------

def provenance(cfg: ExperimentConfig) -> str:
    feat = cfg.features
    lines = [f"invfeat {__version__}",
             f"config-sha256 {config_hash(cfg)}",
             f"kind={cfg.kind} seed={cfg.seed} trials={cfg.trials} n={feat.get('bins', '-')} "
             f"m={feat.get('templates', '-')} G={feat.get('elements', '-')}",
             "config:"]
    lines += emit_config(cfg).rstrip("\n").split("\n")
    return "".join(f"# {line}\n" if line else "#\n" for line in lines)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def summarize(rows: Sequence[Row]) -> list[tuple]:
    """``(x, series, count, mean, sd, se)`` per group, in first-appearance order."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.x, r.series), []).append(r.value)
    out = []
    for (x, series), vals in groups.items():
        v = np.asarray(vals, dtype=float)
        sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        out.append((x, series, len(v), float(v.mean()), sd, sd / math.sqrt(len(v))))
    return out


def _write_rows(path: Path, cfg: ExperimentConfig, rows: Sequence[Row]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(provenance(cfg))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([_fmt(r.x), r.series, r.trial, _fmt(r.value), r.seed])


def _write_summary(path: Path, cfg: ExperimentConfig, rows: Sequence[Row]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(provenance(cfg))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "series", "count", "mean", "sd", "se"])
        for x, series, count, mean, sd, se in summarize(rows):
            w.writerow([_fmt(x), series, count, _fmt(mean), _fmt(sd), _fmt(se)])


def summary_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_summary{path.suffix or '.csv'}")


def run(cfg: ExperimentConfig, output: str | os.PathLike | None = None) -> RunResult:
    """Run the configured experiment and write its CSV files."""
    path = Path(output if output is not None else cfg.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    if cfg.kind == "bounds-report":
        reports = bound_reports(cfg)
        buf = io.StringIO()
        reports_to_csv(reports, buf)
        path.write_text(provenance(cfg) + buf.getvalue())
        return RunResult([], [path], reports)
    rows = RUNNERS[cfg.kind](cfg)
    _write_rows(path, cfg, rows)
    spath = summary_path(path)
    _write_summary(spath, cfg, rows)
    return RunResult(rows, [path, spath])
