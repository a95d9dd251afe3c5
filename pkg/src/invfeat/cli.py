"""Command line entry point.

    invfeat run <config> [--output PATH]
    invfeat validate <config>
    invfeat gen-dataset <spec> <out>       e.g. ``xperm`` or ``xperm:seed=3,targets=0-5``
    invfeat bounds key=value ...            e.g. ``d=1000 epsilon=0.5``

Exit status is 0 on success, 2 when the input fails validation and 1 on any
other error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .analysis import (BoundReport, chi2_tail_lower, chi2_tail_upper, clark_max_moments,
                       delta_bounds, dkw_bound, reports_to_csv, theorem2_sample_sizes,
                       theorem3_terms)
from .config import ConfigError, emit_config, load_config
from .datasets import gen_xperm

log = logging.getLogger("invfeat")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class UsageError(ValueError):
    pass


def _cmd_run(args) -> int:
    from .experiments import run

    cfg = load_config(args.config)
    result = run(cfg, args.output)
    for path in result.paths:
        print(path)
    if result.reports is not None and not all(r.passed is not False for r in result.reports):
        failed = [r.name for r in result.reports if r.passed is False]
        log.warning("bound checks failed: %s", ", ".join(failed))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(emit_config(cfg))
    print(f"# config-sha256 {cfg.hash}")
    return EXIT_OK


def parse_dataset_spec(spec: str) -> dict:
    name, _, rest = spec.partition(":")
    if name != "xperm":
        raise UsageError(f"unknown dataset {name!r}; only 'xperm' can be generated")
    out = {"seed": 0, "targets": None}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"expected key=value, got {item!r}")
        try:
            if key == "seed":
                out["seed"] = int(value)
            elif key == "targets":
                a, b = (int(v) for v in value.split("-"))
                out["targets"] = (a, b)
            else:
                raise UsageError(f"unknown dataset option {key!r}")
        except ValueError as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"bad value for {key}: {value!r}") from None
    return out


def _cmd_gen_dataset(args) -> int:
    from .serialize import write_dataset

    opts = parse_dataset_spec(args.spec)
    try:
        ds = gen_xperm(opts["seed"], targets=opts["targets"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_dataset(ds, args.out, {"seed": opts["seed"]})
    print(args.out)
    return EXIT_OK


BOUND_PARAMS = {
    "d": int, "epsilon": float, "k": int, "nsamples": int, "gamma": float,
    "N": int, "eps0": float, "eps1": float, "eps2": float, "delta1": float, "delta2": float,
    "C1": float, "C2": float, "s": float, "m": int, "nG": int, "n": int, "L": float, "C": float,
    "V0": float, "delta": float, "muX": float, "muY": float, "sigmaX": float, "sigmaY": float,
    "rho": float,
}


def parse_bound_params(items) -> dict:
    params = {}
    for item in items:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"expected key=value, got {item!r}")
        if key not in BOUND_PARAMS:
            raise UsageError(f"unknown parameter {key!r}; known: {', '.join(BOUND_PARAMS)}")
        try:
            params[key] = BOUND_PARAMS[key](value)
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    return params


def bound_reports_for(p: dict) -> list[BoundReport]:
    """Every bound whose inputs are all present in ``p``."""
    reports = []

    def has(*keys):
        return all(k in p for k in keys)

    if has("d", "epsilon"):
        d1, d2 = delta_bounds(p["d"], p["epsilon"])
        inputs = {"d": p["d"], "epsilon": p["epsilon"]}
        reports += [BoundReport("delta1", inputs, d1), BoundReport("delta2", dict(inputs), d2)]
    k = p.get("k")
    if k is not None and "epsilon" in p:
        inputs = {"k": k, "epsilon": p["epsilon"]}
        reports += [BoundReport("chi2-upper", inputs, chi2_tail_upper(k, p["epsilon"])),
                    BoundReport("chi2-lower", dict(inputs), chi2_tail_lower(k, p["epsilon"]))]
    if has("nsamples", "gamma"):
        reports.append(BoundReport("dkw", {"nsamples": p["nsamples"], "gamma": p["gamma"]},
                                   dkw_bound(p["nsamples"], p["gamma"])))
    if has("N", "eps0", "eps1", "eps2", "delta1", "delta2"):
        keys = ("N", "eps0", "eps1", "eps2", "delta1", "delta2", "C1", "C2", "s")
        kw = {key: p[key] for key in keys if key in p}
        for name, v in zip(("n", "m", "nG"), theorem2_sample_sizes(**kw)):
            reports.append(BoundReport(f"theorem2-{name}", dict(kw), float(v)))
    if has("N", "m", "nG", "n", "L", "C", "V0", "s", "delta"):
        kw = {key: p[key] for key in ("N", "m", "nG", "n", "L", "C", "V0", "s", "delta")}
        terms = theorem3_terms(**kw)
        reports += [BoundReport(f"theorem3-{name}", dict(kw), v) for name, v in terms.items()]
        reports.append(BoundReport("theorem3", dict(kw), sum(terms.values())))
    if has("rho"):
        mu, ez2, var = clark_max_moments(p.get("muX", 0.0), p.get("muY", 0.0),
                                         p.get("sigmaX", 1.0), p.get("sigmaY", 1.0), p["rho"])
        inputs = {key: p[key] for key in ("muX", "muY", "sigmaX", "sigmaY", "rho") if key in p}
        reports += [BoundReport("clark-mean", inputs, mu),
                    BoundReport("clark-second-moment", dict(inputs), ez2),
                    BoundReport("clark-variance", dict(inputs), var)]
    return reports


def _cmd_bounds(args) -> int:
    params = parse_bound_params(args.params)
    try:
        reports = bound_reports_for(params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not reports:
        raise UsageError("no bound can be evaluated from the given parameters")
    reports_to_csv(reports, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invfeat", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"invfeat {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and write its CSV output")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="override the config's output path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a config and print its canonical form")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("gen-dataset", help="write a generated dataset as CSV")
    p.add_argument("spec")
    p.add_argument("out")
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("bounds", help="evaluate closed-form bounds from key=value parameters")
    p.add_argument("params", nargs="+")
    p.set_defaults(func=_cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:                # noqa: BLE001 - report and map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
