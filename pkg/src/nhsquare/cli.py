"""Command line front end.

    nhsquare <subcommand> [--config PATH] [--seed N] [--out DIR] [--override key=value ...]

Exit status: 0 success, 1 an experiment failed its checks, 2 bad usage or
configuration, 3 internal assertion.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import measure as M
from .config import ConfigError, RunConfig, build_setup
from .martingale import AccretivityError, decompose
from .sqfn import global_norm, octave_table
from .verify import ALL_EXPERIMENTS, SCHEMA_VERSION, _clean, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, rows: list[dict], columns=None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or sorted({k for r in rows for k in r})
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in columns})


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(_clean(v), sort_keys=True)
    return "" if v is None else v


def _parse_kv(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config, args.override, args.seed)
    if args.out is not None:
        cfg.data["out"] = args.out
    return cfg


def _out(cfg: RunConfig) -> Path:
    return Path(cfg.data["out"])


def _function(cfg: RunConfig, setup, kind: str) -> np.ndarray:
    if kind == "b":
        return setup.b
    if kind == "random":
        return setup.rng("cli-f").standard_normal(len(setup.mu))
    if kind == "one":
        return np.ones(len(setup.mu))
    raise ConfigError(f"unknown function {kind!r} (random, b, one)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_measure(args) -> int:
    params = _parse_kv(args.params)
    if args.name not in M.BUILTINS:
        raise ConfigError(f"unknown builtin {args.name!r}; choose from {sorted(M.BUILTINS)}")
    try:
        mu, lam = M.BUILTINS[args.name](**params)
    except TypeError as e:
        raise ConfigError(f"bad parameters for {args.name}: {e}") from e
    out = Path(args.out or ".") / f"{args.name}.json"
    write_json(out, {**mu.to_dict(), "lambda": lam.to_dict(), "builtin": args.name,
                     "params": params})
    print(f"{len(mu)} atoms, total mass {mu.total:.6g} -> {out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _config(args)
    setup = build_setup(cfg)
    tg = setup.tracked
    rows = []
    for j in tg.gens:
        good = tg.good(j)
        for lab, Q in enumerate(tg.cubes(j)):
            rows.append({"generation": j, "index": " ".join(map(str, Q.index)),
                         "lo": " ".join(repr(x) for x in Q.lo), "side": Q.side,
                         "mass": float(tg.masses(j)[lab]), "good": bool(good[lab])})
    out = _out(cfg)
    write_json(out / "classify.json", {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(),
                                       "setup": setup.describe(), "shifts": setup.shifts.to_dict(),
                                       "cubes": rows})
    write_csv(out / "classify.csv", rows, ["generation", "index", "lo", "side", "mass", "good"])
    print(f"{len(rows)} cubes, {sum(r['good'] for r in rows)} good -> {out}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = _config(args)
    setup = build_setup(cfg)
    f = _function(cfg, setup, args.function)
    dec = decompose(f, setup.tracked, setup.b)
    tg = setup.tracked
    rows = []
    for j in dec.gens:
        for lab, n in enumerate(dec.level_norms(j)):
            Q = tg.cube(j, lab)
            rows.append({"generation": j, "index": " ".join(map(str, Q.index)), "kind": "delta",
                         "norm": float(n), "ratio": float(dec.ratios[j][lab])})
    for lab, n in enumerate(dec.top_norms()):
        Q = tg.cube(tg.top, lab)
        rows.append({"generation": tg.top, "index": " ".join(map(str, Q.index)), "kind": "top",
                     "norm": float(n), "ratio": float(dec.ratios[tg.top][lab])})
    out = _out(cfg)
    write_json(out / "decompose.json", {
        "schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "setup": setup.describe(),
        "function": args.function, "residual_norm": dec.residual_norm, "energy": dec.energy(),
        "f_norm_sq": setup.mu.norm(f) ** 2, "pieces": rows})
    write_csv(out / "decompose.csv", rows, ["generation", "index", "kind", "norm", "ratio"])
    print(f"residual {dec.residual_norm:.3e}, energy {dec.energy():.6g} -> {out}")
    return EXIT_OK


def cmd_sqfn(args) -> int:
    cfg = _config(args)
    setup = build_setup(cfg)
    f = _function(cfg, setup, args.function)
    tg = setup.tracked
    table = octave_table(setup.kernel, f, setup.mu, tg.top, setup.params.g_max, setup.quad)
    rep = global_norm(setup.kernel, f, setup.mu, tg, setup.quad, args.good_only, table)
    rows = sorted(rep.rows(), key=lambda r: (r["generation"], r["index"]))
    out = _out(cfg)
    write_json(out / "sqfn.json", {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(),
                                   "setup": setup.describe(), "function": args.function,
                                   "total": rep.total, "params": rep.params, "regions": rows})
    write_csv(out / "sqfn.csv", rows, ["generation", "index", "kind", "t_lo", "t_hi", "value"])
    print(f"total {rep.total:.10g} over {len(rows)} regions -> {out}")
    return EXIT_OK


def verify_all(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    """Run the configured experiments in order; write one report each plus a summary."""
    names = cfg.data["experiments"]
    unknown = [n for n in names if n not in ALL_EXPERIMENTS]
    if unknown:
        raise ConfigError(f"unknown experiments {unknown}; choose from {ALL_EXPERIMENTS}")
    setup = build_setup(cfg) if names else None
    results = []
    for name in names:
        opts = dict(cfg.data.get("options", {}).get(name, {}))
        rep = run_experiment(name, setup, **opts)
        write_json(out / f"{name}.json", {**rep.to_dict(), "config": cfg.to_dict()})
        results.append({"name": name, "pass": rep.passed})
        print(f"{name:<12} {'PASS' if rep.passed else 'FAIL'}")
    summary = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(),
               "setup": setup.describe() if setup else None, "experiments": results,
               "pass": all(r["pass"] for r in results)}
    write_json(out / "summary.json", summary)
    return (EXIT_OK if summary["pass"] else EXIT_FAIL), summary


def cmd_verify_all(args) -> int:
    cfg = _config(args)
    if args.only:
        cfg.data["experiments"] = args.only
    status, _ = verify_all(cfg, _out(cfg))
    return status


def flatten(report: dict) -> list[dict]:
    """One CSV row per trial, with the report name and the scalar summary fields."""
    scalars = {f"summary.{k}": v for k, v in report.get("summary", {}).items()
               if not isinstance(v, (dict, list))}
    trials = report.get("trials") or [{}]
    rows = []
    for i, t in enumerate(trials):
        row = {"name": report.get("name"), "trial": i, "pass": report.get("pass"), **scalars}
        row.update({k: v for k, v in t.items() if not isinstance(v, (dict, list))})
        rows.append(row)
    return rows


def cmd_report(args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise ConfigError(f"report directory not found: {src}")
    files = sorted(src.glob("*.json")) if src.is_dir() else [src]
    out = Path(args.out or src if src.is_dir() else src.parent)
    n = 0
    for path in files:
        data = json.loads(path.read_text())
        if "trials" not in data:
            continue
        write_csv(out / f"{path.stem}.csv", flatten(data))
        n += 1
    print(f"{n} reports flattened -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhsquare", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a dotted config key, e.g. grid.g_max=10")

    sp = sub.add_parser("gen-measure", help="write a builtin measure as JSON")
    sp.add_argument("name", help=f"one of {sorted(M.BUILTINS)}")
    sp.add_argument("params", nargs="*", help="builtin parameters as key=value")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_gen_measure)

    sp = sub.add_parser("classify", help="good/bad flag for every tracked cube")
    common(sp)
    sp.set_defaults(func=cmd_classify)

    for name, func, helptext in (("decompose", cmd_decompose, "martingale pieces and norms"),
                                 ("sqfn", cmd_sqfn, "Whitney-region square function report")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--function", default="random", help="random, b or one")
        if name == "sqfn":
            sp.add_argument("--good-only", action="store_true")
        sp.set_defaults(func=func)

    sp = sub.add_parser("verify-all", help="run the configured experiments")
    common(sp)
    sp.add_argument("--only", nargs="*", help="run just these experiments")
    sp.set_defaults(func=cmd_verify_all)

    sp = sub.add_parser("report", help="flatten JSON reports to CSV")
    sp.add_argument("input", help="report file or directory")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, AccretivityError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (RuntimeError, ValueError) as e:
        print(f"experiment failed: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
