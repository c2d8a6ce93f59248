"""
Command line entry point.

    growthlab run --config configs/max_hopflax.cfg --out results
    growthlab consistency [--config configs/consistency.cfg] --seed 0
    growthlab properties --seed 3
    growthlab list

Exit status: 0 when every verdict passes, 1 when any fails, 2 for usage or
configuration errors (including the resource cap).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from growthlab import registry
from growthlab.config import ConfigError, ConsistencyConfig, config_kind, load_consistency, load_experiment
from growthlab.consistency import consistency_matrix
from growthlab.harness import OracleMismatchError, ResourceCapError, run_experiment

log = logging.getLogger("growthlab")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="growthlab", description="Deterministic lattice growth laboratory.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run convergence experiments")
    run.add_argument("--config", action="append", required=True, help="experiment file (repeatable)")
    run.add_argument("--out", default=".", help="directory for relative output paths")
    run.add_argument("--seed", type=_seed, default=0)

    con = sub.add_parser("consistency", help="consistency-ratio sweeps on random quadratics")
    con.add_argument("--config", help="sweep file; defaults to the five reference drivers")
    con.add_argument("--out", default=".")
    con.add_argument("--seed", type=_seed, default=0)

    prop = sub.add_parser("properties", help="run the seeded property suites")
    prop.add_argument("--seed", type=_seed, default=0)
    prop.add_argument("--out", default=None, help="optional directory for properties.csv")

    sub.add_parser("list", help="list registered drivers, operators and initial data")
    return ap


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be a nonnegative integer")
    return v


def _read_config(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return p.read_text()


def cmd_run(args) -> int:
    out = Path(args.out)
    status = EXIT_PASS
    for path in args.config:
        text = _read_config(path)
        if config_kind(text) != "experiment":
            raise ConfigError(f"{path} is a consistency sweep; use the consistency subcommand")
        cfg = load_experiment(text, base=out)
        log.info("running %s (%d epsilons)", cfg.id, len(cfg.epsilons))
        report = run_experiment(cfg)
        report.write(cfg.csv_path or out / f"{cfg.id}.csv", cfg.json_path or out / f"{cfg.id}.json")
        verdict = "PASS" if report.verdict else "FAIL"
        errs = " ".join(f"{e:.3e}" for e in report.errors)
        print(f"{verdict}  {cfg.id}  errors: {errs}  ({report.runtime:.1f} s)")
        if not report.verdict:
            status = EXIT_FAIL
    return status


def _default_consistency() -> ConsistencyConfig:
    from growthlab.drivers import Potential, argmin_potential, kpz_phi, median_driver, rsos_driver, smooth_phi

    drivers = [
        ("power4", argmin_potential(Potential.power(4))),
        ("fractional", argmin_potential(Potential.fractional(0.5))),
        ("median", median_driver()),
        ("crystalline", rsos_driver()),
        ("kpz", smooth_phi(kpz_phi(1))),
    ]
    return ConsistencyConfig("consistency", 2, [1e-2, 1e-4, 1e-6], drivers)


def cmd_consistency(args) -> int:
    out = Path(args.out)
    if args.config:
        text = _read_config(args.config)
        if config_kind(text) != "consistency":
            raise ConfigError(f"{args.config} has no [consistency] section")
        cfg = load_consistency(text, base=out)
    else:
        cfg = _default_consistency()
    reports = consistency_matrix(
        [d for _, d in cfg.drivers], cfg.d, cfg.epsilons, cfg.functions, cfg.singular,
        args.seed, cfg.tol, cfg.envelope_tol, cfg.workers,
    )
    csv_path = Path(cfg.csv_path or out / f"{cfg.id}.csv")
    json_path = Path(cfg.json_path or out / f"{cfg.id}.json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    rows = [row for r in reports for row in r.rows()]
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    summary = {}
    for r in reports:
        s = summary.setdefault(r.driver, {"regular": [0, 0], "singular": [0, 0]})
        bucket = s["singular" if r.singular else "regular"]
        bucket[0] += r.verdict
        bucket[1] += 1
    json_path.parent.mkdir(parents=True, exist_ok=True)
    with open(json_path, "w") as fh:
        json.dump({"id": cfg.id, "config": cfg.config_text, "seed": args.seed, "epsilons": cfg.epsilons,
                   "summary": summary, "verdict": "PASS" if all(r.verdict for r in reports) else "FAIL"},
                  fh, indent=2)
        fh.write("\n")
    for name, s in summary.items():
        ok = all(b[0] == b[1] for b in s.values())
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24} regular {s['regular'][0]}/{s['regular'][1]}  "
              f"singular {s['singular'][0]}/{s['singular'][1]}")
    return EXIT_PASS if all(r.verdict for r in reports) else EXIT_FAIL


def cmd_properties(args) -> int:
    from growthlab.properties import properties_suite

    results = properties_suite(args.seed)
    for r in results:
        print(r.line())
    if args.out:
        p = Path(args.out) / "properties.csv"
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "property", "verdict", "detail"])
            w.writerows([r.subject, r.name, "PASS" if r.passed else "FAIL", r.detail] for r in results)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties pass (seed {args.seed})")
    return EXIT_FAIL if failed else EXIT_PASS


def cmd_list(args) -> int:
    for title, table in (("drivers", registry.DRIVERS), ("operators", registry.OPERATORS),
                         ("initial data", registry.INITIAL_DATA)):
        print(f"{title} ({len(table)}):")
        for name in table:
            print(f"  {name}")
    print(f"potentials: {', '.join(registry.POTENTIALS)}")
    print(f"smooth increments: {', '.join(registry.PHI_SPECS)}")
    return EXIT_PASS


COMMANDS = {"run": cmd_run, "consistency": cmd_consistency, "properties": cmd_properties, "list": cmd_list}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ResourceCapError, OracleMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
