"""Command line entry point.

    etc-wsan validate-config --config PATH
    etc-wsan simulate --config PATH [--mode MODE] [--out DIR] [--period S]
    etc-wsan compare  --config PATH [--modes M1,M2,...] [--out DIR]
    etc-wsan sweep    --config PATH [--sigma LIST] [--q LIST] [--te-rule LIST] [--out DIR]
    etc-wsan scenario                      # print the shipped reference scenario

Exit codes: 0 ok, 2 configuration error, 3 numeric divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import reference_scenario_text, parse_document
from .engine import ET_MODES, MODES, compare_modes, run_mode
from .errors import ConfigError, DivergenceError
from .output import dump_json, fmt, write_bundle
from .plant import estimate_rho_m

log = logging.getLogger("etc_wsan")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

SWEEP_COLUMNS = ["cell", "sigma", "q", "te_rule", "mode", "status", "error", "update_count",
                 "interval_min", "interval_mean", "interval_max", "final_abs_error_x1",
                 "final_abs_error_x2", "final_error_norm"]


def _load(args):
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _IOFailure(f"cannot read config {path}: {exc.strerror or exc}") from exc
    doc = parse_document(text, strict=not getattr(args, "lenient", False))
    if getattr(args, "seed", None) is not None:
        doc = replace(doc, scenario=replace(doc.scenario, seed=args.seed))
    return doc


class _IOFailure(Exception):
    pass


def _out_dir(args, doc, default):
    return Path(args.out or doc.out_dir or default)


def cmd_validate(args):
    doc = _load(args)
    print(f"OK: {args.config} (mode {doc.mode}, horizon {doc.scenario.horizon:g} s)")
    if args.rho_m_samples:
        model = doc.scenario.build_model()
        est = estimate_rho_m(model.params, model.gains, model.setpoint,
                             n_samples=args.rho_m_samples, rng=doc.scenario.seed)
        print(f"sampled min |grad Hd|/|x - x*| over the operating set: {est['rho_m']:.6g}"
              f" (configured rho_m: {doc.scenario.trigger.rho_m})")
    return EXIT_OK


def cmd_simulate(args):
    doc = _load(args)
    mode = args.mode or doc.mode
    period = args.period if args.period is not None else doc.period
    result = run_mode(doc.scenario, mode, period)
    out = _out_dir(args, doc, f"out/{mode}")
    try:
        paths = write_bundle(result, out)
    except OSError as exc:
        raise _IOFailure(f"cannot write bundle to {out}: {exc}") from exc
    s = result.summary()
    print(f"{mode}: {s['update_count']} updates, final |x1-x1*|={s['final_abs_error_x1']:.3g}, "
          f"|x2-x2*|={s['final_abs_error_x2']:.3g}; bundle in {paths['summary'].parent}")
    return EXIT_OK


def cmd_compare(args):
    doc = _load(args)
    modes = args.modes.split(",") if args.modes else list(ET_MODES)
    period = args.period if args.period is not None else doc.period
    report, _ = compare_modes(doc.scenario, modes, period=period, jobs=args.jobs)
    out = _out_dir(args, doc, "out/compare")
    try:
        out.mkdir(parents=True, exist_ok=True)
        dump_json(report.to_dict(), out / "comparison.json")
    except OSError as exc:
        raise _IOFailure(f"cannot write report to {out}: {exc}") from exc
    for name in report.ordering:
        print(f"{name:>28s}: {report.update_counts[name]} updates")
    if report.max_deviation_et is not None:
        print(f"max (x1,x2) deviation among event-triggered modes: {report.max_deviation_et:.4g} cm")
    for name, err in report.failures.items():
        print(f"{name}: FAILED ({err})", file=sys.stderr)
    return EXIT_DIVERGED if report.partial else EXIT_OK


def _split(text, cast):
    if text is None:
        return None
    items = [v.strip() for v in text.split(",") if v.strip()]
    return [cast(v) for v in items]


def _sweep_cell(task):
    index, cfg, mode, period, sigma, q, te_rule = task
    row = {"cell": index, "sigma": sigma, "q": q, "te_rule": te_rule, "mode": mode}
    try:
        trig = replace(cfg.trigger, sigma=sigma)
        adapt = replace(cfg.adaptation, q=q, te_rule=te_rule)
        s = run_mode(replace(cfg, trigger=trig, adaptation=adapt), mode, period).summary()
        row.update(status="ok", error="")
        for key in SWEEP_COLUMNS[7:]:
            row[key] = s[key]
    except Exception as exc:  # one failed cell must not abort the sweep
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_rows(cfg, mode, period=None, sigmas=None, qs=None, te_rules=None, jobs=1):
    """One summary row per grid cell; axes left as ``None`` use the config value."""
    axes = [sigmas, qs, te_rules]
    if any(a is not None and len(a) == 0 for a in axes):
        raise ConfigError("sweep grid is empty")
    sigmas = sigmas or [cfg.trigger.sigma]
    qs = qs or [cfg.adaptation.q]
    te_rules = te_rules or [cfg.adaptation.te_rule]
    tasks = [(i, cfg, mode, period, s, q, te)
             for i, (s, q, te) in enumerate(itertools.product(sigmas, qs, te_rules))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(t) for t in tasks]


def write_sweep_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow(["" if row.get(c) is None else fmt(row[c]) if isinstance(row.get(c), float)
                        else row[c] for c in SWEEP_COLUMNS])


def cmd_sweep(args):
    doc = _load(args)
    mode = args.mode or doc.mode
    period = args.period if args.period is not None else doc.period
    rows = sweep_rows(doc.scenario, mode, period,
                      sigmas=_split(args.sigma, float), qs=_split(args.q, int),
                      te_rules=_split(args.te_rule, str), jobs=args.jobs)
    out = _out_dir(args, doc, "out/sweep")
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(rows, out / "sweep.csv")
    except OSError as exc:
        raise _IOFailure(f"cannot write sweep to {out}: {exc}") from exc
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} cells, {failed} failed; results in {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_scenario(args):
    sys.stdout.write(reference_scenario_text())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="etc-wsan",
        description="Decentralized event-triggered control simulations over sensor/actuator networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH", help="JSON scenario file")
        p.add_argument("--seed", type=int, default=None, metavar="N")
        p.add_argument("--lenient", action="store_true", help="warn about unknown keys instead of failing")

    p = sub.add_parser("validate-config", help="check a configuration file")
    common(p)
    p.add_argument("--rho-m-samples", type=int, default=0, metavar="N",
                   help="also estimate the gradient bound constant by sampling N states")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run one mode and write an output bundle")
    common(p)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--period", type=float, metavar="SECONDS")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run several modes on one scenario")
    common(p)
    p.add_argument("--modes", metavar="M1,M2,...", help=f"comma list from {', '.join(MODES)}")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--period", type=float, metavar="SECONDS")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="grid over sigma, q and the equalization-time rule")
    common(p)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--sigma", metavar="LIST")
    p.add_argument("--q", metavar="LIST")
    p.add_argument("--te-rule", metavar="LIST")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--period", type=float, metavar="SECONDS")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenario", help="print the shipped reference scenario JSON")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"simulation diverged (last good time {exc.last_good_time}): {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except _IOFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
