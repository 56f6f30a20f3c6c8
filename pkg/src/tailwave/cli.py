"""Command-line front end: run, sweep, accept, cone-fit, iterate.

Exit codes: 0 success, 1 acceptance failure or errored sweep row,
2 configuration error, 3 blow-up of the evolution.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import (DEFAULT_FLOOR_FACTOR, bound_verification, local_index_fit,
                       self_convergence)
from .config import RunConfig, load_config, parse_config
from .errors import BlowupError, ConfigError, TailwaveError
from .evolution import ObserverSeries, evolve
from .iteration import run_iteration

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
SWEEP_AXES = ("delta", "epsilon", "du")


def output_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get("TAILWAVE_OUT") or "out")


def _stamp_dir(root: Path) -> Path:
    base = time.strftime("%Y%m%dT%H%M%S")
    path = root / base
    k = 1
    while path.exists():
        path = root / f"{base}-{k}"
        k += 1
    path.mkdir(parents=True)
    return path


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _error_record(exc: Exception) -> dict:
    return {"error": type(exc).__name__, "message": str(exc)}


def analyse(cfg: RunConfig, series) -> dict:
    """Window fits and main-bound check for every observer; refusals are recorded, not raised."""
    floor = cfg.analysis.noise_floor
    if floor is None:
        floor = DEFAULT_FLOOR_FACTOR * cfg.data.epsilon
    out = []
    for s in series:
        entry = {"rstar": s.rstar_obs, "r": s.r_obs, "fits": [], "bound": None}
        for lo, hi in cfg.analysis.windows:
            try:
                fit = local_index_fit(s, lo, hi, floor=floor)
                entry["fits"].append(fit.to_dict())
            except TailwaveError as exc:
                entry["fits"].append({"window": [lo, hi], **_error_record(exc)})
        try:
            entry["bound"] = bound_verification(s, cfg.kappa).to_dict()
        except TailwaveError as exc:
            entry["bound"] = _error_record(exc)
        out.append(entry)
    return {"noise_floor": floor, "kappa": cfg.kappa, "observers": out}


def execute(cfg: RunConfig, outdir: Path, potential_scale: float = 1.0) -> dict:
    """Evolve, analyse and write all artifacts into ``outdir``. Returns the fits."""
    outdir.mkdir(parents=True, exist_ok=True)
    trace = run_iteration(cfg.profile.delta, "P")
    _dump(outdir / "trace.json", trace.to_dict())
    meta = {"config": cfg.to_dict(), "status": "ok"}
    try:
        res = evolve(cfg.metric, cfg.profile, cfg.data, cfg.grid, observers=cfg.observers,
                     store_stride=0, potential_scale=potential_scale)
    except BlowupError as exc:
        meta.update(status="blowup", error=str(exc), row=exc.row)
        _dump(outdir / "meta.json", meta)
        raise
    meta["run"] = res.meta
    for s in res.series:
        s.to_csv(outdir / f"observer_{s.rstar_obs:g}.csv")
    fits = analyse(cfg, res.series)
    _dump(outdir / "fits.json", fits)
    _dump(outdir / "meta.json", meta)
    return fits


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = _stamp_dir(output_root(args.out))
    try:
        fits = execute(cfg, outdir)
    except BlowupError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    for obs in fits["observers"]:
        for f in obs["fits"]:
            shown = f"{f['exponent']:.4f}" if "exponent" in f else f["error"]
            print(f"r*={obs['rstar']:g} window={f['window']} index={shown}")
    print(outdir)
    return EXIT_OK


def _parse_values(text: str):
    vals = [v for v in (x.strip() for x in text.split(",")) if v]
    try:
        return [float(v) for v in vals]
    except ValueError as exc:
        raise ConfigError(f"sweep values must be numbers: {text!r}") from exc


def _sweep_row(job):
    raw, axis, value, outdir = job
    row = {"value": value, "exponent": "", "C_star": "", "bounded_flag": "", "error": None}
    try:
        cfg = parse_config(raw).with_value(axis, value)
        fits = execute(cfg, Path(outdir))
    except (TailwaveError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row, None
    obs = fits["observers"][0]
    first = obs["fits"][0]
    if "exponent" in first:
        row["exponent"] = first["exponent"]
    bound = obs["bound"]
    if bound and "C_star" in bound:
        row["C_star"] = bound["C_star"]
        row["bounded_flag"] = str(bound["bounded"]).lower()
    return row, Path(outdir) / f"observer_{cfg.observers[0]:g}.csv"


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    values = _parse_values(args.values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    root = _stamp_dir(output_root(args.out))
    raw = base.to_dict()
    jobs = [(raw, args.axis, v, str(root / f"{args.axis}_{k:03d}")) for k, v in enumerate(values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]

    rows = [r for r, _ in results]
    with open(root / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["value", "exponent", "C_star", "bounded_flag"])
        for r in rows:
            wr.writerow([repr(r["value"]), _fmt(r["exponent"]), _fmt(r["C_star"]), r["bounded_flag"]])
    errors = [{"value": r["value"], "error": r["error"]} for r in rows if r["error"]]
    extra = {"axis": args.axis, "values": values, "errors": errors}
    if args.axis == "du" and len(rows) >= 3 and not errors:
        extra["convergence"] = _convergence_rows(values, [p for _, p in results])
    _dump(root / "sweep.json", extra)
    print((root / "summary.csv").read_text(), end="")
    print(root)
    return EXIT_FAIL if errors else EXIT_OK


def _fmt(x):
    return "" if x == "" else repr(float(x))


def _convergence_rows(values, paths):
    """Richardson ratio over each consecutive triple of a halving du sweep."""
    def load(p):
        d = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
        return ObserverSeries(0.0, 0.0, d[:, 0], d[:, 1], d[:, 2], d[:, 3])

    out = []
    for k in range(len(values) - 2):
        a, b, c = values[k:k + 3]
        step = a / b
        if not (math.isclose(step, b / c) and math.isclose(step, round(step))):
            continue
        ratio, order = self_convergence(load(paths[k]), load(paths[k + 1]), load(paths[k + 2]),
                                        int(round(step)))
        out.append({"du": [a, b, c], "ratio": ratio, "order": order})
    return out


def cmd_accept(args) -> int:
    from .acceptance import run_acceptance

    ids = args.only.split(",") if args.only else None
    results = run_acceptance(ids=ids, fast=args.fast, potential_scale=args.potential_scale)
    if args.json:
        _dump(Path(args.json), [c.to_dict() for c in results])
    failed = [c for c in results if not c.passed]
    if failed:
        print(f"first failing criterion: {failed[0].id} {failed[0].title}")
        return EXIT_FAIL
    print(f"all {len(results)} criteria passed")
    return EXIT_OK


def cmd_cone_fit(args) -> int:
    from .acceptance import CONE_WEIGHTS
    from .lightcone import ConeWeight, fit_cone_exponents

    weights = [tuple(args.weight)] if args.weight else CONE_WEIGHTS
    rows = []
    for a, b, e in weights:
        f = fit_cone_exponents(ConeWeight(a, b, e))
        rows.append(f.to_dict())
        print(f"alpha={a:g} beta={b:g} eta={e:g}  p_u={f.p_u:.4f} (predicted {f.predicted[1]:.4f})"
              f"  p_r={f.p_r:.4f}")
    if args.json:
        _dump(Path(args.json), rows)
    return EXIT_OK


def cmd_iterate(args) -> int:
    res = run_iteration(args.delta, args.operator, max_passes=args.max_passes, cone_pass=args.cone_pass)
    if args.json:
        print(json.dumps(res.to_dict(), indent=1))
    else:
        print(res.trace.text())
        print(f"final bound {res.bound} after {res.passes} pass(es)")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailwave", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="evolve one configuration and write its artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="output root (default $TAILWAVE_OUT or ./out)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="repeat a run along one parameter axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("accept", help="run the acceptance criteria")
    a.add_argument("--fast", action="store_true", help="symbolic criteria only")
    a.add_argument("--only", help="comma-separated criterion ids, e.g. AC1,AC5")
    a.add_argument("--json", help="write per-criterion details to this file")
    a.add_argument("--potential-scale", type=float, default=1.0,
                   help="multiply the potential (mutation-test hook)")
    a.set_defaults(func=cmd_accept)

    c = sub.add_parser("cone-fit", help="fit decay exponents of light-cone integrals")
    c.add_argument("--weight", type=float, nargs=3, metavar=("ALPHA", "BETA", "ETA"))
    c.add_argument("--json")
    c.set_defaults(func=cmd_cone_fit)

    i = sub.add_parser("iterate", help="run the decay-exponent iteration")
    i.add_argument("--delta", required=True)
    i.add_argument("--operator", choices=("P", "Pprime"), default="P")
    i.add_argument("--max-passes", type=int, default=3)
    i.add_argument("--cone-pass", type=int, choices=(2, 3), default=2)
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_iterate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TailwaveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
