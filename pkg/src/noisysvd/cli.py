"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 bound precondition
violated, 3 Monte Carlo coverage failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, montecarlo, mpsk
from .config import COMMANDS, FORMATS, load_config
from .errors import ConfigError, InvariantViolation

log = logging.getLogger("noisysvd")

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_COVERAGE = 0, 1, 2, 3
POINT_COLUMNS = ("x", "y", "true_theta_index", "assigned_mode")
SWEEP_COLUMNS = ("M_order", "snr_db", "runs", "successes", "rate")


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


class Run:
    def __init__(self, command: str, cfg: dict, out: Path, fmt: str, seed):
        self.command, self.cfg, self.out, self.fmt, self.seed = command, cfg, out, fmt, seed
        out.mkdir(parents=True, exist_ok=True)

    @property
    def json(self) -> bool:
        return self.fmt in ("json", "both")

    @property
    def csv(self) -> bool:
        return self.fmt in ("csv", "both")

    def manifest(self, files) -> None:
        write_json(self.out / "manifest.json", {
            "tool": "noisysvd",
            "version": __version__,
            "command": self.command,
            "config": self.cfg,
            "seed": self.seed,
            "format": self.fmt,
            "files": sorted(files),
        })


def cmd_bound(run: Run) -> int:
    c = run.cfg
    inputs = bounds.BoundInputs(eps=c["eps"], n=c["n"], k=c["k"], sigma1=c["sigma1"],
                                gamma=c["gamma"], beta=c["beta"], u1_max=c["u1_max"])
    report = bounds.theorem_bound(inputs)
    write_json(run.out / "bound_report.json", report.to_dict())
    run.manifest(["bound_report.json"])
    print(f"rhs={report.rhs!r} prob_floor={report.prob_floor!r} valid={report.valid}")
    if not report.valid:
        print("violated: " + ", ".join(report.violated_conditions))
        return EXIT_PRECONDITION
    return EXIT_OK


def cmd_verify(run: Run, jobs: int) -> int:
    c = run.cfg
    scenario = montecarlo.NoiseScenario(
        n=c["n"], k=c["k"], spectrum=c["spectrum"], eps=c["eps"], gamma=c["gamma"],
        beta=c["beta"], basis_seed=c["basis_seed"], trials=c["trials"],
        noise_seed=c["noise_seed"], scale=c["scale"], alignment=c["alignment"],
    )
    ctx = montecarlo.TrialContext.build(scenario)
    records = [o.record for o in montecarlo.run_outcomes(scenario, jobs, ctx)]
    cov = montecarlo.coverage_report(records, ctx.report.prob_floor)
    files = []
    if run.csv:
        (run.out / "trials.csv").write_text(montecarlo.trials_csv(records))
        files.append("trials.csv")
    if run.json:
        resid = [r.resid_max for r in records]
        gauss = [r.gauss_term_max for r in records]
        write_json(run.out / "summary.json", {
            "scenario": scenario.__dict__,
            "effective_eps": scenario.effective_eps,
            "bound": ctx.report.to_dict(),
            "coverage": cov.to_dict(),
            "median_resid_max": float(np.median(resid)),
            "median_gauss_term_max": float(np.median(gauss)),
            "sv_shift_ok": montecarlo.max_gap_holds(records),
            "degenerate_alignments": sum("degenerate_alignment" in r.flags for r in records),
        })
        files.append("summary.json")
    run.manifest(files)
    print(f"coverage={cov.coverage:.4f} floor={cov.floor:.4f} verdict={cov.verdict}")
    return EXIT_COVERAGE if cov.verdict == "FAIL" else EXIT_OK


def cmd_plan(run: Run) -> int:
    c = run.cfg
    if c["alpha"] is not None:
        min_l = bounds.min_samples_per_symbol(c["alpha"])
        payload = {"mode": "mpsk", "alpha": c["alpha"], "min_L": min_l}
        print(f"L ≥ {min_l}")
    else:
        f = bounds.feasibility_from(c["eps"], c["n"], c["beta"], c["u1_max"], c["limit"])
        verdict = "FEASIBLE" if f.feasible else "INFEASIBLE"
        payload = {"mode": "matrix", "eps": c["eps"], "threshold": f.threshold,
                   "margin": f.ratio, "verdict": verdict}
        print(f"{verdict} margin={f.ratio:.6g} threshold={f.threshold:.6g}")
    write_json(run.out / "plan.json", payload)
    run.manifest(["plan.json"])
    return EXIT_OK


def _mpsk_scenario(c: dict, **extra) -> mpsk.MpskScenario:
    keys = ("M_order", "f_c", "T", "theta_c", "L", "N_sym", "seed", "noise_factor")
    args = {k: c[k] for k in keys if k in c}
    args.update(extra)
    return mpsk.MpskScenario(**args)


def _n0(c: dict) -> float:
    if c.get("N0") is not None:
        return c["N0"]
    if c.get("snr_db") is not None:
        return mpsk.snr_to_n0(c["snr_db"])
    return 0.0


def cmd_classify(run: Run) -> int:
    c = run.cfg
    scenario = _mpsk_scenario(c, N0=_n0(c))
    Y, idx = mpsk.synth_matrix(scenario)
    result = mpsk.classify(Y, scenario.N0, alpha=c["alpha"], guard=c["guard"], snap=c["snap"])
    files = []
    if run.csv:
        pts = result.embedding.points
        rows = [(repr(float(p[0])), repr(float(p[1])), int(t), int(a))
                for p, t, a in zip(pts, idx, result.clusters.assignments)]
        (run.out / "points.csv").write_text(_csv_text(POINT_COLUMNS, rows))
        files.append("points.csv")
    if run.json:
        summary = result.summary()
        summary.update({
            "M_order": scenario.M_order,
            "N0": scenario.N0,
            "snr_db": scenario.snr_db,
            "predicted_radius": mpsk.predicted_radius(scenario.N0, scenario.L, scenario.N_sym),
            "feasibility": "FEASIBLE" if result.feasible else "INFEASIBLE",
        })
        write_json(run.out / "summary.json", summary)
        files.append("summary.json")
    run.manifest(files)
    for w in result.clusters.warnings:
        log.warning(w)
    print(f"M_hat={result.M_hat} (true M={scenario.M_order}) radius={result.radius:.6g}")
    return EXIT_OK


def cmd_sweep(run: Run, jobs: int) -> int:
    c = run.cfg
    base = _mpsk_scenario(c)
    rows = mpsk.snr_sweep(base, c["snr_grid"], c["runs"], orders=c["orders"],
                          alpha=c["alpha"], jobs=jobs)
    files = []
    if run.csv:
        table = [(r.M_order, repr(r.snr_db), r.runs, r.successes, repr(r.rate)) for r in rows]
        (run.out / "sweep.csv").write_text(_csv_text(SWEEP_COLUMNS, table))
        files.append("sweep.csv")
    if run.json:
        write_json(run.out / "summary.json", {
            "rows": [dict(zip(SWEEP_COLUMNS, (r.M_order, r.snr_db, r.runs, r.successes, r.rate)))
                     for r in rows],
            "min_L": bounds.min_samples_per_symbol(c["alpha"]),
            "feasibility": "FEASIBLE" if bounds.mpsk_feasible(base.L, c["alpha"]) else "INFEASIBLE",
        })
        files.append("summary.json")
    run.manifest(files)
    for r in rows:
        print(f"M={r.M_order} snr={r.snr_db:g} rate={r.rate:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisysvd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat YAML config file")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--format", choices=FORMATS, default="both")
        p.add_argument("--trials", type=int, help="Monte Carlo trials (verify) or runs (sweep)")
        p.add_argument("--jobs", type=int, default=1)
    return parser


_SEED_KEY = {"verify": "noise_seed", "classify": "seed", "sweep": "seed"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    overrides = {}
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            print("error: field `seed`: must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        if args.command in _SEED_KEY:
            overrides[_SEED_KEY[args.command]] = args.seed
    if args.trials is not None:
        if args.command == "verify":
            overrides["trials"] = args.trials
        elif args.command == "sweep":
            overrides["runs"] = args.trials
    try:
        cfg = load_config(args.command, args.config, overrides)
        run = Run(args.command, cfg, args.out, args.format, args.seed)
        if args.command == "bound":
            return cmd_bound(run)
        if args.command == "verify":
            return cmd_verify(run, args.jobs)
        if args.command == "plan":
            return cmd_plan(run)
        if args.command == "classify":
            return cmd_classify(run)
        return cmd_sweep(run, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
