"""Command-line entry point.

Exit status: 0 success, 1 failed validation or audit, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config, spec_hash
from .engine.driver import simulate
from .engine.io import csv_text, event_line, metrics_rows
from .experiments.batches import parallel_map, worker_count

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_version() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON network description")
    common.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="master seed (64-bit)")
    common.add_argument("--horizon", type=float, default=None)
    common.add_argument("--burn-in", type=float, default=None)
    common.add_argument("--reps", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker cap (default JSQLAB_THREADS or 1)")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = argparse.ArgumentParser(prog="jsqlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="traffic intensity, conditions, routing feasibility")
    sub.add_parser("simulate", parents=[common], help="event log and time-average metrics")
    sub.add_parser("tails", parents=[common], help="equilibrium tail estimates")
    sub.add_parser("drift-audit", parents=[common], help="norm drift checks along trajectories")
    sub.add_parser("routing", parents=[common], help="routing table solving the load inequalities")
    sub.add_parser("section7", parents=[common], help="designated-queue ladder network")
    c = sub.add_parser("compare", parents=[common], help="stationary workload ratio of two networks")
    c.add_argument("--config-b", default=None, help="second network (default: experiment.b in the config)")
    return p


class Run:
    """Resolved settings plus output helpers."""

    def __init__(self, args, raw: dict, spec=None):
        self.args = args
        self.raw = raw
        self.spec = spec
        run = raw.get("run", {}) if isinstance(raw, dict) else {}
        self.experiment = raw.get("experiment", {}) if isinstance(raw, dict) else {}
        self.seed = args.seed if args.seed is not None else int(run.get("seed", 0))
        self.seed &= 2**64 - 1
        self.horizon = args.horizon if args.horizon is not None else float(run.get("horizon", 1000.0))
        self.burn_in = args.burn_in if args.burn_in is not None else run.get("burn_in")
        self.reps = args.reps if args.reps is not None else int(run.get("reps", 1))
        self.threads = worker_count(args.threads)
        self.format = args.format
        self.out = Path(args.out if args.out is not None else run.get("out", "."))
        self.hash = spec_hash(spec) if spec is not None else raw.get("_hash", "")
        self.version = build_version()

    def meta(self) -> dict:
        return {
            "command": self.args.command,
            "spec_hash": self.hash,
            "seed": self.seed,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "reps": self.reps,
            "version": self.version,
        }

    def write_table(self, name: str, rows: list) -> Path:
        """CSV with a comment header, or JSON lines with a leading meta record."""
        self.out.mkdir(parents=True, exist_ok=True)
        meta = self.meta()
        if self.format == "csv":
            path = self.out / f"{name}.csv"
            comments = [" ".join(f"{k}={v}" for k, v in meta.items())]
            path.write_text(csv_text(rows, comments))
        else:
            path = self.out / f"{name}.jsonl"
            header, body = rows[0], rows[1:]
            lines = [json.dumps({"meta": meta}, separators=(",", ":"))]
            lines += [json.dumps(dict(zip(header, r)), separators=(",", ":")) for r in body]
            path.write_text("\n".join(lines) + "\n")
        return path

    def write_json(self, name: str, obj: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / f"{name}.json"
        path.write_text(json.dumps({"meta": self.meta(), **obj}, indent=1, sort_keys=True, default=_jsonable) + "\n")
        return path


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if hasattr(x, "as_dict"):
        return x.as_dict()
    return str(x)


# subcommands


def cmd_validate(run: Run) -> int:
    from .network import Unsupported, check_arrival_bound, traffic_intensity
    from .routing import NotConverged, solve_routing

    spec = run.spec
    ti = traffic_intensity(spec)
    sub = ti.rho < 1.0
    report = {"rho": ti.rho, "rho_mode": ti.mode, "worst_subset": list(ti.argmax_B), "method": ti.method, "subcritical": sub}
    bound = check_arrival_bound(spec)
    report["arrival_bound"] = "unsupported" if isinstance(bound, Unsupported) else f"gamma={bound.gamma}"
    ok = sub
    if sub:
        try:
            table = solve_routing(spec)
            report["routing_max_excess"] = table.max_excess()
        except NotConverged as e:
            report["routing_error"] = str(e)
            ok = False
    print(f"rho={ti.rho:.10g} ({ti.method})")
    if not sub:
        print("not subcritical")
    for k, v in report.items():
        if k not in ("rho",):
            print(f"{k}: {v}")
    run.write_json("validate", report)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_simulate(run: Run) -> int:
    spec = run.spec
    cap = int(run.experiment.get("event_cap", 10**9))
    backend = run.experiment.get("backend", "auto")

    def one(rep):
        return simulate(spec, run.horizon, run.seed, rep=rep, backend=backend, event_cap=cap)

    results = parallel_map(one, range(run.reps), run.threads)
    run.out.mkdir(parents=True, exist_ok=True)
    rows = None
    for rep, res in enumerate(results):
        name = "events.jsonl" if run.reps == 1 else f"events_rep{rep}.jsonl"
        with open(run.out / name, "w", newline="\n") as fh:
            for rec in res.events:
                fh.write(event_line(rec))
                fh.write("\n")
        r = metrics_rows(res.metrics)
        if rows is None:
            rows = [["rep"] + r[0]]
        rows += [[rep] + x for x in r[1:]]
        print(f"rep {rep}: {len(res.events)} events, mean z {sum(res.metrics['mean_z']) / spec.N:.6g}")
    run.write_table("metrics", rows)
    return EXIT_OK


def cmd_tails(run: Run) -> int:
    from .experiments.stats import Unstable
    from .experiments.tails import estimate_tail

    e = run.experiment
    try:
        est = estimate_tail(
            run.spec,
            run.horizon,
            run.burn_in,
            batches=int(e.get("batches", 32)),
            seed=run.seed,
            queue=e.get("queue"),
            ells=range(int(e.get("max_ell", 5)) + 1),
            reps=run.reps,
            threads=run.threads,
        )
    except Unstable as err:
        print(f"unstable: {err}")
        return EXIT_FAILED
    for row in est.rows()[1:]:
        print(*row)
    run.write_table("tails", est.rows())
    return EXIT_OK


def cmd_drift(run: Run) -> int:
    from .experiments.drift import drift_audit
    from .lyapunov.params import build_params

    e = run.experiment
    params = build_params(run.spec)
    rep = drift_audit(
        run.spec,
        params,
        horizon=run.horizon,
        points=int(e.get("points", 1000)),
        max_arrivals=int(e.get("arrivals", 200)),
        t=float(e.get("t", 1.0)),
        reps=int(e.get("reps", 500)),
        seed=run.seed,
        threads=run.threads,
    )
    for row in rep.rows()[1:]:
        print(*row)
    run.write_table("drift", rep.rows())
    return EXIT_OK if rep.clean else EXIT_FAILED


def cmd_routing(run: Run) -> int:
    from .routing import NotConverged, solve_routing

    try:
        table = solve_routing(run.spec)
    except NotConverged as e:
        print(f"routing did not converge: {e}")
        return EXIT_FAILED
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / "routing.csv").write_text(f"# spec_hash={run.hash} version={run.version}\n" + table.to_csv())
    print(f"rho={table.rho:.10g} max excess={table.max_excess():.3g}")
    return EXIT_OK


def cmd_section7(run: Run) -> int:
    from .experiments.section7 import (
        DeskInfeasible,
        Section7Params,
        StrictViolation,
        build_section7_spec,
        ladder_stats,
    )

    d = run.raw.get("section7")
    if not isinstance(d, dict):
        raise ConfigError("$.section7", "missing section7 parameters")
    try:
        p = Section7Params(
            gamma0=float(d["gamma0"]),
            eta=float(d["eta"]),
            h2=float(d["h2"]),
            depth=int(d.get("depth", 4)),
            epsilon=float(d["epsilon"]),
            strict=bool(d.get("strict", False)),
        )
    except KeyError as e:
        raise ConfigError(f"$.section7.{e.args[0]}", "missing field") from None
    except (TypeError, ValueError) as e:
        raise ConfigError("$.section7", str(e)) from None
    try:
        net = build_section7_spec(p)
    except StrictViolation as e:
        print("strict validation failed:")
        for f in e.failed:
            print(f"  {f}")
        run.write_json("section7", {"violations": e.failed})
        return EXIT_FAILED
    run.hash = net.report["spec_hash"]
    print(f"rho={net.report['rho']:.10g} bound={net.report['rho_bound']:.10g}")
    for f in net.report["violations"]:
        print(f"  relaxed: {f}")
    out = {"report": net.report}
    if not p.strict:
        e = run.experiment
        try:
            res = ladder_stats(
                net,
                kappa=int(e.get("kappa", 0)),
                level=int(e.get("level", 2)),
                reps=run.reps,
                seed=run.seed,
                max_events=int(e.get("max_events", 200_000)),
                threads=run.threads,
            )
            out["ladder"] = res.as_dict()
            print(res.as_dict())
        except DeskInfeasible as err:
            print(err)
    run.write_json("section7", out)
    return EXIT_OK


def cmd_compare(run: Run) -> int:
    from .config import spec_from_dict
    from .experiments.compare import workload_comparison
    from .experiments.stats import Unstable

    if run.args.config_b:
        spec_b, _ = load_config(run.args.config_b)
    else:
        b = run.experiment.get("b")
        if b is None:
            raise ConfigError("$.experiment.b", "missing second network (or pass --config-b)")
        spec_b = spec_from_dict(b)
    try:
        res = workload_comparison(
            run.spec, spec_b, run.horizon, run.burn_in, seed=run.seed, reps=run.reps, threads=run.threads
        )
    except Unstable as err:
        print(f"unstable: {err}")
        return EXIT_FAILED
    for row in res.rows()[1:]:
        print(*row)
    run.write_table("compare", res.rows())
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "tails": cmd_tails,
    "drift-audit": cmd_drift,
    "routing": cmd_routing,
    "section7": cmd_section7,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "section7":
            try:
                raw = json.loads(Path(args.config).read_text())
            except OSError as e:
                raise ConfigError(args.config, str(e)) from None
            except json.JSONDecodeError as e:
                raise ConfigError(f"line {e.lineno} column {e.colno}", e.msg) from None
            run = Run(args, raw)
        else:
            spec, raw = load_config(args.config)
            run = Run(args, raw, spec)
        return COMMANDS[args.command](run)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
