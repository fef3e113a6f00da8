"""Throughput of the compiled fast kernel against its interpreted fallback.

Each backend runs in its own interpreter because JSQLAB_DISABLE_NUMBA is read
at import time. Compilation is excluded by a short warm-up run. Both backends
must produce identical summaries; the script exits 1 otherwise.

    python benchmarks/bench_kernels.py [--scale 1.0]
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

CASES = {
    # name: (queues, arrival rate, choices, horizon at scale 1)
    "mm1": (1, 0.8, 1, 20_000.0),
    "jsq-3": (3, 2.1, 2, 5_000.0),
    "mean-field-100": (100, 70.0, 2, 200.0),
}


def worker(scale: float) -> dict:
    from jsqlab._accel import backend_name
    from jsqlab.distributions import exponential
    from jsqlab.engine.fast import FastSimulator
    from jsqlab.network import ClassIndependent, MeanFieldChoose, NetworkSpec

    out = {"backend": backend_name(), "cases": []}
    for name, (N, rate, D, horizon) in CASES.items():
        spec = NetworkSpec(N, (exponential(rate),), (MeanFieldChoose(D),), ClassIndependent((exponential(1.0),) * N))
        FastSimulator(spec, seed=1).run_until(1.0)  # compile or warm caches
        sim = FastSimulator(spec, seed=1)
        start = time.perf_counter()
        sim.run_until(horizon * scale)
        seconds = time.perf_counter() - start
        summary = sim.summary()
        events = summary["arrivals"] + summary["departures"]
        digest = hashlib.sha256(json.dumps(summary, sort_keys=True).encode()).hexdigest()[:16]
        out["cases"].append({"name": name, "events": events, "seconds": seconds, "digest": digest})
    return out


def run_backend(disable: bool, scale: float) -> dict:
    env = dict(os.environ, JSQLAB_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run(
        [sys.executable, __file__, "--worker", "--scale", str(scale)], env=env, capture_output=True, text=True
    )
    if res.returncode != 0:
        sys.exit(res.stderr)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiplier on every horizon")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(worker(args.scale)))
        return 0
    compiled = run_backend(False, args.scale)
    pure = run_backend(True, args.scale)
    print(f"{'case':<16}{'events':>10}{compiled['backend'] + ' ev/s':>16}{pure['backend'] + ' ev/s':>16}{'speedup':>10}  same")
    same_all = True
    for c, p in zip(compiled["cases"], pure["cases"]):
        same = c["digest"] == p["digest"]
        same_all &= same
        fast = c["events"] / c["seconds"]
        slow = p["events"] / p["seconds"]
        print(f"{c['name']:<16}{c['events']:>10}{fast:>16.0f}{slow:>16.0f}{fast / slow:>9.1f}x  {same}")
    return 0 if same_all else 1


if __name__ == "__main__":
    sys.exit(main())
