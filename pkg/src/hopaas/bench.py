"""Desk-scale campaign harness.

Spawns N simulated workers against a running server, optimizing analytic
benchmark objectives with optional simulated per-step training curves
(exponential decay toward the final objective), and emits a campaign
report reconciled against the server's accounting.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from . import core

N_CURVE_STEPS = 20
CURVE_AMPLITUDE = 5.0


class BenchError(Exception):
    pass


class ServerUnreachableError(BenchError):
    pass


class AuthRejectedError(BenchError):
    pass


# ---------------------------------------------------------------------------
# Analytic objectives

def _sphere(params, rng):
    return float(sum(v * v for v in params.values()))


def _branin(params, rng):
    x, y = params["x"], params["y"]
    a = 1.0
    b = 5.1 / (4 * math.pi ** 2)
    c = 5.0 / math.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8 * math.pi)
    return float(a * (y - b * x * x + c * x - r) ** 2 + s * (1 - t) * math.cos(x) + s)


def _noisy_rosenbrock(params, rng):
    x, y = params["x"], params["y"]
    f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    if rng is not None:
        f += float(rng.normal(0.0, 0.1))
    return float(f)


@dataclass(frozen=True)
class BenchObjective:
    name: str
    space: core.SearchSpace
    fn: object = field(repr=False)

    def evaluate(self, params, rng=None):
        return self.fn(params, rng)

    def curve(self, params, step, rng=None):
        """Simulated per-step training loss decaying toward the final value."""
        final = self.fn(params, None)
        tau = _tau(params)
        value = final + CURVE_AMPLITUDE * math.exp(-step / tau)
        if rng is not None:
            value += float(rng.normal(0.0, 0.01))
        return value


def _tau(params):
    # Deterministic per-parameter-set decay constant in [3, 15).
    blob = json.dumps(params, sort_keys=True, separators=(",", ":")).encode()
    h = int.from_bytes(hashlib.sha256(blob).digest()[:4], "big")
    return 3.0 + 12.0 * (h % 1000) / 1000.0


OBJECTIVES = {
    "sphere": BenchObjective(
        "sphere",
        core.SearchSpace(params=(
            core.ParamSpec("x0", core.UNIFORM, -5.12, 5.12),
            core.ParamSpec("x1", core.UNIFORM, -5.12, 5.12),
        )),
        _sphere,
    ),
    "branin": BenchObjective(
        "branin",
        core.SearchSpace(params=(
            core.ParamSpec("x", core.UNIFORM, -5.0, 10.0),
            core.ParamSpec("y", core.UNIFORM, 0.0, 15.0),
        )),
        _branin,
    ),
    "noisy_rosenbrock": BenchObjective(
        "noisy_rosenbrock",
        core.SearchSpace(params=(
            core.ParamSpec("x", core.UNIFORM, -2.0, 2.0),
            core.ParamSpec("y", core.UNIFORM, -2.0, 2.0),
        )),
        _noisy_rosenbrock,
    ),
}

BRANIN_GLOBAL_MINIMUM = 0.39788735772973816  # value at (-pi, 12.275)


def oracle_random_search(objective: BenchObjective, n_trials: int, seed: int) -> float:
    """Pure in-process uniform-random search; the baseline oracle for every
    statistical comparison. Never touches a server."""
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(n_trials):
        params = core.sample_uniform_random(objective.space, rng)
        best = min(best, objective.evaluate(params, rng))
    return best


# ---------------------------------------------------------------------------
# Worker protocol client

class WorkerClient:
    """Thin wire client used by simulated workers."""

    def __init__(self, server_url, token, timeout=30.0):
        self.token = token
        self._http = httpx.Client(base_url=server_url.rstrip("/"), timeout=timeout)

    def close(self):
        self._http.close()

    def _post(self, endpoint, body):
        try:
            resp = self._http.post(f"/api/{endpoint}/{self.token}", json=body)
        except httpx.HTTPError as exc:
            raise ServerUnreachableError(str(exc)) from exc
        if resp.status_code == 401:
            raise AuthRejectedError(resp.text)
        if resp.status_code >= 400:
            raise BenchError(f"{endpoint} -> {resp.status_code}: {resp.text}")
        return resp.json()

    def ask(self, study_name, space_wire, properties_wire):
        return self._post("ask", {
            "study_name": study_name,
            "properties": properties_wire,
            "space": space_wire,
        })

    def tell(self, trial_id, objective=None, failed=False):
        if failed:
            return self._post("tell", {"trial_id": trial_id, "state": "failed"})
        return self._post("tell", {"trial_id": trial_id, "objective": objective})

    def should_prune(self, trial_id, step, value):
        return self._post("should_prune", {
            "trial_id": trial_id, "step": step, "value": value,
        })["prune"]


# ---------------------------------------------------------------------------
# Campaign

@dataclass
class WorkerStats:
    worker: int
    asks: int = 0
    completed: int = 0
    pruned: int = 0
    failed: int = 0
    steps: int = 0
    trial_ids: list = field(default_factory=list)
    trial_log: list = field(default_factory=list)  # (trial_id, params, outcome)


def _worker_loop(worker_idx, server_url, token, study_name, objective,
                 properties_wire, quota, seed, n_steps, stats: WorkerStats):
    client = WorkerClient(server_url, token)
    space_wire = core.space_wire(objective.space)
    use_pruning = properties_wire["pruner"]["kind"] != "none"
    try:
        for local in range(quota):
            rng = np.random.default_rng([seed, worker_idx, local])
            resp = client.ask(study_name, space_wire, properties_wire)
            stats.asks += 1
            trial_id, params = resp["trial_id"], resp["params"]
            stats.trial_ids.append(trial_id)
            pruned = False
            if use_pruning:
                for step in range(n_steps):
                    value = objective.curve(params, step, rng)
                    stats.steps += 1
                    if client.should_prune(trial_id, step, value):
                        pruned = True
                        break
            if pruned:
                stats.pruned += 1
                stats.trial_log.append((trial_id, params, "pruned"))
            else:
                final = objective.evaluate(params, rng)
                client.tell(trial_id, objective=final)
                stats.completed += 1
                stats.trial_log.append((trial_id, params, final))
    finally:
        client.close()


def run_campaign(server_url, token, objective, n_workers, n_trials,
                 sampler=None, pruner=None, seed=7, n_steps=N_CURVE_STEPS,
                 study_name=None, admin_key=None):
    """Run one study campaign and return the report dict.

    n_trials asks are issued in total, split evenly across workers; each
    opened trial is driven to completed or pruned. With an admin key the
    report is cross-checked against the server's accounting.
    """
    if isinstance(objective, str):
        objective = OBJECTIVES[objective]
    sampler = sampler or {"kind": "tpe", "seed": seed}
    pruner = pruner or {"kind": "none"}
    study_name = study_name or f"bench-{objective.name}-{seed}"
    properties_wire = {"direction": "minimize", "sampler": sampler, "pruner": pruner}

    quotas = [n_trials // n_workers + (1 if w < n_trials % n_workers else 0)
              for w in range(n_workers)]
    all_stats = [WorkerStats(worker=w) for w in range(n_workers)]
    started = time.monotonic()
    threads = []
    errors = []

    def run(w):
        try:
            _worker_loop(w, server_url, token, study_name, objective,
                         properties_wire, quotas[w], seed, n_steps, all_stats[w])
        except Exception as exc:  # surfaced in the report, not swallowed
            errors.append((w, exc))

    for w in range(n_workers):
        t = threading.Thread(target=run, args=(w,), name=f"bench-worker-{w}")
        t.start()
        threads.append(t)
    for t in threads:
        t.join()
    wall = time.monotonic() - started

    if errors:
        raise errors[0][1]

    all_ids = [tid for s in all_stats for tid in s.trial_ids]
    completions = [o for s in all_stats for (_, _, o) in s.trial_log
                   if not isinstance(o, str)]
    report = {
        "study_name": study_name,
        "objective": objective.name,
        "n_workers": n_workers,
        "n_trials": n_trials,
        "asks": sum(s.asks for s in all_stats),
        "completed": sum(s.completed for s in all_stats),
        "pruned": sum(s.pruned for s in all_stats),
        "failed": sum(s.failed for s in all_stats),
        "best_objective": min(completions) if completions else None,
        "total_steps": sum(s.steps for s in all_stats),
        "wall_clock": wall,
        "unique_trial_ids": len(set(all_ids)) == len(all_ids),
        "per_worker": [
            {"worker": s.worker, "asks": s.asks, "completed": s.completed,
             "pruned": s.pruned, "failed": s.failed, "steps": s.steps,
             "trials": [
                 {"trial_id": tid, "params": params, "outcome": outcome}
                 for tid, params, outcome in s.trial_log
             ]}
            for s in all_stats
        ],
    }
    report["conserved"] = (
        report["asks"] == report["completed"] + report["pruned"] + report["failed"]
    )
    report["reconciled"] = report["conserved"] and report["unique_trial_ids"]

    if admin_key and all_ids:
        study_id = all_ids[0].rsplit("-", 1)[0]
        with httpx.Client(base_url=server_url.rstrip("/"), timeout=30.0) as http:
            resp = http.get(f"/api/studies/{study_id}",
                            headers={"x-admin-key": admin_key})
            resp.raise_for_status()
            server_side = resp.json()
        report["study_id"] = study_id
        report["server_counts"] = server_side["counts"]
        report["reconciled"] = report["reconciled"] and (
            server_side["counts"]["completed"] == report["completed"]
            and server_side["counts"]["pruned"] == report["pruned"]
            and server_side["counts"]["failed"] == report["failed"]
            and server_side["counts"]["running"] == 0
            and server_side["trial_counter"] == report["asks"]
        )
    return report


def format_report(report) -> str:
    lines = [
        f"study       {report['study_name']} ({report['objective']})",
        f"workers     {report['n_workers']}",
        f"trials      asks={report['asks']} completed={report['completed']}"
        f" pruned={report['pruned']} failed={report['failed']}",
        f"best        {report['best_objective']}",
        f"steps       {report['total_steps']}",
        f"wall clock  {report['wall_clock']:.2f}s",
        f"reconciled  {report['reconciled']}",
    ]
    return "\n".join(lines)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="hopaas-bench")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a campaign against a server")
    run.add_argument("--server", required=True)
    run.add_argument("--token", required=True)
    run.add_argument("--objective", choices=sorted(OBJECTIVES), default="sphere")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--trials", type=int, default=30)
    run.add_argument("--sampler", choices=["random", "tpe", "grid"], default="tpe")
    run.add_argument("--pruner", choices=["none", "median"], default="none")
    run.add_argument("--warmup-steps", type=int, default=5)
    run.add_argument("--min-trials", type=int, default=5)
    run.add_argument("--steps", type=int, default=N_CURVE_STEPS)
    run.add_argument("--seed", type=int, default=7)
    run.add_argument("--study-name", default=None)
    run.add_argument("--admin-key", default=None,
                     help="enables reconciliation against the read API")
    run.add_argument("--report", default=None, help="write the JSON report here")
    args = parser.parse_args(argv)

    pruner = {"kind": "none"}
    if args.pruner == "median":
        pruner = {"kind": "median", "n_warmup_steps": args.warmup_steps,
                  "n_min_trials": args.min_trials}
    report = run_campaign(
        args.server, args.token, args.objective,
        n_workers=args.workers, n_trials=args.trials,
        sampler={"kind": args.sampler, "seed": args.seed},
        pruner=pruner, seed=args.seed, n_steps=args.steps,
        study_name=args.study_name, admin_key=args.admin_key,
    )
    print(format_report(report))
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2)
    return 0 if report["reconciled"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
