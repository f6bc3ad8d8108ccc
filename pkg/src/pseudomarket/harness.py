"""Assumption checks and the seeded Monte Carlo estimate of per-prefix clearing."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import __version__
from .economy import Economy, save_economy
from .ocam import MechanismParams, run_ocam, shuffled
from .verifier import check_daceei, daceei_range

CONDITIONS = ("i", "ii", "iii", "iv")
QUANTILES = (0.0, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0)
TRIAL_STREAM = 0x7121


# ---------------------------------------------------------------- assumption on capacities


@dataclass(frozen=True)
class CapacityCheck:
    holds: bool
    required_capacity: float
    actual_min: int
    required_without_sqrt_term: float
    eps_s: Fraction

    def __iter__(self):
        return iter((self.holds, self.required_capacity, self.actual_min))

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "required_capacity": self.required_capacity,
            "actual_min": self.actual_min,
            "required_without_sqrt_term": self.required_without_sqrt_term,
            "eps_s": str(self.eps_s),
        }


def required_capacity(tau: int, n: int, m: int, eps_n, eps_f) -> tuple[float, float, Fraction]:
    eps_n, eps_f = Fraction(eps_n), Fraction(eps_f)
    eps_s = eps_f * eps_n / 4
    if eps_s * n <= 1:
        raise ValueError("sample too small for the bound to be meaningful (eps_s·n <= 1)")
    scale = 70 / float(eps_s * eps_f**2)
    head = tau * math.log(float(eps_s * n)) + math.log(m)
    full = scale * (head + math.sqrt(n) * math.log(n))
    return full, scale * head, eps_s


def check_assumption2(e: Economy, params: MechanismParams) -> CapacityCheck:
    full, head, eps_s = required_capacity(e.types.tau, e.n, e.m, params.eps_n, params.eps_f)
    actual = min(e.capacities)
    return CapacityCheck(actual >= full, full, actual, head, eps_s)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class RunConfig:
    economy: Economy
    params: MechanismParams
    trials: int
    seed: int
    shuffle: bool = True
    jobs: int = 1
    diagnostic: bool = False
    keep_margins: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    def describe(self) -> dict:
        return {
            "economy_sha256": hashlib.sha256(save_economy(self.economy)).hexdigest(),
            "params": self.params.to_dict(),
            "trials": self.trials,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "diagnostic": self.diagnostic,
        }

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode()).hexdigest()


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, TRIAL_STREAM, trial]).generate_state(1, np.uint64)[0])


def run_trial(e: Economy, params: MechanismParams, seed: int, trial: int, shuffle: bool, fix_budget: bool = False) -> dict:
    """One mechanism run plus its clearing check, as a plain record."""
    et = shuffled(e, seed, trial) if shuffle else e
    budget_seed = trial_seed(seed, 0) if fix_budget else trial_seed(seed, trial)
    pt = replace(params, seed=budget_seed)
    out = run_ocam(et, pt)
    rec = {
        "trial": trial,
        "solver_failure": bool(out.failure_flag),
        "violations": {c: 0 for c in CONDITIONS},
        "priced": [bool(v > 0) for v in out.prices],
    }
    if out.failure_flag:
        rec["status"] = "solver-failure"
        rec["margins"] = []
        return rec
    report = check_daceei(out, et, pt)
    for v in report.violations:
        rec["violations"][v["condition"]] += 1
    rec["status"] = "pass" if report.ok else "fail"
    margins = []
    cum = [0] * et.m
    ks = daceei_range(et.n, pt)
    for k, x in enumerate(out.allocation, start=1):
        cum = [c + v for c, v in zip(cum, x)]
        if k in ks:
            for j, (used, c) in enumerate(zip(cum, et.capacities)):
                margins.append((k, j, float(Fraction(used * et.n, k * c) - 1), out.prices[j] > 0))
    rec["margins"] = margins
    return rec


def _trial_job(args):
    return run_trial(*args)


def _run_trials(cfg: RunConfig, shuffle: bool, fix_budget: bool, on_record=None) -> list[dict]:
    jobs = [(cfg.economy, cfg.params, cfg.seed, t, shuffle, fix_budget) for t in range(cfg.trials)]
    records: list[dict] = []
    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                for rec in pool.map(_trial_job, jobs, chunksize=max(1, cfg.trials // (4 * cfg.jobs))):
                    records.append(rec)
        else:
            for job in jobs:
                records.append(_trial_job(job))
    except KeyboardInterrupt:
        if on_record is not None:
            on_record(records, interrupted=True)
        raise
    return records


def _quantiles(values: list[float]) -> dict:
    if not values:
        return {}
    arr = np.array(values)
    return {str(q): float(np.quantile(arr, q)) for q in QUANTILES}


def summarize(records: list[dict], cfg: RunConfig, partial: bool = False) -> dict:
    passes = sum(r["status"] == "pass" for r in records)
    fails = sum(r["status"] == "fail" for r in records)
    solver = sum(r["status"] == "solver-failure" for r in records)
    checked = passes + fails
    lo, hi = wilson_interval(fails, checked)
    per_condition = {c: sum(1 for r in records if r["violations"][c]) for c in CONDITIONS}
    m = cfg.economy.m
    by_good = {}
    for j in range(m):
        vals = [mg for r in records if r["status"] == "pass" for (k, g, mg, pr) in r["margins"] if g == j]
        by_good[str(j)] = _quantiles(vals)
    return {
        "trials": len(records),
        "passes": passes,
        "daceei_failures": fails,
        "solver_failures": solver,
        "failure_frequency": fails / checked if checked else None,
        "failure_interval_95": [lo, hi],
        "interval_method": "wilson",
        "violating_trials_by_condition": per_condition,
        "margin_quantiles_passing_runs": by_good,
        "partial": partial,
    }


def monte_carlo(cfg: RunConfig, partial_sink=None) -> dict:
    """Seeded trials, each checked for per-prefix clearing; deterministic report.

    ``partial_sink(report)`` receives a partial report if interrupted.
    """

    def flush(records, interrupted=False):
        if partial_sink is not None:
            partial_sink(_report(cfg, records, partial=True))

    records = _run_trials(cfg, cfg.shuffle, False, flush)
    report = _report(cfg, records)
    if cfg.diagnostic:
        fixed_arrival = summarize(_run_trials(cfg, False, False), cfg)
        fixed_budgets = summarize(_run_trials(cfg, True, True), cfg)
        report["diagnostic"] = {
            "label": "diagnostic: one randomness source held fixed",
            "arrival_fixed_budgets_random": _brief(fixed_arrival),
            "arrival_random_budgets_fixed": _brief(fixed_budgets),
        }
    return report


def _brief(summary: dict) -> dict:
    keys = ("trials", "passes", "daceei_failures", "solver_failures", "failure_frequency", "failure_interval_95")
    return {k: summary[k] for k in keys}


def _report(cfg: RunConfig, records: list[dict], partial: bool = False) -> dict:
    return {
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "config": cfg.describe(),
        "summary": summarize(records, cfg, partial),
        "records": [
            {"trial": r["trial"], "status": r["status"], "violations": r["violations"], "priced": r["priced"]}
            for r in records
        ],
        "_margins": [(r["trial"], k, j, mg) for r in records for (k, j, mg, _) in r["margins"]],
    }


def report_json(report: dict) -> bytes:
    public = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(public, indent=2).encode() + b"\n"


def margins_csv(report: dict) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial", "k", "good", "margin"])
    for trial, k, j, mg in report["_margins"]:
        writer.writerow([trial, k, j, repr(mg)])
    return buf.getvalue().encode()
