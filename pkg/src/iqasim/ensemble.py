"""Batch experiments over random SK instances: the crossing-fraction
curve f(N) and the final-energy comparison of IQA against conventional
annealing on crossing-conditioned ensembles.

Instance r of size N is seeded by a pure function of (base_seed, N, r),
so results are identical for any worker count or completion order.
Records go to an append-only JSONL store; resuming skips completed keys
after checking the configuration hash.
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ResumeMismatchError
from .exact import WaveFunction, propagate
from .models import SkInstance, diagonal_extremes, sample_sk
from .schedules import AnnealPath, FieldProfile, ProfileKind
from .spectrum import detect_crossings

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class EnsembleConfig:
    n_values: Tuple[int, ...] = (4, 6, 8, 10)
    realizations: int = 200
    base_seed: int = 0
    profile_kind: ProfileKind = ProfileKind.RAMP
    s0: float = 0.0
    tau0: float = 0.0
    s1: float = 1.0
    tau1: float = 1.0
    dt: float = 0.01
    t_values: Tuple[float, ...] = ()
    n_grid: Optional[int] = None
    min_qualifying: Optional[int] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1", key="realizations")
        if any(n < 2 for n in self.n_values):
            raise ConfigError("every N must be >= 2", key="n_values")

    def scan_path(self) -> AnnealPath:
        # crossing detection is parameterized by t/T only
        return AnnealPath(self.s0, self.tau0, self.s1, self.tau1, 1.0, 1.0)

    def run_path(self, total_time: float) -> AnnealPath:
        return AnnealPath(self.s0, self.tau0, self.s1, self.tau1,
                          total_time, self.dt)


def derive_seed(base_seed: int, n: int, r: int) -> int:
    """Deterministic per-instance seed, independent of execution order."""
    state = np.random.SeedSequence(base_seed, spawn_key=(n, r)).generate_state(2)
    return int(state[0]) | (int(state[1]) << 32)


def wilson_interval(successes: int, total: int) -> Tuple[float, float]:
    """95% Wilson score interval for a binomial fraction."""
    if total < 1:
        raise ConfigError("Wilson interval needs at least one trial")
    z2 = _Z95 * _Z95
    p = successes / total
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = _Z95 * math.sqrt(p * (1.0 - p) / total
                            + z2 / (4.0 * total * total)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == total else min(1.0, center + half)
    return lo, hi


@dataclass
class FractionResult:
    n: int
    f: float
    ci_low: float
    ci_high: float
    n_ok: int
    n_crossing: int
    n_failed: int


@dataclass
class CompareResult:
    t_values: Tuple[float, ...]
    mean_fraction: Dict[str, List[float]]
    n_instances: int
    plateau: Dict[str, Tuple[float, float]]   # protocol -> (value, |change|)


def _crossing_summary(config: EnsembleConfig, inst: SkInstance) -> dict:
    profile = FieldProfile(config.profile_kind, inst.n_spins)
    events = detect_crossings(inst, config.scan_path(), profile,
                              ground_only=True, n_grid=config.n_grid)
    taus = [ev.refined_tau for ev in events]
    return {"ground_count": len(events), "taus": taus,
            "has_ground": bool(events)}


def _fraction_task(args) -> dict:
    config, n, r = args
    seed = derive_seed(config.base_seed, n, r)
    start = time.perf_counter()
    record = {"mode": "fraction", "n": n, "r": r, "seed": seed}
    try:
        inst = sample_sk(n, seed)
        record["crossings"] = _crossing_summary(config, inst)
    except Exception as exc:  # recorded, never silently dropped
        record["error"] = f"{type(exc).__name__}: {exc}"
    record["wall_time_s"] = time.perf_counter() - start
    return record


def _compare_task(args) -> dict:
    config, n, r = args
    seed = derive_seed(config.base_seed, n, r)
    start = time.perf_counter()
    record = {"mode": "compare", "n": n, "r": r, "seed": seed}
    try:
        inst = sample_sk(n, seed)
        record["crossings"] = _crossing_summary(config, inst)
        if record["crossings"]["has_ground"]:
            summary = diagonal_extremes(inst)
            width = summary.e_max - summary.e_min
            results: Dict[str, Dict[str, dict]] = {}
            for name, kind in (("iqa", ProfileKind.RAMP),
                               ("conventional", ProfileKind.HOMOGENEOUS)):
                profile = FieldProfile(kind, n)
                per_t = {}
                for total_time in config.t_values:
                    path = config.run_path(total_time)
                    psi = WaveFunction.all_plus_x(n)
                    traj = propagate(psi, path, profile, inst,
                                     stride=path.n_steps)
                    h0 = traj.final_h0
                    per_t[repr(float(total_time))] = {
                        "h0": h0, "fraction": (h0 - summary.e_min) / width}
                results[name] = per_t
            record["results"] = results
    except Exception as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
    record["wall_time_s"] = time.perf_counter() - start
    return record


def _run_tasks(task_fn, tasks, threads: int) -> List[dict]:
    if threads <= 1 or len(tasks) <= 1:
        results = [task_fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads,
                                 initializer=_limit_worker_threads) as pool:
            results = list(pool.map(task_fn, tasks, chunksize=1))
    return sorted(results, key=lambda rec: (rec["n"], rec["r"]))


def _limit_worker_threads():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


class RecordStore:
    """Append-only JSONL store keyed by (mode, n, r)."""

    def __init__(self, output_dir: str, config_hash: str):
        self.path = Path(output_dir) / "records.jsonl"
        self.config_hash = config_hash
        self.records: Dict[Tuple[str, int, int], dict] = {}
        self._load()

    def _load(self):
        if not self.path.exists():
            return
        kept = []
        dirty = False
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    dirty = True  # partial trailing line from a crash
                    break
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    dirty = True
                    break
                if rec.get("config_hash") != self.config_hash:
                    raise ResumeMismatchError(
                        f"{self.path} holds records for config hash "
                        f"{rec.get('config_hash')!r}, not {self.config_hash!r}; "
                        "use a fresh output directory")
                kept.append(line)
                self.records[(rec["mode"], rec["n"], rec["r"])] = rec
        if dirty:
            warnings.warn(f"discarding a partial trailing line in {self.path}",
                          stacklevel=2)
            tmp = self.path.with_suffix(".jsonl.tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.writelines(kept)
            os.replace(tmp, self.path)

    def has(self, mode: str, n: int, r: int) -> bool:
        return (mode, n, r) in self.records

    def get(self, mode: str, n: int, r: int) -> dict:
        return self.records[(mode, n, r)]

    def append(self, record: dict):
        record = dict(record)
        record["config_hash"] = self.config_hash
        self.records[(record["mode"], record["n"], record["r"])] = record
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _collect(config: EnsembleConfig, mode: str, task_fn, keys,
             store: Optional[RecordStore], threads: int) -> List[dict]:
    fresh = [(config, n, r) for n, r in keys
             if store is None or not store.has(mode, n, r)]
    produced = _run_tasks(task_fn, fresh, threads)
    if store is not None:
        for rec in produced:
            store.append(rec)
        return [store.get(mode, n, r) for n, r in keys]
    by_key = {(rec["n"], rec["r"]): rec for rec in produced}
    return [by_key[key] for key in keys]


def crossing_fraction(config: EnsembleConfig, threads: int = 1,
                      store: Optional[RecordStore] = None
                      ) -> Tuple[List[FractionResult], List[dict]]:
    """Fraction of instances with at least one ground-level crossing,
    with a 95% Wilson interval, per system size."""
    keys = [(n, r) for n in config.n_values
            for r in range(config.realizations)]
    records = _collect(config, "fraction", _fraction_task, keys, store,
                       threads)
    results = []
    for n in config.n_values:
        recs = [rec for rec in records if rec["n"] == n]
        failed = [rec for rec in recs if "error" in rec]
        for rec in failed:
            warnings.warn(f"instance (N={n}, r={rec['r']}) failed and is "
                          f"excluded: {rec['error']}", stacklevel=2)
        ok = [rec for rec in recs if "error" not in rec]
        hits = sum(1 for rec in ok if rec["crossings"]["has_ground"])
        lo, hi = wilson_interval(hits, len(ok))
        results.append(FractionResult(n=n, f=hits / len(ok), ci_low=lo,
                                      ci_high=hi, n_ok=len(ok),
                                      n_crossing=hits, n_failed=len(failed)))
    return results, records


def final_energy_comparison(config: EnsembleConfig, threads: int = 1,
                            store: Optional[RecordStore] = None
                            ) -> Tuple[CompareResult, List[dict]]:
    """Crossing-conditioned mean final energy fraction per protocol and
    total time; also estimates the large-T plateau from the two largest
    T values."""
    if len(config.n_values) != 1:
        raise ConfigError("comparison mode runs one system size at a time",
                          key="n_values")
    if not config.t_values:
        raise ConfigError("comparison mode needs t_values", key="t_values")
    n = config.n_values[0]
    t_sorted = tuple(sorted(config.t_values))
    if t_sorted != tuple(config.t_values):
        raise ConfigError("t_values must be ascending", key="t_values")

    keys = [(n, r) for r in range(config.realizations)]
    records = _collect(config, "compare", _compare_task, keys, store, threads)
    qualifying = [rec for rec in records
                  if "error" not in rec and rec["crossings"]["has_ground"]]
    if config.min_qualifying:
        r_next = config.realizations
        cap = 10 * config.realizations
        while len(qualifying) < config.min_qualifying and r_next < cap:
            extra = _collect(config, "compare", _compare_task,
                             [(n, r_next)], store, threads)
            rec = extra[0]
            if "error" not in rec and rec["crossings"]["has_ground"]:
                qualifying.append(rec)
            records.append(rec)
            r_next += 1
        if len(qualifying) < config.min_qualifying:
            raise ConfigError(
                f"only {len(qualifying)} qualifying instances found within "
                f"{cap} draws; increase realizations")
    if not qualifying:
        raise ConfigError(
            "no instance with a ground-level crossing was drawn; "
            "increase realizations")

    mean_fraction: Dict[str, List[float]] = {}
    for name in ("iqa", "conventional"):
        means = []
        for total_time in config.t_values:
            key = repr(float(total_time))
            vals = [rec["results"][name][key]["fraction"]
                    for rec in qualifying]
            means.append(float(np.mean(vals)))
        mean_fraction[name] = means
    plateau = {}
    for name, means in mean_fraction.items():
        if len(means) >= 2:
            plateau[name] = (means[-1], abs(means[-1] - means[-2]))
        else:
            plateau[name] = (means[-1], math.nan)
    return CompareResult(tuple(config.t_values), mean_fraction,
                         len(qualifying), plateau), records
