"""Command-line entry point: figure-ready data files from one invocation.

Every run writes its artifacts plus a `run.json` sidecar holding the
fully resolved configuration, the package version, the configuration
hash, and the wall time, which is enough to reproduce the run exactly.
Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import json
import math
import os
import sys
import time
from pathlib import Path

import click

from . import __version__
from .config import (build_model, build_path, build_profile, config_hash,
                     resolve_config, resolve_output_dir)
from .ensemble import (EnsembleConfig, RecordStore, crossing_fraction,
                       final_energy_comparison)
from .errors import ConfigError
from .exact import initial_state, propagate
from .meanfield import (SaddlePointQuery, ground_state_reference_curve,
                        run_meanfield, solve_saddle_branches)
from .models import diagonal_extremes
from .schedules import ProfileKind
from .spectrum import detect_crossings, lowest_levels

_FMT = "%.17g"


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_FMT % v if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _sanitize(doc):
    """Keep the emitted JSON standard: non-finite floats become strings."""
    if isinstance(doc, dict):
        return {k: _sanitize(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_sanitize(v) for v in doc]
    if isinstance(doc, float) and not math.isfinite(doc):
        return repr(doc)
    return doc


def _write_json(path: Path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(doc), fh, sort_keys=True, indent=1,
                  allow_nan=False)
        fh.write("\n")


def _execute(subcommand, pipeline, config_file, preset, overrides, threads):
    try:
        cfg = resolve_config(subcommand, config_file, preset, overrides)
    except ConfigError as exc:
        _fail(2, exc)
    out_dir = resolve_output_dir(cfg, os.environ.get("IQASIM_OUTPUT_ROOT"))
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(subcommand, _hashable(cfg))
    start = time.perf_counter()
    try:
        extras = pipeline(cfg, out_dir, threads, chash)
    except ConfigError as exc:
        _fail(2, exc)
    except Exception as exc:  # noqa: BLE001 - mapped to the numeric exit code
        _fail(3, exc)
    doc = {"subcommand": subcommand, "config": cfg, "config_hash": chash,
           "version": __version__,
           "wall_time_s": time.perf_counter() - start}
    doc.update(extras or {})
    _write_json(out_dir / "run.json", doc)
    click.echo(f"wrote {out_dir}")


def _hashable(cfg):
    return {sec: tab for sec, tab in cfg.items() if sec != "output"}


def _fail(code, exc):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "key", None):
        doc["key"] = exc.key
    click.echo(json.dumps(doc, sort_keys=True), err=True)
    sys.exit(code)


def _common_options(fn):
    for opt in reversed([
        click.option("--config", "config_file", type=click.Path(), default=None,
                     help="TOML configuration file"),
        click.option("--preset", default=None,
                     help="named figure preset (fig1..fig7, fig6-full, fig7-full)"),
        click.option("--out", default=None, help="output directory"),
        click.option("--threads", default=os.cpu_count() or 1,
                     show_default=True, help="worker pool size"),
    ]):
        fn = opt(fn)
    return fn


def _collect_overrides(out, pairs):
    doc = {}
    for section, key, value in pairs:
        if value is not None:
            doc.setdefault(section, {})[key] = value
    if out is not None:
        doc.setdefault("output", {})["dir"] = out
    return doc


_PATH_FLAGS = [
    click.option("--s0", type=float, default=None),
    click.option("--tau0", type=float, default=None),
    click.option("--s1", type=float, default=None),
    click.option("--tau1", type=float, default=None),
    click.option("--T", "t_total", type=float, default=None),
    click.option("--dt", type=float, default=None),
]
_MODEL_FLAGS = [
    click.option("--profile", type=click.Choice(["ramp", "quench",
                                                 "homogeneous"]), default=None),
    click.option("--model", "model_kind",
                 type=click.Choice(["pspin", "sk", "fig4", "fig5"]),
                 default=None),
    click.option("--n", type=int, default=None),
    click.option("--p", type=int, default=None),
    click.option("--seed", type=int, default=None),
]


def _add(flags):
    def deco(fn):
        for opt in reversed(flags):
            fn = opt(fn)
        return fn
    return deco


@click.group()
@click.version_option(__version__)
def main():
    """Inhomogeneous quantum annealing simulator."""


@main.command()
@_common_options
@_add(_PATH_FLAGS)
@_add(_MODEL_FLAGS)
@click.option("--stride", type=int, default=None)
@click.option("--ref-points", "ref_points", type=int, default=None)
def meanfield(config_file, preset, out, threads, s0, tau0, s1, tau1, t_total,
              dt, profile, model_kind, n, p, seed, stride, ref_points):
    """Mean-field p-spin dynamics: trajectory CSV plus the
    instantaneous-ground-state reference curve."""
    overrides = _collect_overrides(out, [
        ("path", "s0", s0), ("path", "tau0", tau0), ("path", "s1", s1),
        ("path", "tau1", tau1), ("path", "T", t_total), ("path", "dt", dt),
        ("profile", "kind", profile), ("model", "kind", model_kind),
        ("model", "n", n), ("model", "p", p), ("model", "seed", seed),
        ("meanfield", "stride", stride),
        ("meanfield", "ref_points", ref_points)])
    _execute("meanfield", _run_meanfield, config_file, preset, overrides,
             threads)


def _run_meanfield(cfg, out_dir, threads, chash):
    if cfg["model"]["kind"] != "pspin":
        raise ConfigError("mean-field dynamics is defined for the p-spin "
                          "model only", key="model.kind")
    model = build_model(cfg)
    path = build_path(cfg)
    prof = build_profile(cfg, model.n_spins)
    stride = cfg["meanfield"]["stride"] or None
    traj = run_meanfield(path, prof, model, stride=stride)
    _write_csv(out_dir / "trajectory.csv", ["t", "m_z", "energy_density"],
               zip(traj.t.tolist(), traj.m_z.tolist(),
                   traj.energy_density.tolist()))
    ref = ground_state_reference_curve(path, prof, model,
                                       cfg["meanfield"]["ref_points"])
    return {"ground_state_reference": [[t, m] for t, m in ref],
            "final_mz": traj.final_mz, "norm_drift": traj.norm_drift}


@main.command()
@_common_options
@_add(_PATH_FLAGS)
@_add(_MODEL_FLAGS)
@click.option("--stride", type=int, default=None)
def exact(config_file, preset, out, threads, s0, tau0, s1, tau1, t_total, dt,
          profile, model_kind, n, p, seed, stride):
    """Exact state-vector dynamics: per-spin trajectory CSV and the
    freeze log."""
    overrides = _collect_overrides(out, [
        ("path", "s0", s0), ("path", "tau0", tau0), ("path", "s1", s1),
        ("path", "tau1", tau1), ("path", "T", t_total), ("path", "dt", dt),
        ("profile", "kind", profile), ("model", "kind", model_kind),
        ("model", "n", n), ("model", "p", p), ("model", "seed", seed),
        ("exact", "stride", stride)])
    _execute("exact", _run_exact, config_file, preset, overrides, threads)


def _run_exact(cfg, out_dir, threads, chash):
    model = build_model(cfg)
    path = build_path(cfg)
    prof = build_profile(cfg, model.n_spins)
    psi = initial_state(model, path, prof)
    traj = propagate(psi, path, prof, model,
                     stride=cfg["exact"]["stride"] or None)
    summary = diagonal_extremes(model)
    width = summary.e_max - summary.e_min
    nsp = model.n_spins
    header = ["t"] + [f"m_{j}" for j in range(1, nsp + 1)] \
        + ["energy", "energy_fraction"]
    rows = []
    for i, t in enumerate(traj.t.tolist()):
        rows.append([t] + traj.m[i].tolist()
                    + [traj.h0[i], (traj.h0[i] - summary.e_min) / width])
    _write_csv(out_dir / "trajectory.csv", header, rows)
    freeze = [{"spin": j + 1,
               "t_off": None if math.isnan(traj.freeze_times[j])
               else traj.freeze_times[j],
               "frozen_mz": None if math.isnan(traj.freeze_values[j])
               else traj.freeze_values[j]}
              for j in range(nsp)]
    _write_json(out_dir / "freeze_log.json", {"spins": freeze})
    return {"final_energy": float(traj.h0[-1]),
            "final_energy_fraction": float((traj.h0[-1] - summary.e_min)
                                           / width),
            "norm_drift": traj.norm_drift}


@main.command()
@_common_options
@_add(_PATH_FLAGS)
@_add(_MODEL_FLAGS)
@click.option("--n-grid", "n_grid", type=int, default=None)
@click.option("--k-levels", "k_levels", type=int, default=None)
def spectrum(config_file, preset, out, threads, s0, tau0, s1, tau1, t_total,
             dt, profile, model_kind, n, p, seed, n_grid, k_levels):
    """Instantaneous lowest levels with sector labels, and the exact
    crossing events."""
    overrides = _collect_overrides(out, [
        ("path", "s0", s0), ("path", "tau0", tau0), ("path", "s1", s1),
        ("path", "tau1", tau1), ("path", "T", t_total), ("path", "dt", dt),
        ("profile", "kind", profile), ("model", "kind", model_kind),
        ("model", "n", n), ("model", "p", p), ("model", "seed", seed),
        ("spectrum", "n_grid", n_grid), ("spectrum", "k_levels", k_levels)])
    _execute("spectrum", _run_spectrum, config_file, preset, overrides,
             threads)


def _run_spectrum(cfg, out_dir, threads, chash):
    model = build_model(cfg)
    path = build_path(cfg)
    prof = build_profile(cfg, model.n_spins)
    n_grid = cfg["spectrum"]["n_grid"] or None
    k_levels = cfg["spectrum"]["k_levels"] or None
    slices = lowest_levels(model, path, prof, k_levels, n_grid)
    rows = []
    for sl in slices:
        for rank, (energy, lab) in enumerate(sl.levels):
            rows.append([sl.t_over_t, rank, energy,
                         lab.render(model.n_spins)])
    _write_csv(out_dir / "levels.csv",
               ["t_over_T", "level_rank", "energy", "sector_bits"], rows)
    events = detect_crossings(model, path, prof, k_levels, n_grid)
    doc = [{"tau_bracket": list(ev.tau_bracket),
            "refined_tau": ev.refined_tau,
            "sector_a": ev.sector_a.render(model.n_spins),
            "sector_b": ev.sector_b.render(model.n_spins),
            "level_rank": ev.level_rank,
            "involves_ground": ev.involves_ground} for ev in events]
    _write_json(out_dir / "crossings.json", {"events": doc})
    return {"n_events": len(events),
            "n_ground_events": sum(ev.involves_ground for ev in events)}


@main.command()
@_common_options
@click.option("--s", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--p", type=int, default=None)
@click.option("--beta", type=float, default=None)
def saddle(config_file, preset, out, threads, s, tau, p, beta):
    """Static saddle-point solution at one protocol point."""
    overrides = _collect_overrides(out, [
        ("saddle", "s", s), ("saddle", "tau", tau), ("saddle", "p", p),
        ("saddle", "beta", beta)])
    _execute("saddle", _run_saddle, config_file, preset, overrides, threads)


def _run_saddle(cfg, out_dir, threads, chash):
    sd = cfg["saddle"]
    query = SaddlePointQuery(sd["s"], sd["tau"], sd["p"], sd["beta"])
    branches = solve_saddle_branches(query)
    best = branches[0]
    _write_json(out_dir / "saddle.json", {
        "m": best.m, "h": best.h, "f": best.f, "residual": best.residual,
        "branches": [{"m": b.m, "h": b.h, "f": b.f, "residual": b.residual}
                     for b in branches]})
    return {"m": best.m, "h": best.h, "f": best.f}


@main.group()
def ensemble():
    """Batch experiments over random SK instances."""


def _ensemble_config(cfg, out_dir, mode):
    ens = cfg["ensemble"]
    kind = {"ramp": ProfileKind.RAMP, "quench": ProfileKind.QUENCH,
            "homogeneous": ProfileKind.HOMOGENEOUS}[cfg["profile"]["kind"]]
    kwargs = dict(
        n_values=tuple(ens["n_values"]), realizations=ens["realizations"],
        base_seed=ens["base_seed"], profile_kind=kind,
        s0=cfg["path"]["s0"], tau0=cfg["path"]["tau0"],
        s1=cfg["path"]["s1"], tau1=cfg["path"]["tau1"],
        n_grid=ens["n_grid"] or None, output_dir=str(out_dir))
    if mode == "compare":
        kwargs.update(dt=ens["dt"], t_values=tuple(ens["t_values"]),
                      min_qualifying=ens.get("min_qualifying") or None)
    return EnsembleConfig(**kwargs)


_ENSEMBLE_FLAGS = [
    click.option("--n-values", "n_values", default=None,
                 help="comma-separated system sizes"),
    click.option("--realizations", type=int, default=None),
    click.option("--base-seed", "base_seed", type=int, default=None),
    click.option("--n-grid", "n_grid", type=int, default=None),
    click.option("--profile", type=click.Choice(["ramp", "quench",
                                                 "homogeneous"]),
                 default=None),
]


@ensemble.command()
@_common_options
@_add(_ENSEMBLE_FLAGS)
def fraction(config_file, preset, out, threads, n_values, realizations,
             base_seed, n_grid, profile):
    """Fraction of instances with a ground-level crossing, per N."""
    overrides = _collect_overrides(out, [
        ("ensemble", "n_values", n_values),
        ("ensemble", "realizations", realizations),
        ("ensemble", "base_seed", base_seed),
        ("ensemble", "n_grid", n_grid),
        ("profile", "kind", profile)])
    _execute("ensemble-fraction", _run_fraction, config_file, preset,
             overrides, threads)


def _run_fraction(cfg, out_dir, threads, chash):
    config = _ensemble_config(cfg, out_dir, "fraction")
    store = RecordStore(str(out_dir), chash)
    results, _ = crossing_fraction(config, threads=threads, store=store)
    _write_csv(out_dir / "fraction.csv",
               ["N", "f", "ci_low", "ci_high", "n_ok"],
               [[r.n, r.f, r.ci_low, r.ci_high, r.n_ok] for r in results])
    return {"fractions": {str(r.n): r.f for r in results}}


@ensemble.command()
@_common_options
@_add(_ENSEMBLE_FLAGS)
@click.option("--t-values", "t_values", default=None,
              help="comma-separated total times, ascending")
@click.option("--dt", type=float, default=None)
@click.option("--min-qualifying", "min_qualifying", type=int, default=None)
def compare(config_file, preset, out, threads, n_values, realizations,
            base_seed, n_grid, profile, t_values, dt, min_qualifying):
    """Crossing-conditioned final energies: IQA vs conventional."""
    overrides = _collect_overrides(out, [
        ("ensemble", "n_values", n_values),
        ("ensemble", "realizations", realizations),
        ("ensemble", "base_seed", base_seed),
        ("ensemble", "n_grid", n_grid),
        ("profile", "kind", profile),
        ("ensemble", "t_values", t_values),
        ("ensemble", "dt", dt),
        ("ensemble", "min_qualifying", min_qualifying)])
    _execute("ensemble-compare", _run_compare, config_file, preset,
             overrides, threads)


def _run_compare(cfg, out_dir, threads, chash):
    config = _ensemble_config(cfg, out_dir, "compare")
    store = RecordStore(str(out_dir), chash)
    result, _ = final_energy_comparison(config, threads=threads, store=store)
    rows = []
    for name in ("iqa", "conventional"):
        for t_total, mean in zip(result.t_values,
                                 result.mean_fraction[name]):
            rows.append([t_total, name, mean, result.n_instances])
    _write_csv(out_dir / "compare.csv",
               ["T", "protocol", "mean_fraction", "n_instances"], rows)
    return {"plateau": {name: {"value": v, "change": c}
                        for name, (v, c) in result.plateau.items()},
            "n_instances": result.n_instances}


if __name__ == "__main__":
    main()
