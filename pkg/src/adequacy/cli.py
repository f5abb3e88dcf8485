"""Command-line front end: cluster, solve, validate, report.

All flags can be overridden with environment variables prefixed
``ADEQUACY_`` (e.g. ``ADEQUACY_SOLVE_THREADS=4``). Exit codes: 0 success,
2 input/config error, 3 statistical target unmet (artifacts still
written), 4 numerical failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import click
import numpy as np

from . import __version__
from .errors import AdequacyError, NumericalError, ParseError, ValidationError
from .model import load_system
from .reliability import ReliabilityReport, compare_is_oos, validate
from .scenario import build_profile_library
from .sd import SDConfig, run_sd

EXIT_INPUT = 2
EXIT_TARGET_UNMET = 3
EXIT_NUMERICAL = 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now(normalize):
    if normalize:
        return "1970-01-01T00:00:00+00:00"
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command, config, inputs, seeds, artifacts,
                   normalize_timestamps, started):
    manifest = {
        "schema": 1,
        "tool_version": __version__,
        "command": command,
        "config": config,
        "input_hashes": {p: _sha256(p) for p in inputs},
        "master_seeds": seeds,
        "started_at": started,
        "finished_at": _now(normalize_timestamps),
        "artifacts": sorted(artifacts),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


@click.group(context_settings={"auto_envvar_prefix": "ADEQUACY"})
@click.version_option(__version__)
def main():
    """Stochastic capacity procurement toolkit."""


@main.command("cluster")
@click.option("--input", "input_csv", required=True,
              type=click.Path(exists=False))
@click.option("--k", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--normalize-timestamps", is_flag=True, default=False)
def cmd_cluster(input_csv, k, seed, out, normalize_timestamps):
    """Cluster historical daily profiles into a representative library."""
    started = _now(normalize_timestamps)
    try:
        with open(input_csv, "rb") as f:
            raw = f.read()
        rows = []
        for ln, line in enumerate(raw.decode().splitlines()):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as e:
                raise ParseError(f"{input_csv} row {ln}: {e}") from e
        daily = np.array(rows)
        if daily.size and (daily.min() < 0 or daily.max() > 1):
            bad = np.argwhere((daily < 0) | (daily > 1))[0]
            raise ParseError(f"{input_csv} row {bad[0]} column {bad[1]}: "
                             "capacity factors must lie in [0,1]")
        lib = build_profile_library(daily, k, seed, source_bytes=raw)
    except (OSError, ParseError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INPUT)
    lib.to_json(out)
    out_dir = os.path.dirname(os.path.abspath(out))
    write_manifest(out_dir, "cluster",
                   {"k": k, "seed": seed}, [input_csv], [seed], [out],
                   normalize_timestamps, started)


@main.command("solve")
@click.option("--system", "system_path", required=True, type=click.Path())
@click.option("--batch", default=32, show_default=True)
@click.option("--rho", default=None, type=float)
@click.option("--r", "ratio", default=0.2, show_default=True)
@click.option("--max-samples", default=20_000, show_default=True)
@click.option("--eue-se-target", default=0.25, show_default=True)
@click.option("--gap-threshold", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--normalize-timestamps", is_flag=True, default=False)
def cmd_solve(system_path, batch, rho, ratio, max_samples, eue_se_target,
              gap_threshold, seed, threads, out_dir, normalize_timestamps):
    """Optimize the capacity vector with stabilized stochastic decomposition."""
    started = _now(normalize_timestamps)
    try:
        system = load_system(system_path)
        config = SDConfig(batch_size=batch, rho=rho, incumbent_ratio=ratio,
                          max_samples=max_samples,
                          eue_se_target=eue_se_target,
                          gap_threshold=gap_threshold, master_seed=seed,
                          threads=threads)
    except (ParseError, ValidationError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INPUT)
    try:
        result = run_sd(system, config)
    except NumericalError as e:
        click.echo(f"numerical failure: {e}", err=True)
        sys.exit(EXIT_NUMERICAL)

    os.makedirs(out_dir, exist_ok=True)
    artifacts = []

    cfg_path = os.path.join(out_dir, "config.json")
    with open(cfg_path, "w") as f:
        json.dump({"system": os.path.abspath(system_path),
                   "batch": batch, "rho": rho, "r": ratio,
                   "max_samples": max_samples,
                   "eue_se_target": eue_se_target,
                   "gap_threshold": gap_threshold,
                   "seed": seed, "threads": threads,
                   "voll": system.voll,
                   "status": result.status}, f, indent=1, sort_keys=True)
    artifacts.append(cfg_path)

    hist_path = os.path.join(out_dir, "history.csv")
    _write_csv(hist_path,
               ["k", "n_samples", "gap_rel", "gap_abs",
                "objective_incumbent", "eue_incumbent", "eue_se_ratio",
                "incumbent_updated", "dual_cache", "walltime"],
               [[h["k"], h["n_samples"], "%.12g" % h["gap_rel"],
                 "%.12g" % h["gap_abs"], "%.12g" % h["objective_incumbent"],
                 "%.12g" % h["eue_incumbent"], "%.12g" % h["eue_se_ratio"],
                 h["incumbent_updated"], h["dual_cache"],
                 "0" if normalize_timestamps else "%.3f" % h["walltime"]]
                for h in result.history])
    artifacts.append(hist_path)

    x_path = os.path.join(out_dir, "x_star.csv")
    _write_csv(x_path, ["unit_id", "cleared_mw"],
               [[uid, "%.17g" % v]
                for uid, v in zip(system.unit_ids, result.x_star)])
    artifacts.append(x_path)

    ledger_path = os.path.join(out_dir, "scenario_ledger.json")
    with open(ledger_path, "w") as f:
        json.dump({"master_seed": seed, "count": result.n_samples},
                  f, indent=1)
    artifacts.append(ledger_path)

    write_manifest(out_dir, "solve",
                   {"batch": batch, "rho": rho, "r": ratio,
                    "max_samples": max_samples,
                    "eue_se_target": eue_se_target, "threads": threads},
                   [system_path], [seed], artifacts, normalize_timestamps,
                   started)
    if result.status != "converged":
        sys.exit(EXIT_TARGET_UNMET)


def _read_x(path):
    with open(path) as f:
        rows = list(csv.reader(f))
    return [r[0] for r in rows[1:]], np.array([float(r[1]) for r in rows[1:]])


@main.command("validate")
@click.option("--system", "system_path", required=True, type=click.Path())
@click.option("--x", "x_path", required=True, type=click.Path())
@click.option("--samples", default=20_000, show_default=True)
@click.option("--seed", default=1, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--is-report", "is_report_path", default=None,
              type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--normalize-timestamps", is_flag=True, default=False)
def cmd_validate(system_path, x_path, samples, seed, threads, is_report_path,
                 out_dir, normalize_timestamps):
    """Out-of-sample reliability validation of a fixed capacity vector."""
    started = _now(normalize_timestamps)
    try:
        system = load_system(system_path)
        ids, x = _read_x(x_path)
        if ids != system.unit_ids:
            raise ValidationError("x", "unit ids do not match the system")
        if not system.feasible(x):
            raise ValidationError("x", "capacity vector outside feasible set")
    except (OSError, ParseError, ValidationError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INPUT)
    try:
        report, traces = validate(system, x, samples, seed, threads=threads,
                                  collect_traces=True)
    except NumericalError as e:
        click.echo(f"numerical failure: {e}", err=True)
        sys.exit(EXIT_NUMERICAL)

    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    rep_path = os.path.join(out_dir, "report.json")
    report.to_json(rep_path)
    artifacts.append(rep_path)

    trace_path = os.path.join(out_dir, "shed_traces.csv")
    rows = []
    for i, trace in enumerate(traces):
        for row in trace:
            if row["shed"] > 0:
                rows.append([i, row["hour"], "%.12g" % row["load"],
                             "%.12g" % row["shed"]])
    _write_csv(trace_path, ["trace", "hour", "load", "shed"], rows)
    artifacts.append(trace_path)

    hod_path = os.path.join(out_dir, "shed_by_hour_of_day.csv")
    _write_csv(hod_path, ["hour_of_day", "shed_mwh"],
               [[h, "%.12g" % v]
                for h, v in enumerate(report.shed_by_hour_of_day)])
    artifacts.append(hod_path)

    if is_report_path:
        try:
            with open(is_report_path) as f:
                is_doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            click.echo(f"error: bad in-sample report: {e}", err=True)
            sys.exit(EXIT_INPUT)
        is_rep = ReliabilityReport.from_dict(is_doc)
        cmp_path = os.path.join(out_dir, "comparison.json")
        with open(cmp_path, "w") as f:
            json.dump(compare_is_oos(is_rep, report), f, indent=1)
        artifacts.append(cmp_path)

    write_manifest(out_dir, "validate", {"samples": samples},
                   [system_path, x_path], [seed], artifacts,
                   normalize_timestamps, started)


@main.command("report")
@click.option("--run", "run_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--normalize-timestamps", is_flag=True, default=False)
def cmd_report(run_dir, out_dir, normalize_timestamps):
    """Render plot-data CSVs and figures from a solve-run directory."""
    started = _now(normalize_timestamps)
    hist_path = os.path.join(run_dir, "history.csv")
    if not os.path.exists(hist_path):
        click.echo(f"error: missing history file {hist_path}", err=True)
        sys.exit(EXIT_INPUT)
    with open(hist_path) as f:
        hist = list(csv.DictReader(f))
    cfg_path = os.path.join(run_dir, "config.json")
    voll = 0.0
    system = None
    if os.path.exists(cfg_path):
        with open(cfg_path) as f:
            cfg = json.load(f)
        voll = float(cfg.get("voll", 0.0))
        try:
            system = load_system(cfg["system"])
        except (OSError, ParseError, ValidationError, KeyError):
            system = None

    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    ks = [int(h["k"]) for h in hist]
    gaps = [float(h["gap_rel"]) for h in hist]
    objs = [float(h["objective_incumbent"]) for h in hist]
    eue_costs = [voll * float(h["eue_incumbent"]) for h in hist]

    p = os.path.join(out_dir, "gap_history.csv")
    _write_csv(p, ["k", "gap_rel"], list(zip(ks, gaps)))
    artifacts.append(p)
    p = os.path.join(out_dir, "objective_history.csv")
    _write_csv(p, ["k", "objective_incumbent"], list(zip(ks, objs)))
    artifacts.append(p)
    p = os.path.join(out_dir, "eue_cost_history.csv")
    _write_csv(p, ["k", "eue_cost"], list(zip(ks, eue_costs)))
    artifacts.append(p)

    # capacity mix by class, cleared vs available
    mix_rows = []
    classes, cleared, avail = [], [], []
    x_path = os.path.join(run_dir, "x_star.csv")
    if system is not None and os.path.exists(x_path):
        _, x = _read_x(x_path)
        nG, nR = len(system.conventional), len(system.renewable)
        groups = {"conventional": slice(0, nG),
                  "renewable": slice(nG, nG + nR),
                  "storage": slice(nG + nR, system.n_units)}
        caps = system.capacity_upper()
        for name, sl in groups.items():
            classes.append(name)
            cleared.append(float(np.sum(x[sl])))
            avail.append(float(np.sum(caps[sl])))
            mix_rows.append([name, "%.12g" % cleared[-1], "%.12g" % avail[-1]])
    p = os.path.join(out_dir, "capacity_mix.csv")
    _write_csv(p, ["class", "cleared_mw", "available_mw"], mix_rows)
    artifacts.append(p)

    # shed histogram from validation traces, when present
    shed_rows = []
    totals = np.array([])
    by_hour = np.zeros(24)
    traces_path = os.path.join(run_dir, "shed_traces.csv")
    if os.path.exists(traces_path):
        with open(traces_path) as f:
            rows = list(csv.DictReader(f))
        per_trace: dict = {}
        for row in rows:
            by_hour[int(row["hour"]) % 24] += float(row["shed"])
            per_trace[row["trace"]] = per_trace.get(row["trace"], 0.0) \
                + float(row["shed"])
        totals = np.array(list(per_trace.values()))
    shed_rows = [[h, "%.12g" % v] for h, v in enumerate(by_hour)]
    p = os.path.join(out_dir, "shed_histogram.csv")
    _write_csv(p, ["hour_of_day", "shed_mwh"], shed_rows)
    artifacts.append(p)

    from . import plots
    figures = {
        "gap_history.png": lambda q: plots.plot_gap_history(ks, gaps, q),
        "objective_history.png":
            lambda q: plots.plot_objective_history(ks, objs, q),
        "eue_cost_history.png":
            lambda q: plots.plot_eue_cost_history(ks, eue_costs, q),
        "shed_histogram.png": lambda q: plots.plot_shed_histogram(
            np.arange(24), by_hour, totals, q),
    }
    if classes:
        figures["capacity_mix.png"] = lambda q: plots.plot_capacity_mix(
            classes, cleared, avail, q)
    for name, fn in figures.items():
        q = os.path.join(out_dir, name)
        fn(q)
        artifacts.append(q)

    write_manifest(out_dir, "report", {}, [hist_path], [], artifacts,
                   normalize_timestamps, started)


if __name__ == "__main__":
    main()
