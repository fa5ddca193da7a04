"""Command-line interface: run scenario sweeps, compare runs, export zones,
validate scenario files.

Scenario files are INI text (see README for the grammar). A run sweeps the
cross product of theta values, gamma values, and seeds; each cell writes its
own output directory and one row into sweep.csv. Cells are independent, so
they can run in parallel: set ANTICIPOOL_WORKERS to the process count
(default 1).
"""

import argparse
import configparser
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import synthetic
from .demand import TraceError, generate_synthetic, load_historical, load_trace
from .engine import ConfigError, SimConfig, run_simulation
from .network import NetworkError, cluster_zones, load_network, save_zones

WORKERS_ENV = "ANTICIPOOL_WORKERS"

SWEEP_HEADER = ["mode", "theta", "gamma", "seed", "requests", "rejected",
                "rejection_rate", "vht_hours", "mean_wait", "mean_detour",
                "aposteriori_cost", "mz_final_mean"]


class ScenarioError(ValueError):
    """Unusable scenario file."""


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text):
    return [int(x) for x in text.replace(",", " ").split()]


def load_scenario(path):
    """Parse and sanity-check a scenario file into a plain dict."""
    if not os.path.exists(path):
        raise ScenarioError(f"scenario file not found: {path}")
    ini = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        ini.read(path)
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None

    if "paths" not in ini or "network" not in ini["paths"]:
        raise ScenarioError(f"{path}: [paths] needs a network entry")
    base = os.path.dirname(os.path.abspath(path))

    def respath(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    sc = {"network": respath(ini["paths"]["network"]),
          "trace": None, "historical": None,
          "output": respath(ini["paths"].get("output", "runs"))}
    if "trace" in ini["paths"]:
        sc["trace"] = respath(ini["paths"]["trace"])
    if "historical" in ini["paths"]:
        sc["historical"] = respath(ini["paths"]["historical"])

    if not os.path.exists(sc["network"]):
        raise ScenarioError(f"network file not found: {sc['network']}")
    if sc["trace"] is not None and not os.path.exists(sc["trace"]):
        raise ScenarioError(f"trace file not found: {sc['trace']}")
    if sc["historical"] is not None and not os.path.isdir(sc["historical"]):
        raise ScenarioError(f"historical directory not found: {sc['historical']}")

    dem = ini["demand"] if "demand" in ini else {}
    sc["demand"] = dict(dem)
    if sc["trace"] is None and not sc["demand"]:
        raise ScenarioError(f"{path}: need [paths] trace or a [demand] profile")

    if "fleet" not in ini:
        raise ScenarioError(f"{path}: missing [fleet] section")
    fleet = ini["fleet"]
    sc["fleet_count"] = fleet.getint("count")
    sc["fleet_capacity"] = fleet.getint("capacity", 3)
    sc["fleet_nodes"] = (_ints(fleet["placement"])
                         if fleet.get("placement", "uniform") != "uniform" else None)
    sc["placement_seed"] = (fleet.getint("placement_seed")
                            if "placement_seed" in fleet else None)
    if sc["fleet_count"] is None or sc["fleet_count"] < 1:
        raise ScenarioError(f"{path}: fleet count must be >= 1")

    sim = ini["sim"] if "sim" in ini else {}
    costs = ini["costs"] if "costs" in ini else {}
    kw = {}
    for key in ("delta", "period", "max_wait", "max_delay", "theta", "psi",
                "sigma2", "phi", "gamma", "t_zone"):
        if key in sim:
            kw[key] = float(sim[key])
    for key in ("eta", "m_artificial"):
        if key in sim:
            kw[key] = int(sim[key])
    for key in ("mode", "reward_node", "rate_method", "rate_source"):
        if key in sim:
            kw[key] = sim[key]
    if "keep_fraction" in sim and sim["keep_fraction"]:
        kw["keep_fraction"] = float(sim["keep_fraction"])
    if "max_trip" in sim and sim["max_trip"]:
        kw["max_trip"] = int(sim["max_trip"])
    if "fifo" in sim:
        kw["fifo"] = sim.getboolean("fifo") if hasattr(sim, "getboolean") \
            else sim["fifo"].lower() in ("1", "true", "yes")
    for key in ("wait", "ride", "operator", "reject"):
        if key in costs:
            kw[f"price_{key}"] = float(costs[key])
    if sc["historical"] is not None:
        kw["historical_dir"] = sc["historical"]
    sc["sim"] = kw

    sweep = ini["sweep"] if "sweep" in ini else {}
    sc["thetas"] = _floats(sweep["theta"]) if "theta" in sweep else None
    sc["gammas"] = _floats(sweep["gamma"]) if "gamma" in sweep else None
    sc["seeds"] = _ints(sweep["seeds"]) if "seeds" in sweep else [0]
    if not sc["seeds"]:
        raise ScenarioError(f"{path}: empty seeds list")
    return sc


def _build_trace(sc, net, seed):
    if sc["trace"] is not None:
        return load_trace(sc["trace"], net)
    dem = sc["demand"]
    kind = dem.get("profile")
    period = float(dem.get("period", sc["sim"].get("period", 3600.0)))
    count = int(dem.get("count", 0))
    if kind == "two_district":
        profile = synthetic.two_district_profile(
            count, period,
            origin_split=float(dem.get("origin_split", 0.75)),
            dest_split=float(dem.get("dest_split", 0.5)))
    elif kind == "circular":
        profile = synthetic.circular_profile(
            count, period, n_boundary=int(dem.get("n_boundary", 24)))
    else:
        raise ScenarioError(f"unknown demand profile {kind!r}")
    return generate_synthetic(net, profile, seed)


def run_cell(scenario_path, theta, gamma, seed):
    """Execute one sweep cell; returns the sweep.csv row. Used by workers."""
    sc = load_scenario(scenario_path)
    net = load_network(sc["network"])
    trace = _build_trace(sc, net, seed)
    kw = dict(sc["sim"])
    if theta is not None:
        kw["theta"] = theta
    if gamma is not None:
        kw["gamma"] = gamma
    kw["seed"] = seed
    cfg = SimConfig(**kw)
    place_seed = sc["placement_seed"] if sc["placement_seed"] is not None else seed
    vehicles = synthetic.place_fleet(net, sc["fleet_count"], sc["fleet_capacity"],
                                     place_seed, nodes=sc["fleet_nodes"])
    days = None
    if cfg.rate_method == "historical":
        days = load_historical(sc["historical"], net)
    cell = f"t{theta if theta is not None else cfg.theta:g}" \
           f"_g{gamma if gamma is not None else cfg.gamma:g}_s{seed}"
    outdir = os.path.join(sc["output"], cell)
    _, report = run_simulation(net, trace, vehicles, cfg, outdir=outdir,
                               day_traces=days)
    return [cfg.mode, repr(cfg.theta), repr(cfg.gamma), seed,
            report.n_requests, report.rejected, repr(report.rejection_rate),
            repr(report.vht_hours), repr(report.mean_wait),
            repr(report.mean_detour), repr(report.aposteriori_cost),
            repr(report.mz_final_mean)]


def cmd_run(args):
    sc = load_scenario(args.scenario)
    thetas = sc["thetas"] if sc["thetas"] is not None else [None]
    gammas = sc["gammas"] if sc["gammas"] is not None else [None]
    cells = [(args.scenario, th, gm, sd)
             for th in thetas for gm in gammas for sd in sc["seeds"]]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    rows, failures = [], 0
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, *cell) for cell in cells]
            for cell, fut in zip(cells, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:   # keep the rest of the sweep alive
                    failures += 1
                    print(f"cell {cell[1:]} failed: {exc}", file=sys.stderr)
    else:
        for cell in cells:
            try:
                rows.append(run_cell(*cell))
            except Exception as exc:
                failures += 1
                print(f"cell {cell[1:]} failed: {exc}", file=sys.stderr)
    os.makedirs(sc["output"], exist_ok=True)
    sweep_path = os.path.join(sc["output"], "sweep.csv")
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        writer.writerows(rows)
    print(f"{len(rows)} cells -> {sweep_path}")
    return 1 if failures else 0


def cmd_zones(args):
    net = load_network(args.network)
    zones = cluster_zones(net, args.t_max)
    if args.out:
        with open(args.out, "w") as fh:
            save_zones(net, zones, fh)
    else:
        save_zones(net, zones, sys.stdout)
    print(f"{zones.n} zones", file=sys.stderr)
    return 0


def cmd_validate(args):
    sc = load_scenario(args.scenario)
    net = load_network(sc["network"])
    if sc["trace"] is not None:
        trace = load_trace(sc["trace"], net)
        n = len(trace)
    else:
        n = int(sc["demand"].get("count", 0))
    kw = dict(sc["sim"])
    kw.setdefault("theta", (sc["thetas"] or [0.0])[0])
    if sc["gammas"]:
        kw["gamma"] = sc["gammas"][0]
    SimConfig(**kw)
    if sc["fleet_nodes"] is not None:
        for nid in sc["fleet_nodes"]:
            if nid not in net.index:
                raise ScenarioError(f"fleet placement references unknown node {nid}")
    print(f"OK: {net.n} nodes, {n} requests, fleet {sc['fleet_count']}")
    return 0


def _read_zone_rows(rundir):
    path = os.path.join(rundir, "zones.csv")
    if not os.path.exists(path):
        raise ScenarioError(f"not a run directory (no zones.csv): {rundir}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_compare(args):
    rows_a = _read_zone_rows(args.run_a)
    rows_b = _read_zone_rows(args.run_b)
    key_a = [(r["zone_id"], r["center_node"]) for r in rows_a]
    key_b = [(r["zone_id"], r["center_node"]) for r in rows_b]
    if key_a != key_b:
        raise ScenarioError("zone partitions differ; runs are not comparable")
    print("zone_id,center_node,mismatch_a,mismatch_b,delta")
    for ra, rb in zip(rows_a, rows_b):
        da, db = float(ra["mismatch"]), float(rb["mismatch"])
        print(f"{ra['zone_id']},{ra['center_node']},{da!r},{db!r},{db - da!r}")
    with open(os.path.join(args.run_a, "report.json")) as fh:
        rep_a = json.load(fh)
    with open(os.path.join(args.run_b, "report.json")) as fh:
        rep_b = json.load(fh)
    for key in ("rejection_rate", "vht_hours", "mean_wait", "mean_detour",
                "mz_final_mean", "aposteriori_cost"):
        print(f"# {key}: {rep_a[key]!r} -> {rep_b[key]!r} "
              f"(delta {rep_b[key] - rep_a[key]!r})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="anticipool",
                                description="anticipatory ridepooling simulator")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("run", help="run a scenario sweep")
    q.add_argument("scenario")
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("zones", help="cluster a network into zones, print CSV")
    q.add_argument("network")
    q.add_argument("t_max", type=float)
    q.add_argument("--out")
    q.set_defaults(func=cmd_zones)

    q = sub.add_parser("validate", help="check a scenario file")
    q.add_argument("scenario")
    q.set_defaults(func=cmd_validate)

    q = sub.add_parser("compare", help="compare two run directories")
    q.add_argument("run_a")
    q.add_argument("run_b")
    q.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ConfigError, NetworkError, TraceError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
