"""Receding-horizon simulation: stages of assignment, movement, measurement.

Each stage at tau_i = i * delta collects new requests plus reassignable ones
(every assigned, not-yet-picked-up request except the first pickup in each
vehicle's plan), enumerates candidates, solves the stage assignment exactly,
rebalances idle vehicles toward this stage's rejected origins (artificial
ones included, so idle vehicles drift toward anticipated demand), records
zone shares, then advances the fleet by delta and strips artificial stops.
After the last stage vehicles finish their plans so every request terminates.

Reports carry results only; the scenario echo goes to a separate config file
so runs that must coincide (e.g. rewards with theta 0 vs. plain) compare
byte-for-byte.
"""

import json
import math
import os

import numpy as np

from . import demand as dm
from .anticipatory import (ARTIFICIAL_ID_BASE, ArtificialConfig, make_artificial,
                           rolling_length_target, strip_artificial)
from .fleet import (DROPOFF, PICKUP, REBALANCE, Stop, advance, closest_node,
                    drop_requests, schedule_stops, set_plan)
from .matching import enumerate_candidates, rebalance, solve_assignment
from .network import cluster_zones, save_zones
from .rates import (basic_rates, origin_counts, historical_rates, pf_update,
                    to_node_field, zone_counts, zone_counts_from_origins,
                    ParticleFilterState, smooth_rates)
from .routing import Constraints, CostParams, plan_baseline

MODES = ("none", "rewards", "artificial", "both")
RATE_METHODS = ("basic", "smooth", "pf", "historical")
RATE_SOURCES = ("generation", "rejection")

AUDIT_TOL = 1e-6


class ConfigError(ValueError):
    """Inconsistent simulation configuration."""


class SimConfig:
    """Everything a run needs besides network, demand, and fleet."""

    def __init__(self, delta=60.0, period=3600.0, max_wait=420.0, max_delay=600.0,
                 price_wait=4.64, price_ride=2.32, price_operator=3.48,
                 price_reject=3.09, mode="none", theta=0.0,
                 reward_node="last_node", rate_method="basic",
                 rate_source="generation", psi=1.0, eta=100, sigma2=0.05,
                 m_artificial=50, phi=60.0, gamma=1.0, keep_fraction=None,
                 t_zone=150.0, fifo=False, max_trip=None, seed=0,
                 historical_dir=None):
        self.delta = float(delta)
        self.period = float(period)
        self.max_wait = float(max_wait)
        self.max_delay = float(max_delay)
        self.price_wait = float(price_wait)
        self.price_ride = float(price_ride)
        self.price_operator = float(price_operator)
        self.price_reject = float(price_reject)
        self.mode = mode
        self.theta = float(theta)
        self.reward_node = reward_node
        self.rate_method = rate_method
        self.rate_source = rate_source
        self.psi = float(psi)
        self.eta = int(eta)
        self.sigma2 = float(sigma2)
        self.m_artificial = int(m_artificial)
        self.phi = float(phi)
        self.gamma = float(gamma)
        self.keep_fraction = keep_fraction
        self.t_zone = float(t_zone)
        self.fifo = bool(fifo)
        self.max_trip = max_trip
        self.seed = int(seed)
        self.historical_dir = historical_dir
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.rate_method not in RATE_METHODS:
            raise ConfigError(f"unknown rate method {self.rate_method!r}")
        if self.rate_source not in RATE_SOURCES:
            raise ConfigError(f"unknown rate source {self.rate_source!r}")
        if self.delta <= 0 or self.period <= 0:
            raise ConfigError("delta and period must be positive")
        n = self.period / self.delta
        if abs(n - round(n)) > 1e-9:
            raise ConfigError("period must be an integer multiple of delta")
        if self.theta < 0:
            raise ConfigError("theta must be non-negative")
        if self.mode in ("artificial", "both"):
            if not (0.0 < self.gamma <= 1.0):
                raise ConfigError("gamma must be in (0, 1]")
            if self.m_artificial < 0 or self.phi <= 0:
                raise ConfigError("need m_artificial >= 0 and phi > 0")
        kf = self.effective_keep_fraction()
        if not (0.0 < kf <= 1.0):
            raise ConfigError("keep_fraction must be in (0, 1]")
        if self.max_wait < 0 or self.max_delay < 0:
            raise ConfigError("waiting/delay bounds must be non-negative")
        if self.rate_method == "historical" and self.historical_dir is None:
            raise ConfigError("historical rates need historical_dir")
        if self.eta < 1:
            raise ConfigError("eta must be at least 1")

    def effective_keep_fraction(self):
        if self.keep_fraction is not None:
            return float(self.keep_fraction)
        return 0.5 if self.mode in ("artificial", "both") else 1.0

    def n_stages(self):
        return int(round(self.period / self.delta))

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "delta", "period", "max_wait", "max_delay", "price_wait",
            "price_ride", "price_operator", "price_reject", "mode", "theta",
            "reward_node", "rate_method", "rate_source", "psi", "eta",
            "sigma2", "m_artificial", "phi", "gamma", "keep_fraction",
            "t_zone", "fifo", "max_trip", "seed", "historical_dir")}


class StageMetrics:
    __slots__ = ("stage", "tau", "new_requests", "assigned", "rejected",
                 "cum_rejected", "pickups", "dropoffs", "mean_wait",
                 "mean_detour", "vht_increment", "objective", "v_share",
                 "r_share", "mismatch")

    def csv_row(self):
        mz = self.mismatch
        return (f"{self.stage},{self.tau!r},{self.new_requests},{self.assigned},"
                f"{self.rejected},{self.cum_rejected},{self.pickups},"
                f"{self.dropoffs},{self.mean_wait!r},{self.mean_detour!r},"
                f"{self.vht_increment!r},{self.objective!r},"
                f"{float(np.mean(mz))!r},{float(np.median(mz))!r}")

    CSV_HEADER = ("stage,tau,new_requests,assigned,rejected,cum_rejected,"
                  "pickups,dropoffs,mean_wait,mean_detour,vht_increment,"
                  "objective,mz_mean,mz_median")


class RunReport:
    """Result summary; everything here must be reproducible byte-for-byte
    for a fixed (scenario, seed)."""

    def __init__(self):
        self.seed = 0
        self.n_requests = 0
        self.served = 0
        self.rejected = 0
        self.rejection_rate = 0.0
        self.vht_hours = 0.0
        self.mean_wait = 0.0
        self.mean_detour = 0.0
        self.aposteriori_cost = 0.0
        self.mz_final_mean = 0.0
        self.mz_final_median = 0.0
        self.cum_rejected = []
        self.violations = {"waiting": 0, "delay": 0, "capacity": 0}

    def to_dict(self):
        return {
            "seed": self.seed,
            "n_requests": self.n_requests,
            "served": self.served,
            "rejected": self.rejected,
            "rejection_rate": self.rejection_rate,
            "vht_hours": self.vht_hours,
            "mean_wait": self.mean_wait,
            "mean_detour": self.mean_detour,
            "aposteriori_cost": self.aposteriori_cost,
            "mz_final_mean": self.mz_final_mean,
            "mz_final_median": self.mz_final_median,
            "cum_rejected": self.cum_rejected,
            "violations": self.violations,
        }


class EngineError(RuntimeError):
    """An internal invariant failed during a run."""


class Simulation:
    def __init__(self, net, trace, vehicles, config, day_traces=None):
        self.net = net
        self.trace = trace
        self.vehicles = sorted(vehicles, key=lambda v: v.vid)
        if len({v.vid for v in self.vehicles}) != len(self.vehicles):
            raise ConfigError("duplicate vehicle ids")
        self.cfg = config
        self.zones = cluster_zones(net, config.t_zone)
        self.cons = Constraints(config.max_wait, config.max_delay, config.fifo)
        self.price = CostParams(config.price_wait, config.price_ride,
                                config.price_operator, config.price_reject,
                                config.theta, config.reward_node)
        self.day_traces = day_traces
        if config.rate_method == "historical" and day_traces is None:
            raise ConfigError("historical rates need day traces")
        seq = np.random.SeedSequence(config.seed)
        pf_seed, art_seed = seq.spawn(2)
        self._pf_rng = np.random.default_rng(pf_seed)
        self._art_rng = np.random.default_rng(art_seed)
        self._pf = {}                   # rate source -> ParticleFilterState
        self.events = []
        self.stages = []
        self._prev_rejected_origins = []
        self._finished = False
        # demand beyond the horizon never enters a stage
        self.requests = trace.up_to(config.period)
        self._rid_map = {r.rid: r for r in self.requests}

    # -- rate machinery ----------------------------------------------------

    def _needs_reward_field(self):
        return self.cfg.mode in ("rewards", "both") and self.cfg.theta > 0.0

    def _needs_artificial(self):
        return self.cfg.mode in ("artificial", "both") and self.cfg.m_artificial > 0

    def _rate_field(self, source, new_requests, tau):
        """Per-node rate field for the given source at stage time tau."""
        cfg = self.cfg
        if source == "generation":
            node_base = basic_rates(new_requests, self.net.n)
            zone_base = zone_counts(new_requests, self.zones)
        else:
            node_base = origin_counts(self._prev_rejected_origins, self.net.n)
            zone_base = zone_counts_from_origins(self._prev_rejected_origins,
                                                 self.zones)
        if cfg.rate_method == "basic":
            return node_base
        if cfg.rate_method == "smooth":
            return smooth_rates(node_base, self.net, cfg.psi)
        if cfg.rate_method == "pf":
            state = self._pf.get(source)
            if state is None:
                state = ParticleFilterState(self.zones.n, cfg.eta,
                                            float(zone_base.mean()),
                                            self._pf_rng)
                self._pf[source] = state
            zone_rates = pf_update(state, zone_base, cfg.sigma2)
            return to_node_field(zone_rates, self.zones)
        lo = tau - cfg.delta if tau > cfg.delta else -1.0
        zone_rates = historical_rates(self.day_traces, self.zones, lo, tau)
        return to_node_field(zone_rates, self.zones)

    # -- one stage ---------------------------------------------------------

    def step(self, i):
        cfg = self.cfg
        tau = i * cfg.delta
        # stage 1 also owns requests at exactly t=0
        lo = tau - cfg.delta if i > 1 else -1.0
        new_requests = self.trace.window(lo, tau)
        for r in new_requests:
            r.set_status(dm.WAITING)

        # previous-plan baselines, then pull reassignable requests
        baselines = {}
        pool = list(new_requests)
        for veh in self.vehicles:
            baselines[veh.vid] = plan_baseline(veh, self.net, tau)
            locked = None
            for stop in veh.plan:
                if stop.kind == PICKUP:
                    locked = stop.request
                    break
            loose = [r for r in veh.assigned if r is not locked]
            if loose:
                veh.assigned = [r for r in veh.assigned if r is locked]
                for r in loose:
                    r.set_status(dm.WAITING)
                pool.extend(loose)

        reward_field = None
        if self._needs_reward_field():
            reward_field = self._rate_field(cfg.rate_source, new_requests, tau)

        artificial = []
        if self._needs_artificial():
            gen_field = self._rate_field("generation", new_requests, tau) \
                if not (self._needs_reward_field()
                        and cfg.rate_source == "generation") else reward_field
            target = rolling_length_target(self.trace, tau)
            art_cfg = ArtificialConfig(cfg.m_artificial, cfg.phi, cfg.gamma)
            artificial = make_artificial(gen_field, self.net, tau, art_cfg,
                                         target, self._art_rng,
                                         ARTIFICIAL_ID_BASE + i * cfg.m_artificial)
        pool = sorted(pool + artificial, key=lambda r: r.rid)

        candidates = enumerate_candidates(
            self.vehicles, pool, tau, self.net, self.cons, self.price,
            rate_row=reward_field, keep_fraction=cfg.effective_keep_fraction(),
            max_trip=cfg.max_trip, baselines=baselines)
        penalties = {r.rid: (cfg.gamma * cfg.price_reject if r.artificial
                             else cfg.price_reject) for r in pool}
        assignment = solve_assignment(candidates, penalties)

        by_rid = {r.rid: r for r in pool}
        winners = {}
        for ci in assignment.chosen:
            winners[candidates[ci].vid] = candidates[ci]
        assigned_real = 0
        for veh in self.vehicles:
            m = winners.get(veh.vid)
            if m is None:
                continue
            for rid in m.trip:
                r = by_rid[rid]
                r.set_status(dm.ASSIGNED)
                veh.assigned.append(r)
                if not r.artificial:
                    assigned_real += 1
            veh.assigned.sort(key=lambda r: r.rid)
            set_plan(veh, [s.copy() for s in m.stops])

        rejected_now = []       # real rejections only: metrics and events
        rebalance_targets = []  # rejected origins incl. artificial ones, so
        # idle vehicles also drift toward anticipated demand; the artificial
        # requests take part in every step of the stage, rebalancing included
        for rid in assignment.rejected:
            r = by_rid[rid]
            r.set_status(dm.REJECTED)
            rebalance_targets.append(r)
            if not r.artificial:
                rejected_now.append(r)
                self.events.append((tau, "reject", r.rid, -1, r.origin))
        # losers: drop stops of departed requests, keep everything else
        for veh in self.vehicles:
            if veh.vid in winners:
                continue
            keep = set(veh.onboard) | set(veh.assigned)
            gone = {s.request for s in veh.plan
                    if s.request is not None and s.request not in keep}
            if gone:
                drop_requests(veh, gone, self.net, tau)

        idle = [v for v in self.vehicles if not v.onboard and not v.assigned]
        for veh, node, _eta in rebalance(idle, rebalance_targets, self.net, tau):
            stops = [Stop(node, REBALANCE)]
            schedule_stops(veh, stops, self.net, tau)
            set_plan(veh, stops)

        met = StageMetrics()
        met.stage = i
        met.tau = tau
        met.new_requests = len(new_requests)
        met.assigned = assigned_real
        met.rejected = len(rejected_now)
        met.objective = assignment.objective
        met.v_share, met.r_share, met.mismatch = self._zone_shares(new_requests)

        ev_start = len(self.events)
        vht_before = math.fsum(v.motion_seconds for v in self.vehicles)
        for veh in self.vehicles:
            advance(veh, tau, tau + cfg.delta, self.net, self.events)
        strip_artificial(self.vehicles, self.net, tau + cfg.delta)
        for r in artificial:
            if r.status == dm.ASSIGNED:
                r.set_status(dm.WAITING)
                r.set_status(dm.REJECTED)   # discarded, not counted anywhere

        met.vht_increment = math.fsum(v.motion_seconds
                                      for v in self.vehicles) - vht_before
        waits, detours = [], []
        met.pickups = met.dropoffs = 0
        for t, kind, rid, vid, node in self.events[ev_start:]:
            if kind == PICKUP:
                met.pickups += 1
                waits.append(self._rid_map[rid].waiting_seconds())
            elif kind == DROPOFF:
                met.dropoffs += 1
                detours.append(self._rid_map[rid].detour_seconds())
        met.mean_wait = math.fsum(waits) / len(waits) if waits else 0.0
        met.mean_detour = math.fsum(detours) / len(detours) if detours else 0.0
        prev_cum = self.stages[-1].cum_rejected if self.stages else 0
        met.cum_rejected = prev_cum + met.rejected
        self.stages.append(met)

        self._prev_rejected_origins = [r.origin for r in rejected_now]
        if any(not r.artificial and r.status == dm.WAITING for r in pool):
            raise EngineError("waiting requests left undecided after a stage")

    def _zone_shares(self, new_requests):
        nz = self.zones.n
        v = np.zeros(nz)
        for veh in self.vehicles:
            v[self.zones.zone_of[closest_node(veh, self.net)]] += 1.0
        v /= len(self.vehicles)
        r = np.zeros(nz)
        if new_requests:
            for req in new_requests:
                r[self.zones.zone_of[req.origin]] += 1.0
            r /= len(new_requests)
        m = np.abs(v - r)
        return v.tolist(), r.tolist(), m.tolist()

    # -- full run ----------------------------------------------------------

    def run(self):
        if self._finished:
            raise EngineError("simulation already ran")
        for i in range(1, self.cfg.n_stages() + 1):
            self.step(i)
        self._flush()
        self._finished = True
        return self._report()

    def _flush(self):
        """Finish every plan after the horizon: artificial stops are already
        gone, rebalance legs are cancelled, service runs to completion. The
        last stage's movement ended one delta past the horizon."""
        t_end = self.cfg.period + self.cfg.delta
        for veh in self.vehicles:
            if any(s.kind == REBALANCE for s in veh.plan):
                kept = [s for s in veh.plan if s.kind != REBALANCE]
                schedule_stops(veh, kept, self.net, t_end)
                set_plan(veh, kept)
        for veh in self.vehicles:
            advance(veh, t_end, math.inf, self.net, self.events)
            if veh.plan or veh.onboard or veh.assigned:
                raise EngineError(f"vehicle {veh.vid} could not finish its plan")

    def _report(self):
        rep = RunReport()
        rep.seed = self.cfg.seed
        served, rejected = [], []
        for r in self.requests:
            if r.status == dm.COMPLETED:
                served.append(r)
            elif r.status == dm.REJECTED:
                rejected.append(r)
            else:
                raise EngineError(f"request {r.rid} ended {r.status}")
        rep.n_requests = len(self.requests)
        rep.served = len(served)
        rep.rejected = len(rejected)
        rep.rejection_rate = (len(rejected) / rep.n_requests
                              if rep.n_requests else 0.0)
        total_motion = math.fsum(v.motion_seconds for v in self.vehicles)
        rep.vht_hours = total_motion / 3600.0
        rep.mean_wait = (math.fsum(r.waiting_seconds() for r in served)
                         / len(served) if served else 0.0)
        rep.mean_detour = (math.fsum(r.detour_seconds() for r in served)
                           / len(served) if served else 0.0)
        user_terms = []
        for r in sorted(served, key=lambda r: r.rid):
            user_terms.append(self.price.wait * r.waiting_seconds())
            user_terms.append(self.price.ride * r.detour_seconds())
        rep.aposteriori_cost = (math.fsum(user_terms) / 3600.0
                                + self.price.reject * len(rejected)
                                + self.price.operator * total_motion / 3600.0)
        if self.stages:
            last = self.stages[-1].mismatch
            rep.mz_final_mean = float(np.mean(last))
            rep.mz_final_median = float(np.median(last))
        rep.cum_rejected = [m.cum_rejected for m in self.stages]
        rep.violations = self._audit(served)
        return rep

    def _audit(self, served):
        out = {"waiting": 0, "delay": 0, "capacity": 0}
        for r in served:
            if r.waiting_seconds() > self.cfg.max_wait + AUDIT_TOL:
                out["waiting"] += 1
            delay = r.waiting_seconds() + r.detour_seconds()
            if delay > self.cfg.max_delay + AUDIT_TOL:
                out["delay"] += 1
        load = {v.vid: 0 for v in self.vehicles}
        cap = {v.vid: v.capacity for v in self.vehicles}
        for t, kind, rid, vid, node in sorted(self.events,
                                              key=lambda e: (e[0], e[3])):
            if kind == PICKUP:
                load[vid] += self._rid_map[rid].party
                if load[vid] > cap[vid]:
                    out["capacity"] += 1
            elif kind == DROPOFF:
                load[vid] -= self._rid_map[rid].party
        return out

    # -- outputs -----------------------------------------------------------

    def write_outputs(self, outdir, report):
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "report.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(outdir, "config.json"), "w") as fh:
            json.dump(self.cfg.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(outdir, "stages.csv"), "w") as fh:
            fh.write(StageMetrics.CSV_HEADER + "\n")
            for met in self.stages:
                fh.write(met.csv_row() + "\n")
        with open(os.path.join(outdir, "zones.csv"), "w") as fh:
            fh.write("zone_id,center_node,v_share,r_share,mismatch\n")
            if self.stages:
                last = self.stages[-1]
                for z in range(self.zones.n):
                    fh.write(f"{z},{self.net.ids[self.zones.centers[z]]},"
                             f"{last.v_share[z]!r},{last.r_share[z]!r},"
                             f"{last.mismatch[z]!r}\n")
        with open(os.path.join(outdir, "zones_nodes.csv"), "w") as fh:
            save_zones(self.net, self.zones, fh)
        with open(os.path.join(outdir, "events.log"), "w") as fh:
            # stable by (time, vehicle): execution order survives within ties
            for t, kind, rid, vid, node in sorted(self.events,
                                                  key=lambda e: (e[0], e[3])):
                fh.write(f"{t:.3f} {kind} {rid} {vid} {self.net.ids[node]}\n")


def run_simulation(net, trace, vehicles, config, outdir=None, day_traces=None):
    sim = Simulation(net, trace, vehicles, config, day_traces=day_traces)
    report = sim.run()
    if outdir is not None:
        sim.write_outputs(outdir, report)
    return sim, report
