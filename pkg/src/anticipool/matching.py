"""Stage assignment: candidate enumeration, exact set-partitioning solve,
idle-vehicle rebalancing.

The solver is an in-process branch and bound with fail-first branching, a
greedy incumbent, a penalty-weighted share lower bound, and a dominance
pre-filter that discards candidates beaten by a sub-trip plus rejections;
candidate costs may be negative (rewards, shortened plans), penalties never
are. Final objectives are math.fsum sums, so they are bit-comparable with an
exhaustive oracle.
"""

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .fleet import start_state
from .routing import best_route

# Minimum strict improvement (in cost units) for a rejection swap to count as
# dominating. Real gaps are far above fsum rounding, so filtering candidates
# at this margin preserves the exact optimum value bit for bit.
GAIN_DROP = 1e-9


class Assignment:
    __slots__ = ("chosen", "rejected", "objective")

    def __init__(self, chosen, rejected, objective):
        self.chosen = chosen        # indices into the candidate list
        self.rejected = rejected    # request ids, ascending
        self.objective = objective

    def __repr__(self):
        return (f"Assignment(chosen={len(self.chosen)} rejected={len(self.rejected)} "
                f"objective={self.objective:.4f})")


def _earliest_arrival(veh, node, net, now):
    start, lead = start_state(veh, net)
    return now + lead + net.travel_idx(start, node)


def prune_costly(singles, keep_fraction):
    """Per request, keep the cheapest ceil(keep_fraction * count) of its
    single-request candidates (by anticipatory value, ties by vehicle id).
    keep_fraction 1.0 keeps everything."""
    if keep_fraction >= 1.0:
        return list(singles)
    by_req = {}
    for m in singles:
        by_req.setdefault(m.trip[0], []).append(m)
    keep = set()
    for rid, group in sorted(by_req.items()):
        group.sort(key=lambda m: (m.value, m.vid))
        k = math.ceil(keep_fraction * len(group))
        for m in group[:k]:
            keep.add((m.vid, rid))
    return [m for m in singles if (m.vid, m.trip[0]) in keep]


def enumerate_candidates(vehicles, requests, now, net, cons, price,
                         rate_row=None, keep_fraction=1.0, max_trip=None,
                         baselines=None):
    """All (vehicle, trip) candidates with their best routes.

    Trips grow one request at a time; a trip is only attempted if every
    sub-trip one smaller is feasible for the same vehicle. Single-request
    candidates are pruned to the cheapest fraction per request before growth.
    """
    vehicles = sorted(vehicles, key=lambda v: v.vid)
    requests = sorted(requests, key=lambda r: r.rid)
    singles = []
    per_veh = {}
    for veh in vehicles:
        base = baselines[veh.vid] if baselines is not None else None
        cap = veh.capacity if max_trip is None else min(max_trip, veh.capacity)
        found = {}
        for r in requests:
            # no route reaches the origin sooner than the direct drive
            reach = _earliest_arrival(veh, r.origin, net, now)
            if reach - r.time > cons.max_wait + 1e-9:
                continue
            m = best_route(veh, [r], now, net, cons, price, rate_row, base)
            if m is not None:
                found[frozenset((r.rid,))] = m
                singles.append(m)
        per_veh[veh.vid] = (found, cap, base)

    singles = prune_costly(singles, keep_fraction)
    kept = {(m.vid, m.trip[0]) for m in singles}
    out = list(singles)
    req_by_id = {r.rid: r for r in requests}

    for veh in vehicles:
        found, cap, base = per_veh[veh.vid]
        levels = [{fs: m for fs, m in found.items()
                   if (veh.vid, next(iter(fs))) in kept}]
        size = 1
        while size < cap and levels[-1]:
            nxt = {}
            prev = levels[-1]
            all_feasible = set()
            for lv in levels:
                all_feasible.update(lv.keys())
            for fs in sorted(prev, key=lambda s: tuple(sorted(s))):
                top = max(fs)
                for m1 in levels[0]:
                    (rid,) = tuple(m1)
                    if rid <= top:
                        continue
                    trip_ids = fs | {rid}
                    if trip_ids in nxt:
                        continue
                    ok = all(trip_ids - {x} in all_feasible for x in trip_ids)
                    if not ok:
                        continue
                    trip = [req_by_id[x] for x in sorted(trip_ids)]
                    m = best_route(veh, trip, now, net, cons, price, rate_row, base)
                    if m is not None:
                        nxt[trip_ids] = m
            for fs in sorted(nxt, key=lambda s: tuple(sorted(s))):
                out.append(nxt[fs])
            levels.append(nxt)
            size += 1
    return out


def _canonical_objective(candidates, chosen, penalties, rejected):
    # the stage optimizes anticipatory values plus rejection penalties
    terms = [candidates[ci].value for ci in sorted(chosen)]
    terms += [penalties[rid] for rid in sorted(rejected)]
    return math.fsum(terms)


def solve_assignment(candidates, penalties):
    """Exact minimum of sum(chosen candidate values) + sum(rejection penalties)
    subject to: each request in exactly one chosen trip or rejected, each
    vehicle in at most one chosen candidate.

    `penalties`: request id -> rejection penalty. Returns an Assignment.
    """
    rids = sorted(penalties)
    pos = {rid: i for i, rid in enumerate(rids)}
    nreq = len(rids)

    # Dominance pre-filter. A candidate (v, T) loses to "pick a sub-trip S of
    # T on v and reject the rest" whenever value(S) + penalties(T\S) is below
    # value(T) by more than rounding; S = empty set is plain rejection. The
    # swap is feasible in any solution containing (v, T), so dominated
    # candidates appear in no optimum and the exact value is preserved. This
    # removes the fan of trips padded with low-penalty (artificial) requests
    # whose insertions cost more than their penalties.
    by_veh = {}
    for ci, m in enumerate(candidates):
        by_veh.setdefault(m.vid, {})[frozenset(m.trip)] = m.value
    gain = {}
    for ci, m in enumerate(candidates):
        g = m.value - sum(penalties[rid] for rid in m.trip)
        if g > GAIN_DROP:
            continue
        ids = sorted(m.trip)
        veh_trips = by_veh[m.vid]
        dominated = False
        for size in range(1, len(ids)):
            for sub in itertools.combinations(ids, size):
                sv = veh_trips.get(frozenset(sub))
                if sv is None:
                    continue
                dropped = sum(penalties[x] for x in ids if x not in sub)
                if sv + dropped < m.value - GAIN_DROP:
                    dominated = True
                    break
            if dominated:
                break
        if not dominated:
            gain[ci] = g
    by_req = [[] for _ in range(nreq)]
    for ci in gain:
        for rid in candidates[ci].trip:
            by_req[pos[rid]].append(ci)

    # Lower bound pieces. Each candidate's value decomposes exactly into a
    # nonnegative request part, split across the trip in proportion to the
    # members' rejection penalties (equal split covers the all-zero corner),
    # plus its negative part (reward surplus) charged to the vehicle. A
    # vehicle is chosen at most once, so its cheapest candidate bounds its
    # contribution once — charging rewards per request would double-count
    # them across trip members and across vehicles and go far too low.
    minshare = [math.inf] * nreq
    vterm = {}
    for ci in gain:
        m = candidates[ci]
        vpart = min(0.0, m.value)
        if vpart < vterm.get(m.vid, 0.0):
            vterm[m.vid] = vpart
        reqpart = m.value - vpart
        pens = [penalties[rid] for rid in m.trip]
        tot = sum(pens)
        for rid, p in zip(m.trip, pens):
            share = reqpart * (p / tot) if tot > 0.0 else reqpart / len(pens)
            i = pos[rid]
            if share < minshare[i]:
                minshare[i] = share
    lbr = [min(penalties[rids[i]], minshare[i]) for i in range(nreq)]

    # greedy incumbent: take candidates that beat rejecting their whole trip
    order = sorted(gain, key=lambda ci: (gain[ci], ci))
    g_status = [0] * nreq
    g_used = set()
    g_chosen = []
    for ci in order:
        if gain[ci] >= 0:
            break
        m = candidates[ci]
        if m.vid in g_used or any(g_status[pos[rid]] for rid in m.trip):
            continue
        g_used.add(m.vid)
        g_chosen.append(ci)
        for rid in m.trip:
            g_status[pos[rid]] = 1
    g_rejected = [rids[i] for i in range(nreq) if g_status[i] == 0]
    best_obj = _canonical_objective(candidates, g_chosen, penalties, g_rejected)
    best_sol = (list(g_chosen), g_rejected)

    status = [0] * nreq             # 0 undecided, 1 covered, 2 rejected
    used = set()
    chosen = []
    rest = math.fsum(lbr) + math.fsum(vterm.values())

    def dfs(n_left, acc):
        nonlocal best_obj, best_sol, rest
        if n_left == 0:
            rejected = [rids[k] for k in range(nreq) if status[k] == 2]
            obj = _canonical_objective(candidates, chosen, penalties, rejected)
            if obj < best_obj:
                best_obj = obj
                best_sol = (list(chosen), rejected)
            return
        # no margin: subtrees that can only tie the incumbent are pruned, so
        # exact-tie fans (e.g. one free insertion available on several
        # vehicles) cost one dive instead of an enumeration
        if acc + rest >= best_obj:
            return
        # fail-first: branch on the undecided request with the fewest live
        # candidates (ties to the lowest id); forced rejections surface first
        pivot = -1
        opts = None
        for i in range(nreq):
            if status[i]:
                continue
            o = [ci for ci in by_req[i]
                 if candidates[ci].vid not in used
                 and not any(status[pos[rid]] for rid in candidates[ci].trip)]
            if opts is None or len(o) < len(opts):
                pivot, opts = i, o
                if not o:
                    break
        opts.sort(key=lambda ci: (gain[ci], ci))
        for ci in opts:
            m = candidates[ci]
            covered = [pos[rid] for rid in m.trip]
            vt = vterm.get(m.vid, 0.0)
            for k in covered:
                status[k] = 1
                rest -= lbr[k]
            rest -= vt
            used.add(m.vid)
            chosen.append(ci)
            dfs(n_left - len(covered), acc + m.value)
            chosen.pop()
            used.discard(m.vid)
            rest += vt
            for k in covered:
                status[k] = 0
                rest += lbr[k]
        status[pivot] = 2
        rest -= lbr[pivot]
        dfs(n_left - 1, acc + penalties[rids[pivot]])
        status[pivot] = 0
        rest += lbr[pivot]

    dfs(nreq, 0.0)
    return Assignment(sorted(best_sol[0]), sorted(best_sol[1]), best_obj)


def export_program(candidates, penalties, fh):
    """Write the stage's set-partitioning instance as plain text."""
    for m in candidates:
        ids = " ".join(str(rid) for rid in m.trip)
        fh.write(f"CAND {m.vid} {m.value!r} {ids}\n")
    for rid in sorted(penalties):
        fh.write(f"REJ {rid} {penalties[rid]!r}\n")


def rebalance(idle_vehicles, rejected, net, now):
    """Send idle vehicles toward rejected-request origins: exact min-cost
    one-to-one matching on travel time, no feasibility constraints. Surplus
    vehicles stay put. Returns (vehicle, node, arrival_seconds) triples."""
    if not idle_vehicles or not rejected:
        return []
    vehicles = sorted(idle_vehicles, key=lambda v: v.vid)
    targets = sorted(rejected, key=lambda r: r.rid)
    cost = np.empty((len(vehicles), len(targets)))
    for i, veh in enumerate(vehicles):
        start, lead = start_state(veh, net)
        row = net.row(start)
        for j, r in enumerate(targets):
            cost[i, j] = lead + row[r.origin]
    rows, cols = linear_sum_assignment(cost)
    out = []
    for i, j in zip(rows.tolist(), cols.tolist()):
        out.append((vehicles[i], targets[j].origin, now + float(cost[i, j])))
    out.sort(key=lambda t: t[0].vid)
    return out
