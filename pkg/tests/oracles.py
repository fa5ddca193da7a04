"""Independent reference implementations used by the test suites.

Everything here recomputes results with a different mechanism than the
package: permutations instead of depth-first search, subset masks instead of
branch and bound. Costs use math.fsum over differently-ordered term lists,
which is order-independent and exactly rounded, so agreements can be asserted
with tolerance zero."""

import itertools
import math

from anticipool.fleet import DROPOFF, PICKUP, start_state

EPS = 1e-9


def oracle_walk(veh, order, now, net, cons):
    """Feasibility walk over a stop order; (pick, drop, drive) or None."""
    node, lead = start_state(veh, net)
    t = now + lead
    drive = lead
    load = sum(r.party for r in veh.onboard)
    queue = [r.rid for r in veh.onboard]
    pick, drop = {}, {}
    for r, kind in order:
        target = r.origin if kind == PICKUP else r.destination
        hop = net.travel_idx(node, target)
        t += hop
        drive += hop
        node = target
        if kind == PICKUP:
            t = max(t, r.time)
            if t - r.time > cons.max_wait + EPS:
                return None
            load += r.party
            if load > veh.capacity:
                return None
            queue.append(r.rid)
            pick[r.rid] = t
        else:
            if (t - r.time) - r.direct_seconds > cons.max_delay + EPS:
                return None
            if cons.fifo and queue[0] != r.rid:
                return None
            load -= r.party
            queue.remove(r.rid)
            drop[r.rid] = t
    return pick, drop, drive


def oracle_cost(veh, order, now, net, cons, price, trip_set, baseline):
    """Stage cost of one stop order, or None if infeasible."""
    walked = oracle_walk(veh, order, now, net, cons)
    if walked is None:
        return None
    pick, drop, drive = walked
    prev_pick, prev_drop, l_prev = baseline
    # terms deliberately gathered in a different order than the implementation;
    # fsum keeps ties exact either way
    terms = [price.operator * (drive - l_prev)]
    for r in veh.onboard:
        terms.append(price.ride * (drop[r.rid] - prev_drop[r.rid]))
    for r, kind in reversed(order):
        if kind != PICKUP:
            continue
        if r.rid in trip_set:
            terms.append(price.wait * (pick[r.rid] - r.time))
            terms.append(price.ride * ((drop[r.rid] - pick[r.rid]) - r.direct_seconds))
        else:
            terms.append(price.wait * (pick[r.rid] - prev_pick[r.rid]))
            terms.append(price.ride * ((drop[r.rid] - pick[r.rid])
                                       - (prev_drop[r.rid] - prev_pick[r.rid])))
    return math.fsum(terms) / 3600.0


def oracle_best(veh, trip, now, net, cons, price, baseline=None):
    """(cost, order key) of the cheapest valid interleaving, or None."""
    if baseline is None:
        from anticipool.routing import plan_baseline
        baseline = plan_baseline(veh, net, now)
    trip_set = {r.rid for r in trip}
    tokens = [(r, DROPOFF) for r in veh.onboard]
    for r in list(veh.assigned) + list(trip):
        tokens.append((r, PICKUP))
        tokens.append((r, DROPOFF))
    best = None
    for perm in itertools.permutations(tokens):
        seen = set()
        ok = True
        for r, kind in perm:
            if kind == PICKUP:
                seen.add(r.rid)
            elif (r.rid not in seen) and r not in veh.onboard:
                ok = False
                break
        if not ok:
            continue
        cost = oracle_cost(veh, perm, now, net, cons, price, trip_set, baseline)
        if cost is None:
            continue
        key = tuple((r.rid, 0 if k == PICKUP else 1) for r, k in perm)
        if best is None or (cost, key) < best:
            best = (cost, key)
    return best


def oracle_assignment(candidates, penalties):
    """Exact set-partition optimum by depth-first search over vehicles.

    Returns (objective, chosen index sets attaining it). The objective uses
    the same canonical fsum form as the solver, so a correct solver matches
    with tolerance zero."""
    by_vid = {}
    for ci, m in enumerate(candidates):
        by_vid.setdefault(m.vid, []).append(ci)
    vids = sorted(by_vid)
    rids = sorted(penalties)
    best = [math.inf, []]

    def canonical(chosen):
        covered = {rid for ci in chosen for rid in candidates[ci].trip}
        terms = [candidates[ci].value for ci in sorted(chosen)]
        terms += [penalties[rid] for rid in rids if rid not in covered]
        return math.fsum(terms)

    def walk(k, chosen, covered):
        if k == len(vids):
            obj = canonical(chosen)
            if obj < best[0] - 1e-15:
                best[0] = obj
                best[1] = [set(chosen)]
            elif obj <= best[0] + 1e-15:
                best[1].append(set(chosen))
            return
        walk(k + 1, chosen, covered)            # vehicle sits out
        for ci in by_vid[vids[k]]:
            trip = candidates[ci].trip
            if covered & set(trip):
                continue
            chosen.append(ci)
            walk(k + 1, chosen, covered | set(trip))
            chosen.pop()

    walk(0, [], set())
    return best[0], best[1]
