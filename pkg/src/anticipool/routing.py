"""Single-vehicle routing: feasible stop orders, costs, anticipatory rewards.

Costs follow the stage objective: full waiting/detour terms for requests in
the evaluated trip, schedule-change deltas for requests the vehicle already
carries or has committed to, and the operator term for added driving time.
Prices are dollars per hour; times are seconds, so dollar values divide by
3600 once at the end. Cost terms are summed with math.fsum so equal routes
produce bit-equal costs regardless of enumeration order.

Invariant: a vehicle's plan always contains the dropoff of every onboard
request and both stops of every assigned request; `trip` is disjoint from
the assigned set.
"""

import math

from .fleet import PICKUP, DROPOFF, Stop, start_state, remaining_drive_seconds

EPS = 1e-9
# exhaustive stop-order search up to this many requests on one vehicle
EXHAUSTIVE_LIMIT = 4

LAST_NODE = "last_node"
IDLE_NODE = "idle_node"


class Constraints:
    __slots__ = ("max_wait", "max_delay", "fifo")

    def __init__(self, max_wait, max_delay, fifo=False):
        self.max_wait = float(max_wait)
        self.max_delay = float(max_delay)
        self.fifo = fifo


class CostParams:
    """Prices in $/h except `reject` in $ per rejected request."""

    __slots__ = ("wait", "ride", "operator", "reject", "theta", "reward_mode")

    def __init__(self, wait=4.64, ride=2.32, operator=3.48, reject=3.09,
                 theta=0.0, reward_mode=LAST_NODE):
        self.wait = float(wait)
        self.ride = float(ride)
        self.operator = float(operator)
        self.reject = float(reject)
        self.theta = float(theta)
        if reward_mode not in (LAST_NODE, IDLE_NODE):
            raise ValueError(f"unknown reward mode {reward_mode!r}")
        self.reward_mode = reward_mode


class RoutedMatch:
    """A vehicle, a trip it could serve, the best stop order found, its cost."""

    __slots__ = ("vid", "trip", "stops", "cost", "reward", "value")

    def __init__(self, vid, trip, stops, cost, reward, value):
        self.vid = vid
        self.trip = trip            # tuple of request ids, ascending
        self.stops = stops          # scheduled Stop list
        self.cost = cost            # stage cost (no reward)
        self.reward = reward
        self.value = value          # cost - theta * reward

    def __repr__(self):
        return (f"RoutedMatch(v{self.vid} trip={self.trip} cost={self.cost:.4f} "
                f"value={self.value:.4f})")


def plan_baseline(veh, net, now):
    """Previous-plan reference: scheduled pickup/dropoff times per request id
    and the remaining driving seconds of the plan as it stands (rebalance leg
    included)."""
    prev_pick, prev_drop = {}, {}
    for stop in veh.plan:
        if stop.request is None:
            continue
        if stop.kind == PICKUP:
            prev_pick[stop.request.rid] = stop.arrival
        elif stop.kind == DROPOFF:
            prev_drop[stop.request.rid] = stop.arrival
    return prev_pick, prev_drop, remaining_drive_seconds(veh, net, now)


def _stop_node(r, kind):
    return r.origin if kind == PICKUP else r.destination


def route_reward(order, rate_row, reward_mode, capacity, initial_load):
    """Rate at the route's last node, or at its idle node: the first stop
    after which the vehicle has free seats there and at every later stop.
    A route that never fills up yields its first stop."""
    if not order:
        return 0.0
    if reward_mode == LAST_NODE:
        r, kind = order[-1]
        return rate_row[_stop_node(r, kind)]
    load = initial_load
    free = []
    for r, kind in order:
        load = load + r.party if kind == PICKUP else load - r.party
        free.append(capacity - load)
    idle_at = len(order) - 1
    worst = free[-1]
    for k in range(len(order) - 1, -1, -1):
        worst = min(worst, free[k])
        if worst > 0:
            idle_at = k
    r, kind = order[idle_at]
    return rate_row[_stop_node(r, kind)]


def evaluate_order(veh, order, now, net, cons, price, trip_set, rate_row, baseline):
    """Walk a complete stop order; return (cost, reward, schedule) or None if
    any waiting, delay, or capacity bound fails.

    `order` is a list of (request, kind) pairs; `baseline` is plan_baseline
    output. A pickup ahead of its request time dwells until that time."""
    prev_pick, prev_drop, l_prev = baseline
    node, lead = start_state(veh, net)
    t = now + lead
    drive = lead
    load = veh.load()
    cap = veh.capacity
    pick_t, drop_t = {}, {}
    schedule = []
    onq = [r.rid for r in veh.onboard] if cons.fifo else None
    for r, kind in order:
        target = _stop_node(r, kind)
        hop = net.travel_idx(node, target)
        t += hop
        drive += hop
        arrival = t
        if kind == PICKUP:
            if t < r.time:
                t = r.time
            if t - r.time > cons.max_wait + EPS:
                return None
            load += r.party
            if load > cap:
                return None
            pick_t[r.rid] = t
            if cons.fifo:
                onq.append(r.rid)
        else:
            if (t - r.time) - r.direct_seconds > cons.max_delay + EPS:
                return None
            load -= r.party
            if cons.fifo:
                if onq and onq[0] != r.rid:
                    return None
                onq.pop(0)
            drop_t[r.rid] = t
        schedule.append((target, kind, r, arrival, t))
        node = target

    terms = []
    for r in sorted((r for r, k in order if k == PICKUP and r.rid in trip_set),
                    key=lambda r: r.rid):
        terms.append(price.wait * (pick_t[r.rid] - r.time))
        terms.append(price.ride * ((drop_t[r.rid] - pick_t[r.rid]) - r.direct_seconds))
    for r in sorted(veh.assigned, key=lambda r: r.rid):
        if r.rid in trip_set:
            continue
        terms.append(price.wait * (pick_t[r.rid] - prev_pick[r.rid]))
        terms.append(price.ride * ((drop_t[r.rid] - pick_t[r.rid])
                                   - (prev_drop[r.rid] - prev_pick[r.rid])))
    for r in sorted(veh.onboard, key=lambda r: r.rid):
        terms.append(price.ride * (drop_t[r.rid] - prev_drop[r.rid]))
    terms.append(price.operator * (drive - l_prev))
    cost = math.fsum(terms) / 3600.0

    reward = 0.0
    if rate_row is not None and price.theta > 0.0:
        reward = route_reward(order, rate_row, price.reward_mode, cap, veh.load())
    return cost, reward, schedule


def _order_key(order):
    return tuple((r.rid, 0 if kind == PICKUP else 1) for r, kind in order)


def _stops_from_schedule(schedule):
    return [Stop(node, kind, r, arrival, departure)
            for node, kind, r, arrival, departure in schedule]


def best_route(veh, trip, now, net, cons, price, rate_row=None, baseline=None):
    """Cheapest feasible stop order serving the vehicle's onboard and assigned
    requests plus `trip`. Exhaustive for small request counts, cheapest
    insertion beyond. Ties break toward the lexicographically smallest stop
    sequence by request id. Returns a RoutedMatch or None."""
    if baseline is None:
        baseline = plan_baseline(veh, net, now)
    trip = sorted(trip, key=lambda r: r.rid)
    trip_set = {r.rid for r in trip}
    total = len(veh.onboard) + len(veh.assigned) + len(trip)
    if total <= EXHAUSTIVE_LIMIT:
        found = _best_exhaustive(veh, trip, now, net, cons, price, trip_set,
                                 rate_row, baseline)
    else:
        found = _best_insertion(veh, trip, now, net, cons, price, trip_set,
                                rate_row, baseline)
    if found is None:
        return None
    order, cost, reward, schedule = found
    value = cost - price.theta * reward
    return RoutedMatch(veh.vid, tuple(sorted(trip_set)),
                       _stops_from_schedule(schedule), cost, reward, value)


def _best_exhaustive(veh, trip, now, net, cons, price, trip_set, rate_row, baseline):
    """Depth-first over stop orders with waiting/delay/capacity pruning; every
    surviving complete order goes through evaluate_order so cost logic lives
    in one place."""
    items = []
    for r in sorted(veh.onboard, key=lambda r: r.rid):
        items.append((r, False))            # already picked up
    for r in sorted(list(veh.assigned) + list(trip), key=lambda r: r.rid):
        items.append((r, True))
    n = len(items)
    picked = [not needs for _, needs in items]
    dropped = [False] * n
    start_node, lead = start_state(veh, net)
    cap = veh.capacity
    best = [None, math.inf, None]           # (order, cost, reward, schedule), value, key
    order = []

    def extend(node, t, load, onq):
        if all(dropped):
            got = evaluate_order(veh, order, now, net, cons, price, trip_set,
                                 rate_row, baseline)
            if got is None:
                return
            cost, reward, schedule = got
            value = cost - price.theta * reward
            key = _order_key(order)
            if best[0] is None or value < best[1] or \
                    (value == best[1] and key < best[2]):
                best[0] = (list(order), cost, reward, schedule)
                best[1] = value
                best[2] = key
            return
        for i in range(n):
            r, _ = items[i]
            if not picked[i]:
                if load + r.party > cap:
                    continue
                arrival = t + net.travel_idx(node, r.origin)
                tt = arrival if arrival >= r.time else r.time
                if tt - r.time > cons.max_wait + EPS:
                    continue
                picked[i] = True
                order.append((r, PICKUP))
                extend(r.origin, tt, load + r.party,
                       onq + [r.rid] if cons.fifo else onq)
                order.pop()
                picked[i] = False
            elif not dropped[i]:
                if cons.fifo and onq and onq[0] != r.rid:
                    continue
                arrival = t + net.travel_idx(node, r.destination)
                if (arrival - r.time) - r.direct_seconds > cons.max_delay + EPS:
                    continue
                dropped[i] = True
                order.append((r, DROPOFF))
                extend(r.destination, arrival, load - r.party,
                       onq[1:] if cons.fifo else onq)
                order.pop()
                dropped[i] = False

    extend(start_node, now + lead, veh.load(),
           [r.rid for r in veh.onboard] if cons.fifo else None)
    return best[0]


def _best_insertion(veh, trip, now, net, cons, price, trip_set, rate_row, baseline):
    """Cheapest insertion: keep the current service order, insert each new
    request's pickup/dropoff at the best feasible position pair (ties to the
    earliest positions)."""
    keep = {r.rid for r in veh.onboard} | {r.rid for r in veh.assigned
                                           if r.rid not in trip_set}
    order = [(s.request, s.kind) for s in veh.plan
             if s.request is not None and s.request.rid in keep]
    result = None
    if not trip:
        got = evaluate_order(veh, order, now, net, cons, price, trip_set,
                             rate_row, baseline)
        return None if got is None else (order, got[0], got[1], got[2])
    for r in sorted(trip, key=lambda r: r.rid):
        best = None
        for i in range(len(order) + 1):
            for j in range(i, len(order) + 1):
                cand = list(order)
                cand.insert(i, (r, PICKUP))
                cand.insert(j + 1, (r, DROPOFF))
                got = evaluate_order(veh, cand, now, net, cons, price, trip_set,
                                     rate_row, baseline)
                if got is None:
                    continue
                cost, reward, schedule = got
                value = cost - price.theta * reward
                if best is None or value < best[0] or \
                        (value == best[0] and (i, j) < best[1]):
                    best = (value, (i, j), cand, cost, reward, schedule)
        if best is None:
            return None
        order = best[2]
        result = (order, best[3], best[4], best[5])
    return result
