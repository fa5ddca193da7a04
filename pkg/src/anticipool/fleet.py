"""Vehicles, stop plans, and movement along the network.

A vehicle is either at a node or part-way along a directed edge. Plans are
stop sequences with scheduled times; movement always follows shortest paths
between consecutive stops, so executed times reproduce the schedule. There is
no dwell at stops except when a vehicle reaches the origin of a not-yet-valid
(future-time) request, where it waits without accumulating motion.
"""

from .demand import ONBOARD, COMPLETED

PICKUP = "pickup"
DROPOFF = "dropoff"
REBALANCE = "rebalance"


class Stop:
    __slots__ = ("node", "kind", "request", "arrival", "departure")

    def __init__(self, node, kind, request=None, arrival=None, departure=None):
        self.node = node
        self.kind = kind
        self.request = request
        self.arrival = arrival      # scheduled, absolute seconds
        self.departure = departure

    def copy(self):
        return Stop(self.node, self.kind, self.request, self.arrival, self.departure)

    def __repr__(self):
        rid = self.request.rid if self.request is not None else "-"
        return f"Stop({self.kind} r{rid} @n{self.node} t={self.arrival})"


class Vehicle:
    __slots__ = ("vid", "capacity", "node", "edge", "onboard", "assigned", "plan",
                 "motion_seconds", "_leg", "_leg_pos")

    def __init__(self, vid, capacity, node):
        self.vid = vid
        self.capacity = capacity
        self.node = node            # node index, or None when mid-edge
        self.edge = None            # (tail, head, seconds done) when mid-edge
        self.onboard = []           # requests, pickup order
        self.assigned = []          # accepted, not yet picked up
        self.plan = []              # list of Stop
        self.motion_seconds = 0.0
        self._leg = None            # node sequence currently being driven
        self._leg_pos = 0

    def load(self):
        return sum(r.party for r in self.onboard)

    def __repr__(self):
        where = f"n{self.node}" if self.node is not None else f"e{self.edge}"
        return (f"Vehicle(v{self.vid} {where} load={self.load()}/{self.capacity} "
                f"plan={len(self.plan)})")


def start_state(veh, net):
    """(node, lead seconds) from which new plans depart; mid-edge vehicles
    complete the current edge first."""
    if veh.edge is None:
        return veh.node, 0.0
    tail, head, done = veh.edge
    return head, net.edge_seconds[(tail, head)] - done


def set_plan(veh, stops):
    """Adopt a new stop sequence (schedule already filled in)."""
    veh.plan = stops
    veh._leg = None
    veh._leg_pos = 0


def schedule_stops(veh, stops, net, now):
    """Fill arrival/departure times for a stop order, departing from the
    vehicle's current position at `now`. Returns total driving seconds.

    Departure equals arrival except at the origin of a future-time request,
    where the vehicle waits until the request's time.
    """
    node, lead = start_state(veh, net)
    t = now + lead
    drive = lead
    for stop in stops:
        hop = net.travel_idx(node, stop.node)
        t += hop
        drive += hop
        stop.arrival = t
        if stop.kind == PICKUP and stop.request.time > t:
            t = stop.request.time
        stop.departure = t
        node = stop.node
    return drive


def remaining_drive_seconds(veh, net, now):
    """Driving time left in the current plan (dwell excluded), including the
    completion of a current edge. Zero for an empty plan at a node."""
    node, lead = start_state(veh, net)
    drive = lead if veh.plan or veh.edge is not None else 0.0
    for stop in veh.plan:
        drive += net.travel_idx(node, stop.node)
        node = stop.node
    return drive


def seats_free_profile(capacity, initial_load, stops):
    """Free seats after each stop, or None if capacity is ever exceeded."""
    load = initial_load
    out = []
    for stop in stops:
        if stop.kind == PICKUP:
            load += stop.request.party
        elif stop.kind == DROPOFF:
            load -= stop.request.party
        if load > capacity or load < 0:
            return None
        out.append(capacity - load)
    return out


def closest_node(veh, net):
    """The node nearest the vehicle's position (head wins an exact mid-edge tie)."""
    if veh.edge is None:
        return veh.node
    tail, head, done = veh.edge
    remain = net.edge_seconds[(tail, head)] - done
    return head if remain <= done else tail


def advance(veh, t0, t1, net, events):
    """Move the vehicle from t0 to t1, executing stops on the way.

    Events are appended as (time, kind, rid, vid, node) tuples. Pickups of
    future-time requests never execute before their request time; if the
    request is artificial they never execute at all (the vehicle dwells).
    """
    t = t0
    while True:
        if veh.edge is not None:
            tail, head, done = veh.edge
            remain = net.edge_seconds[(tail, head)] - done
            if t + remain <= t1:
                t += remain
                veh.motion_seconds += remain
                veh.node = head
                veh.edge = None
            else:
                veh.edge = (tail, head, done + (t1 - t))
                veh.motion_seconds += t1 - t
                return
            continue
        if not veh.plan:
            return
        stop = veh.plan[0]
        if veh.node == stop.node:
            if stop.kind == PICKUP:
                r = stop.request
                if r.artificial:
                    return  # dwell; stripped at stage end
                if r.time > t:
                    if r.time >= t1:
                        return  # dwell until the window closes
                    t = r.time
                r.set_status(ONBOARD)
                r.pickup_time = t
                r.vehicle = veh.vid
                veh.onboard.append(r)
                veh.assigned.remove(r)
                events.append((t, PICKUP, r.rid, veh.vid, veh.node))
            elif stop.kind == DROPOFF:
                r = stop.request
                r.set_status(COMPLETED)
                r.dropoff_time = t
                veh.onboard.remove(r)
                events.append((t, DROPOFF, r.rid, veh.vid, veh.node))
            else:
                events.append((t, REBALANCE, -1, veh.vid, veh.node))
            veh.plan.pop(0)
            veh._leg = None
            veh._leg_pos = 0
            continue
        if t >= t1:
            return
        # start (or continue) the leg toward the next stop
        if veh._leg is None or veh._leg_pos >= len(veh._leg) - 1:
            veh._leg = net.path_idx(veh.node, stop.node)
            veh._leg_pos = 0
        nxt = veh._leg[veh._leg_pos + 1]
        veh._leg_pos += 1
        veh.edge = (veh.node, nxt, 0.0)
        veh.node = None


def drop_requests(veh, gone, net, now):
    """Remove stops of departed requests; keep order, reschedule the rest.

    Returns True if the plan changed."""
    kept = [s for s in veh.plan if not (s.request is not None and s.request in gone)]
    if len(kept) == len(veh.plan):
        return False
    schedule_stops(veh, kept, net, now)
    set_plan(veh, kept)
    return True
