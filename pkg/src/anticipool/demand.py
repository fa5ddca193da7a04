"""Requests, demand traces, and synthetic demand generation."""

import csv
import os
from bisect import bisect_left, bisect_right

import numpy as np

EMERGED = "emerged"
WAITING = "waiting_assignment"
ASSIGNED = "assigned"
ONBOARD = "onboard"
COMPLETED = "completed"
REJECTED = "rejected"

_TRANSITIONS = {
    EMERGED: {WAITING},
    WAITING: {ASSIGNED, REJECTED},
    ASSIGNED: {WAITING, ONBOARD, REJECTED},
    ONBOARD: {COMPLETED},
    COMPLETED: set(),
    REJECTED: set(),
}

TRACE_HEADER = ["time_s", "origin", "destination", "party"]


class TraceError(ValueError):
    """Malformed demand trace input."""


class Request:
    """One travel request. Node fields are internal indices.

    `direct_seconds` caches the origin->destination shortest time; waiting is
    measured from `time`, detour and delay against `direct_seconds`.
    """

    __slots__ = ("rid", "origin", "destination", "time", "party", "status",
                 "artificial", "vehicle", "pickup_time", "dropoff_time",
                 "direct_seconds")

    def __init__(self, rid, origin, destination, time, party, direct_seconds,
                 artificial=False):
        self.rid = rid
        self.origin = origin
        self.destination = destination
        self.time = float(time)
        self.party = int(party)
        self.direct_seconds = float(direct_seconds)
        self.artificial = artificial
        self.status = EMERGED
        self.vehicle = None
        self.pickup_time = None
        self.dropoff_time = None

    def set_status(self, new):
        if new not in _TRANSITIONS[self.status]:
            raise ValueError(f"request {self.rid}: bad transition {self.status} -> {new}")
        if self.artificial and new in (ONBOARD, COMPLETED):
            raise ValueError(f"artificial request {self.rid} cannot become {new}")
        self.status = new

    def waiting_seconds(self):
        return self.pickup_time - self.time

    def detour_seconds(self):
        return (self.dropoff_time - self.pickup_time) - self.direct_seconds

    def __repr__(self):
        tag = "a" if self.artificial else "r"
        return (f"Request({tag}{self.rid} {self.origin}->{self.destination} "
                f"t={self.time:g} {self.status})")


class DemandTrace:
    """Requests sorted by emergence time, with window slicing."""

    def __init__(self, requests):
        self.requests = sorted(requests, key=lambda r: (r.time, r.rid))
        self._times = [r.time for r in self.requests]

    def __len__(self):
        return len(self.requests)

    def window(self, t0, t1):
        """Requests with t0 < time <= t1."""
        lo = bisect_right(self._times, t0)
        hi = bisect_right(self._times, t1)
        return self.requests[lo:hi]

    def up_to(self, t1):
        return self.requests[:bisect_right(self._times, t1)]

    def after(self, t0):
        return self.requests[bisect_left(self._times, t0):]

    def mean_direct_seconds(self):
        if not self.requests:
            return None
        return sum(r.direct_seconds for r in self.requests) / len(self.requests)


def load_trace(path, net):
    """Read a `time_s,origin,destination,party` CSV; node ids must exist,
    origin != destination, party >= 1. Request ids follow time order."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise TraceError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                t = float(row[0])
                o, d, party = int(row[1]), int(row[2]), int(row[3])
            except ValueError:
                raise TraceError(f"{path}:{lineno}: non-numeric field") from None
            if t < 0:
                raise TraceError(f"{path}:{lineno}: negative request time")
            if party < 1:
                raise TraceError(f"{path}:{lineno}: party must be >= 1")
            if o == d:
                raise TraceError(f"{path}:{lineno}: origin equals destination")
            if o not in net.index or d not in net.index:
                raise TraceError(f"{path}:{lineno}: unknown node id")
            rows.append((t, net.index[o], net.index[d], party))
    rows.sort(key=lambda r: r[0])  # stable: equal times keep file order
    requests = [Request(rid, o, d, t, party, net.travel_idx(o, d))
                for rid, (t, o, d, party) in enumerate(rows)]
    return DemandTrace(requests)


def save_trace(net, requests, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for r in sorted(requests, key=lambda r: (r.time, r.rid)):
            writer.writerow([f"{r.time:g}", net.ids[r.origin], net.ids[r.destination],
                             r.party])


def load_historical(directory, net):
    """Load one trace per day: every *.csv file in the directory, sorted by name."""
    days = []
    names = sorted(f for f in os.listdir(directory) if f.endswith(".csv"))
    if not names:
        raise TraceError(f"{directory}: no .csv day files")
    for name in names:
        days.append(load_trace(os.path.join(directory, name), net))
    return days


class DemandProfile:
    """Synthetic demand: per-node origin/destination weights, count, period."""

    def __init__(self, origin_weights, dest_weights, count, period, party=1):
        self.origin_weights = np.asarray(origin_weights, dtype=float)
        self.dest_weights = np.asarray(dest_weights, dtype=float)
        self.count = int(count)
        self.period = float(period)
        self.party = int(party)
        for w in (self.origin_weights, self.dest_weights):
            if (w < 0).any() or w.sum() <= 0:
                raise TraceError("profile weights must be non-negative with positive sum")
        if self.count < 0 or self.period <= 0:
            raise TraceError("profile needs count >= 0 and period > 0")


def generate_synthetic(net, profile, seed):
    """Sample a trace: times uniform integers in [0, period), origins and
    destinations independent draws from the profile (destination resampled
    while it collides with the origin)."""
    rng = np.random.default_rng(seed)
    n = net.n
    if len(profile.origin_weights) != n or len(profile.dest_weights) != n:
        raise TraceError("profile weight length does not match network size")
    ow = profile.origin_weights / profile.origin_weights.sum()
    dw = profile.dest_weights / profile.dest_weights.sum()
    rows = []
    for _ in range(profile.count):
        t = float(rng.integers(0, int(profile.period)))
        o = int(rng.choice(n, p=ow))
        d = int(rng.choice(n, p=dw))
        tries = 0
        while d == o:
            d = int(rng.choice(n, p=dw))
            tries += 1
            if tries > 1000:
                raise TraceError("destination weights leave no alternative to origin")
        rows.append((t, o, d))
    rows.sort(key=lambda r: r[0])
    requests = [Request(rid, o, d, t, profile.party, net.travel_idx(o, d))
                for rid, (t, o, d) in enumerate(rows)]
    return DemandTrace(requests)
