"""Artificial future requests: sampled from current generation-rate estimates,
injected into the stage pool with a discounted rejection penalty, and removed
from every plan once the stage's movement is done.
"""

import numpy as np

from .demand import Request, WAITING
from .fleet import set_plan, schedule_stops

ARTIFICIAL_ID_BASE = 1_000_000_000


class ArtificialConfig:
    """m requests per stage, one every phi seconds ahead, penalty gamma * p_KO.
    length_target: aimed direct trip seconds (rolling mean of real demand)."""

    __slots__ = ("m", "phi", "gamma")

    def __init__(self, m, phi, gamma):
        self.m = int(m)
        self.phi = float(phi)
        self.gamma = float(gamma)
        if self.m < 0 or self.phi <= 0:
            raise ValueError("need m >= 0 and phi > 0")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")


def make_artificial(field, net, now, cfg, length_target, rng, id_base):
    """Sample artificial requests: origins proportional to the rate field,
    request times now + k*phi (k = 1..m), destinations uniform among nodes
    whose direct time lies within +-20% of length_target (band doubled until
    non-empty). Returns [] when the field carries no mass or m == 0."""
    if cfg.m == 0 or length_target is None or net.n < 2:
        return []
    field = np.asarray(field, dtype=float)
    total = field.sum()
    if total <= 0:
        return []
    p = field / total
    origins = rng.choice(net.n, size=cfg.m, p=p)
    out = []
    for k in range(1, cfg.m + 1):
        o = int(origins[k - 1])
        row = np.asarray(net.row(o))
        half = 0.2 * length_target
        while True:
            mask = (row >= length_target - half) & (row <= length_target + half)
            mask[o] = False
            cands = np.nonzero(mask)[0]
            if cands.size:
                break
            half *= 2.0
        d = int(cands[rng.integers(cands.size)])
        r = Request(id_base + k - 1, o, d, now + k * cfg.phi, 1,
                    net.travel_idx(o, d), artificial=True)
        r.set_status(WAITING)
        out.append(r)
    return out


def strip_artificial(vehicles, net, now):
    """Drop artificial stops and assignments from every vehicle; remaining
    stops keep their order, schedules are recomputed from the current
    position. Returns the number of stops removed."""
    removed = 0
    for veh in sorted(vehicles, key=lambda v: v.vid):
        if not any(s.request is not None and s.request.artificial for s in veh.plan):
            continue
        kept = [s for s in veh.plan
                if s.request is None or not s.request.artificial]
        removed += len(veh.plan) - len(kept)
        schedule_stops(veh, kept, net, now)
        set_plan(veh, kept)
        veh.assigned = [r for r in veh.assigned if not r.artificial]
    return removed


def rolling_length_target(trace, now, window=1800.0):
    """Mean direct seconds of real requests in the trailing window; falls back
    to the whole trace's mean before any demand shows up."""
    recent = trace.window(now - window, now)
    if recent:
        return sum(r.direct_seconds for r in recent) / len(recent)
    return trace.mean_direct_seconds()
