"""Demand-rate estimation: per-node counting, proximity smoothing, a per-zone
bootstrap particle filter, and historical averaging.

Node-level estimators return arrays over nodes; zone-level estimators return
arrays over zones and are expanded with `to_node_field` (each node inherits
its zone's rate). Artificial requests never feed any estimator.
"""

import numpy as np
from scipy.special import gammaln

RATE_FLOOR = 1e-6


def basic_rates(requests, n_nodes):
    """Requests per origin node (one count per request, party size ignored)."""
    out = np.zeros(n_nodes)
    for r in requests:
        out[r.origin] += 1.0
    return out


def origin_counts(origins, n_nodes):
    """Counts from bare origin node indices (e.g. last stage's rejections)."""
    out = np.zeros(n_nodes)
    for o in origins:
        out[o] += 1.0
    return out


def smooth_rates(base, net, psi):
    """Spread per-node mass over the network: each node u scores
    sum_w base[w] / (psi + t(u, w)), directed travel time from u to w."""
    if psi <= 0:
        raise ValueError("psi must be positive")
    base = np.asarray(base, dtype=float)
    if hasattr(net, "times"):
        return (1.0 / (psi + net.times)) @ base
    out = np.empty(net.n)
    for u in range(net.n):
        row = np.asarray(net.row(u), dtype=float)
        out[u] = ((1.0 / (psi + row)) * base).sum()
    return out


def zone_counts(requests, zones):
    out = np.zeros(zones.n)
    for r in requests:
        out[zones.zone_of[r.origin]] += 1.0
    return out


def zone_counts_from_origins(origins, zones):
    out = np.zeros(zones.n)
    for o in origins:
        out[zones.zone_of[o]] += 1.0
    return out


class ParticleFilterState:
    """One bootstrap filter per zone: particles are candidate Poisson rates."""

    __slots__ = ("lam", "weights", "rng", "floor")

    def __init__(self, n_zones, eta, mean_rate, rng, floor=RATE_FLOOR):
        self.rng = rng
        self.floor = floor
        high = 2.0 * mean_rate
        if high <= floor:
            lam = np.full((n_zones, eta), floor)
        else:
            lam = rng.uniform(0.0, high, size=(n_zones, eta))
            lam = np.maximum(lam, floor)
        self.lam = lam
        self.weights = np.full((n_zones, eta), 1.0 / eta)

    @property
    def eta(self):
        return self.lam.shape[1]

    @property
    def n_zones(self):
        return self.lam.shape[0]


def pf_update(state, observed, sigma2):
    """One filter step per zone: multinomial resampling by weight, Gaussian
    perturbation (clamped at the floor), Poisson reweighting in log space,
    normalization. Returns the per-zone rate estimates (weighted means)."""
    observed = np.asarray(observed, dtype=float)
    eta = state.eta
    sigma = np.sqrt(sigma2)
    rates = np.empty(state.n_zones)
    for z in range(state.n_zones):
        counts = state.rng.multinomial(eta, state.weights[z])
        lam = np.repeat(state.lam[z], counts)
        lam = lam + state.rng.normal(0.0, sigma, size=eta)
        lam = np.maximum(lam, state.floor)
        g = observed[z]
        with np.errstate(invalid="ignore"):     # non-finite logw handled below
            logw = -lam + g * np.log(lam) - gammaln(g + 1.0)
        peak = logw.max()
        if not np.isfinite(peak):
            w = np.full(eta, 1.0 / eta)   # all weights underflowed: reset
        else:
            w = np.exp(logw - peak)
            w /= w.sum()
        state.lam[z] = lam
        state.weights[z] = w
        rates[z] = float(w @ lam)
    return rates


def historical_rates(day_traces, zones, t0, t1):
    """Mean per-zone request count over historical days in the window
    (t0, t1]. Zones no day has data for stay at zero."""
    total = np.zeros(zones.n)
    for day in day_traces:
        total += zone_counts(day.window(t0, t1), zones)
    return total / len(day_traces)


def to_node_field(zone_values, zones):
    out = np.empty(len(zones.zone_of))
    for u, z in enumerate(zones.zone_of):
        out[u] = zone_values[z]
    return out


def save_rate_field(net, values, fh):
    """Write a per-node field as `node_id,value` CSV."""
    fh.write("node_id,value\n")
    for u in range(net.n):
        fh.write(f"{net.ids[u]},{float(values[u])!r}\n")
