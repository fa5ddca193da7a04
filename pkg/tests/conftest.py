"""Shared fixtures: small networks and request builders used across suites."""

import numpy as np
import pytest

from anticipool.demand import Request, WAITING
from anticipool.fleet import Vehicle
from anticipool.network import RoadNetwork


def line_network(n=4, seconds=100.0):
    """0 -> 1 -> ... -> n-1 and back, uniform edge times."""
    ids = list(range(n))
    coords = [(float(i), 0.0) for i in range(n)]
    edges = []
    for i in range(n - 1):
        edges.append((i, i + 1, seconds))
        edges.append((i + 1, i, seconds))
    return RoadNetwork(ids, coords, edges)


def random_network(rng, n=30, extra=40, lo=30.0, hi=300.0):
    """A random strongly connected digraph: a directed ring plus extra edges."""
    ids = list(range(n))
    coords = [(float(rng.random()), float(rng.random())) for _ in range(n)]
    edges = []
    seen = set()
    for i in range(n):
        j = (i + 1) % n
        edges.append((i, j, float(rng.uniform(lo, hi))))
        seen.add((i, j))
    for _ in range(extra):
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append((u, v, float(rng.uniform(lo, hi))))
    return RoadNetwork(ids, coords, edges)


def make_request(net, rid, o, d, t=0.0, party=1, artificial=False, waiting=True):
    r = Request(rid, o, d, t, party, net.travel_idx(o, d), artificial=artificial)
    if waiting:
        r.set_status(WAITING)
    return r


def make_vehicle(vid, node, capacity=3):
    return Vehicle(vid, capacity, node)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One verdict line per acceptance criterion, echoed after the test summary so
# they stay visible even though pytest captures in-test stdout.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
