"""Synthetic networks and demand profiles for experiments and tests.

Two stock scenarios: a two-district city (dense grids joined by a slow
corridor, demand skewed toward one side) where anticipation has room to help,
and a circular trap city (fast spokes in, a very slow road out) that starves
itself of vehicles without anticipation.
"""

import numpy as np

from .demand import DemandProfile
from .fleet import Vehicle
from .network import RoadNetwork

GRID_ROWS = 5
GRID_COLS = 10
GRID_EDGE_S = 60.0
CORRIDOR_S = 600.0


def grid_edges(rows, cols, base, seconds):
    """Bidirectional lattice edges over node ids base..base+rows*cols-1."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = base + r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1, seconds))
                edges.append((u + 1, u, seconds))
            if r + 1 < rows:
                edges.append((u, u + cols, seconds))
                edges.append((u + cols, u, seconds))
    return edges


def two_district_network():
    """Two 5x10 grids (60 s edges) joined by one 600 s corridor pair.

    Node ids: 0..49 high-demand district, 50..99 low-demand district. The
    corridor links the middle of the right edge of H to the middle of the
    left edge of L.
    """
    rows, cols, n = GRID_ROWS, GRID_COLS, GRID_ROWS * GRID_COLS
    ids, coords = [], []
    for d, x0 in ((0, 0.0), (1, 20.0)):
        for r in range(rows):
            for c in range(cols):
                ids.append(d * n + r * cols + c)
                coords.append((x0 + c, float(r)))
    edges = grid_edges(rows, cols, 0, GRID_EDGE_S) + \
        grid_edges(rows, cols, n, GRID_EDGE_S)
    gate_h = 2 * cols + (cols - 1)      # (row 2, col 9) of H
    gate_l = n + 2 * cols               # (row 2, col 0) of L
    edges.append((gate_h, gate_l, CORRIDOR_S))
    edges.append((gate_l, gate_h, CORRIDOR_S))
    return RoadNetwork(ids, coords, edges)


def two_district_profile(count, period, origin_split=0.75, dest_split=0.5):
    """Origins skew toward district H, destinations spread evenly."""
    n = GRID_ROWS * GRID_COLS
    ow = np.empty(2 * n)
    ow[:n] = origin_split / n
    ow[n:] = (1.0 - origin_split) / n
    dw = np.empty(2 * n)
    dw[:n] = dest_split / n
    dw[n:] = (1.0 - dest_split) / n
    return DemandProfile(ow, dw, count, period)


def circular_network(n_boundary=24, spoke_in=600.0, spoke_out=9000.0,
                     ring=500.0):
    """A center node (id 0) ringed by boundary nodes: fast roads inward, one
    very slow road back out per boundary node, ring edges both ways."""
    ids = [0] + list(range(1, n_boundary + 1))
    coords = [(0.0, 0.0)]
    for k in range(n_boundary):
        ang = 2.0 * np.pi * k / n_boundary
        coords.append((float(np.cos(ang)), float(np.sin(ang))))
    edges = []
    for k in range(1, n_boundary + 1):
        edges.append((k, 0, spoke_in))
        edges.append((0, k, spoke_out))
        nxt = 1 + (k % n_boundary)
        edges.append((k, nxt, ring))
        edges.append((nxt, k, ring))
    return RoadNetwork(ids, coords, edges)


def circular_profile(count, period, n_boundary=24):
    """All demand flows from the boundary to the center."""
    ow = np.zeros(n_boundary + 1)
    ow[1:] = 1.0 / n_boundary
    dw = np.zeros(n_boundary + 1)
    dw[0] = 1.0
    return DemandProfile(ow, dw, count, period)


def place_fleet(net, count, capacity, seed, nodes=None):
    """Vehicles at seeded-uniform nodes, or cycled over an explicit node list
    (external ids)."""
    if nodes is not None:
        idxs = [net.index[n] for n in nodes]
        return [Vehicle(vid, capacity, idxs[vid % len(idxs)])
                for vid in range(count)]
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, net.n, size=count)
    return [Vehicle(vid, capacity, int(draws[vid])) for vid in range(count)]
