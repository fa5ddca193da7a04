"""Directed road network: travel times, shortest paths, zone clustering.

Node ids in network files are arbitrary non-negative integers; internally
nodes are re-indexed 0..n-1 in ascending id order so that deterministic
tie-breaks "by lowest node id" are plain index comparisons.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

# all-pairs cache up to this many nodes; beyond it rows are computed on demand
DENSE_CACHE_LIMIT = 10_000
# rows are kept as python lists up to this size (fast scalar indexing)
LIST_ROW_LIMIT = 2_048
# exact branch-and-bound set cover up to this many candidate centers
EXACT_COVER_LIMIT = 30


class NetworkError(ValueError):
    """Malformed network input (parse or validation failure)."""


class PathResult:
    """A shortest path: node index sequence plus total travel seconds."""

    __slots__ = ("nodes", "seconds")

    def __init__(self, nodes, seconds):
        self.nodes = nodes
        self.seconds = seconds

    def __repr__(self):
        return f"PathResult(nodes={self.nodes}, seconds={self.seconds:.1f})"


class RoadNetwork:
    def __init__(self, ids, coords, edges):
        """ids: external node ids; coords: (x, y) per node; edges: (u, v, seconds)."""
        if not ids:
            raise NetworkError("network has no nodes")
        order = sorted(range(len(ids)), key=lambda k: ids[k])
        self.ids = [ids[k] for k in order]
        if len(set(self.ids)) != len(self.ids):
            raise NetworkError("duplicate node ids")
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        self.xy = np.asarray([coords[k] for k in order], dtype=float)
        self.n = len(self.ids)

        self.edge_seconds = {}
        self.out_edges = [[] for _ in range(self.n)]
        for u, v, sec in edges:
            if u not in self.index or v not in self.index:
                raise NetworkError(f"edge references unknown node: {u} -> {v}")
            if sec <= 0:
                raise NetworkError(f"edge {u} -> {v} has non-positive travel time")
            ui, vi = self.index[u], self.index[v]
            if (ui, vi) in self.edge_seconds:
                raise NetworkError(f"duplicate edge {u} -> {v}")
            self.edge_seconds[(ui, vi)] = float(sec)
            self.out_edges[ui].append((vi, float(sec)))
        for lst in self.out_edges:
            lst.sort()

        self._check_strongly_connected()
        self._rows = None        # list of per-source rows (lists or arrays)
        self._preds = None       # predecessor matrix for dense mode
        self._lazy = {}          # source -> (dist array, pred array)
        if self.n <= DENSE_CACHE_LIMIT:
            self._build_dense()

    def _matrix(self):
        data, rows, cols = [], [], []
        for (u, v), sec in self.edge_seconds.items():
            rows.append(u)
            cols.append(v)
            data.append(sec)
        return csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def _check_strongly_connected(self):
        if self.n == 1:
            return
        ncomp, _ = connected_components(self._matrix(), directed=True, connection="strong")
        if ncomp != 1:
            raise NetworkError("network is not strongly connected")

    def _build_dense(self):
        dist, pred = dijkstra(self._matrix(), directed=True, return_predecessors=True)
        self.times = dist
        self._preds = pred
        if self.n <= LIST_ROW_LIMIT:
            self._rows = dist.tolist()
        else:
            self._rows = list(dist)

    def _lazy_row(self, u):
        hit = self._lazy.get(u)
        if hit is None:
            dist, pred = dijkstra(self._matrix(), directed=True, indices=u,
                                  return_predecessors=True)
            hit = (dist, pred)
            self._lazy[u] = hit
        return hit

    def row(self, u):
        """Travel-time row from node index u (list for small nets, array otherwise)."""
        if self._rows is not None:
            return self._rows[u]
        return self._lazy_row(u)[0]

    def travel_idx(self, u, v):
        if self._rows is not None:
            return self._rows[u][v]
        return float(self._lazy_row(u)[0][v])

    def shortest_travel_time(self, u, w):
        """Seconds between external node ids u and w."""
        try:
            ui, wi = self.index[u], self.index[w]
        except KeyError as exc:
            raise NetworkError(f"unknown node id: {exc.args[0]}") from None
        return float(self.travel_idx(ui, wi))

    def path_idx(self, u, v):
        """Shortest-path node index sequence u..v (inclusive)."""
        if u == v:
            return [u]
        pred = self._preds[u] if self._preds is not None else self._lazy_row(u)[1]
        seq = [v]
        node = v
        while node != u:
            node = int(pred[node])
            if node < 0:
                raise NetworkError("no path found")  # unreachable: strongly connected
            seq.append(node)
        seq.reverse()
        return seq

    def path(self, u, w):
        """PathResult between external ids (node sequence also external)."""
        try:
            ui, wi = self.index[u], self.index[w]
        except KeyError as exc:
            raise NetworkError(f"unknown node id: {exc.args[0]}") from None
        seq = self.path_idx(ui, wi)
        return PathResult([self.ids[i] for i in seq], float(self.travel_idx(ui, wi)))


def load_network(path):
    """Parse a network file: `N <id> <x> <y>` / `E <from> <to> <seconds>` lines."""
    ids, coords, edges = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "N":
                    if len(parts) != 4:
                        raise ValueError("expected: N <id> <x> <y>")
                    ids.append(int(parts[1]))
                    coords.append((float(parts[2]), float(parts[3])))
                elif parts[0] == "E":
                    if len(parts) != 4:
                        raise ValueError("expected: E <from> <to> <seconds>")
                    sec = float(parts[3])
                    if sec <= 0:
                        raise ValueError("edge travel time must be positive")
                    edges.append((int(parts[1]), int(parts[2]), sec))
                else:
                    raise ValueError(f"unknown record tag {parts[0]!r}")
            except ValueError as exc:
                raise NetworkError(f"{path}:{lineno}: {exc}") from None
    try:
        return RoadNetwork(ids, coords, edges)
    except NetworkError as exc:
        raise NetworkError(f"{path}: {exc}") from None


def save_network(net, path):
    with open(path, "w") as fh:
        for i, nid in enumerate(net.ids):
            fh.write(f"N {nid} {net.xy[i, 0]:g} {net.xy[i, 1]:g}\n")
        for (u, v), sec in sorted(net.edge_seconds.items()):
            fh.write(f"E {net.ids[u]} {net.ids[v]} {sec:g}\n")


class Zones:
    """A partition of nodes into zones around chosen center nodes."""

    __slots__ = ("centers", "zone_of", "n")

    def __init__(self, centers, zone_of):
        self.centers = centers          # node indices, ascending
        self.zone_of = zone_of          # node index -> zone index
        self.n = len(centers)

    def members(self, z):
        return [u for u, zz in enumerate(self.zone_of) if zz == z]


def _greedy_cover(cover_sets, n):
    uncovered = set(range(n))
    chosen = []
    while uncovered:
        best, best_gain = -1, -1
        for c in range(n):
            gain = len(cover_sets[c] & uncovered)
            if gain > best_gain:
                best, best_gain = c, gain
        chosen.append(best)
        uncovered -= cover_sets[best]
    return chosen

def _exact_cover(cover_sets, n, seed_solution):
    """Minimum set cover by branch and bound (element with fewest covers first)."""
    best = list(seed_solution)

    def recurse(uncovered, chosen):
        nonlocal best
        if not uncovered:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        if len(chosen) + 1 >= len(best):
            return
        pick = min(uncovered, key=lambda e: (sum(1 for c in range(n) if e in cover_sets[c]), e))
        cands = [c for c in range(n) if pick in cover_sets[c]]
        cands.sort(key=lambda c: (-len(cover_sets[c] & uncovered), c))
        for c in cands:
            chosen.append(c)
            recurse(uncovered - cover_sets[c], chosen)
            chosen.pop()

    recurse(set(range(n)), [])
    return best


def cluster_zones(net, t_max):
    """Cover all nodes with centers reaching them within t_max seconds (directed,
    center to node), using as few centers as possible; assign each node to its
    nearest center, ties to the lowest center id."""
    if t_max < 0:
        raise NetworkError("t_max must be non-negative")
    n = net.n
    cover_sets = []
    for c in range(n):
        row = np.asarray(net.row(c))
        cover_sets.append(frozenset(np.nonzero(row <= t_max)[0].tolist()))
    greedy = _greedy_cover(cover_sets, n)
    if n <= EXACT_COVER_LIMIT:
        chosen = _exact_cover(cover_sets, n, greedy)
    else:
        chosen = greedy
    centers = sorted(chosen)
    zone_of = [0] * n
    for u in range(n):
        best_z, best_t = 0, float("inf")
        for z, c in enumerate(centers):
            t = net.travel_idx(c, u)
            if t < best_t:
                best_z, best_t = z, t
        zone_of[u] = best_z
    return Zones(centers, zone_of)


def save_zones(net, zones, fh):
    """Write the node -> zone map as CSV (external node ids)."""
    fh.write("node_id,zone_id\n")
    for u in range(net.n):
        fh.write(f"{net.ids[u]},{zones.zone_of[u]}\n")
