"""Location orders and the graphs the spiking graph layers propagate over.

Three named traversal orders are shipped for the 39-taxel fingertip sensor
(stored 1-based as published; ``indices`` gives the 0-based view). The
spatial graph is the Euclidean minimum spanning tree over taxel coordinates
with a deterministic tie rule; temporal graphs chain a taxel's time bins
either sparsely (consecutive) or densely (all forward pairs).
"""

from __future__ import annotations

import dataclasses
from importlib import resources

import numpy as np

SENSOR_TAXELS = 39

# Ridge-following traversal orders over the 39 taxels, 1-based.
ARCH_ORDER = (11, 25, 35, 4, 18, 30, 7, 2, 20, 37, 29, 12, 9, 33, 23, 16, 1,
              6, 15, 21, 27, 34, 39, 24, 17, 10, 31, 38, 28, 14, 3, 22, 32,
              8, 19, 36, 5, 13, 26)
WHORL_ORDER = (21, 15, 16, 23, 27, 24, 17, 6, 9, 12, 20, 29, 33, 34, 31, 28,
               22, 14, 10, 1, 2, 7, 18, 30, 37, 39, 38, 32, 19, 8, 3, 4, 11,
               25, 35, 36, 26, 13, 5)
LOOP_ORDER = tuple(range(1, SENSOR_TAXELS + 1))

_NAMED_ORDERS = {"arch": ARCH_ORDER, "whorl": WHORL_ORDER, "loop": LOOP_ORDER}


@dataclasses.dataclass
class LocationOrder:
    """A bijective traversal of the taxels, stored 1-based."""

    kind: str
    permutation: np.ndarray  # 1-based, shape (N,)

    @property
    def n_taxels(self) -> int:
        return len(self.permutation)

    @property
    def indices(self) -> np.ndarray:
        """0-based traversal order, ready to index grid rows."""
        return self.permutation - 1


def make_order(kind: str, n_taxels: int, permutation=None) -> LocationOrder:
    """Build a location order.

    Named kinds (arch, whorl, loop) require n_taxels to be a multiple of 39;
    for several sensors the single-sensor order is applied per 39-taxel
    block and concatenated. ``custom`` takes an explicit 1-based permutation
    of 1..n_taxels; ``identity`` is natural order for any width.
    """
    if kind == "identity":
        return LocationOrder("identity", np.arange(1, n_taxels + 1))
    if kind == "custom":
        if permutation is None:
            raise ValueError("custom order needs an explicit permutation")
        perm = np.asarray(permutation, dtype=np.int64)
        if len(perm) != n_taxels or sorted(perm.tolist()) != list(range(1, n_taxels + 1)):
            raise ValueError(f"permutation is not a bijection on 1..{n_taxels}")
        return LocationOrder("custom", perm)
    if kind not in _NAMED_ORDERS:
        raise ValueError(f"unknown order kind {kind!r}")
    if n_taxels % SENSOR_TAXELS != 0 or n_taxels == 0:
        raise ValueError(
            f"order {kind!r} needs a multiple of {SENSOR_TAXELS} taxels, got {n_taxels}"
        )
    base = np.asarray(_NAMED_ORDERS[kind], dtype=np.int64)
    blocks = [base + SENSOR_TAXELS * s for s in range(n_taxels // SENSOR_TAXELS)]
    return LocationOrder(kind, np.concatenate(blocks))


@dataclasses.dataclass
class SpatialGraph:
    """Undirected Euclidean MST over taxel coordinates."""

    coords: np.ndarray     # (N, d)
    edges: list            # [(i, j)] with i < j, 0-based
    adjacency: np.ndarray  # (N, N) uint8, symmetric, zero diagonal

    @property
    def n_nodes(self) -> int:
        return len(self.coords)


@dataclasses.dataclass
class TemporalGraph:
    """Directed acyclic graph over one taxel's time bins; identical for
    every taxel. Edges run forward in time: (p, q) means p -> q, p < q."""

    n_nodes: int
    mode: str  # "sparse" or "dense"
    edges: list


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def build_spatial_graph(coords) -> SpatialGraph:
    """Kruskal MST with ties broken by (weight, lower index, higher index).

    Duplicate coordinates are allowed (zero-weight edges). Needs at least
    two nodes.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise ValueError(f"coords must be (N, d), got shape {coords.shape}")
    n = len(coords)
    if n < 2:
        raise ValueError(f"spatial graph needs at least 2 nodes, got {n}")
    cand = []
    for i in range(n):
        diffs = coords[i + 1:] - coords[i]
        dists = np.sqrt((diffs * diffs).sum(axis=1))
        cand.extend((float(dists[j - i - 1]), i, j) for j in range(i + 1, n))
    cand.sort()
    uf = _UnionFind(n)
    edges = []
    for _w, i, j in cand:
        if uf.union(i, j):
            edges.append((i, j))
            if len(edges) == n - 1:
                break
    adjacency = np.zeros((n, n), dtype=np.uint8)
    for i, j in edges:
        adjacency[i, j] = adjacency[j, i] = 1
    return SpatialGraph(coords=coords, edges=edges, adjacency=adjacency)


def build_temporal_graph(n_steps: int, mode: str = "sparse") -> TemporalGraph:
    """Chain (sparse) or all-forward-pairs (dense) graph over time bins."""
    if n_steps < 1:
        raise ValueError(f"temporal graph needs at least 1 node, got {n_steps}")
    if mode == "sparse":
        edges = [(t, t + 1) for t in range(n_steps - 1)]
    elif mode == "dense":
        edges = [(p, q) for p in range(n_steps) for q in range(p + 1, n_steps)]
    else:
        raise ValueError(f"unknown temporal mode {mode!r}")
    return TemporalGraph(n_nodes=n_steps, mode=mode, edges=edges)


def normalized_adjacency(graph) -> np.ndarray:
    """Propagation operator for a graph, without self-loops.

    Undirected (spatial): D^-1/2 A D^-1/2 with symmetric A. Directed
    (temporal): row-normalized by in-degree, A[q, p] = 1 for edge p -> q.
    Zero-degree nodes get all-zero rows.
    """
    if isinstance(graph, SpatialGraph):
        adj = graph.adjacency.astype(np.float64)
        deg = adj.sum(axis=1)
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
        return inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    if isinstance(graph, TemporalGraph):
        adj = np.zeros((graph.n_nodes, graph.n_nodes), dtype=np.float64)
        for p, q in graph.edges:
            adj[q, p] = 1.0
        indeg = adj.sum(axis=1)
        scale = np.where(indeg > 0, 1.0 / np.where(indeg > 0, indeg, 1.0), 0.0)
        return scale[:, None] * adj
    raise TypeError(f"not a graph: {type(graph).__name__}")


def graph_propagate(graph, node_features, weights, bias=None) -> np.ndarray:
    """Topology-adaptive propagation: sum_k (A_hat^k X) W_k + bias.

    Args:
        graph: SpatialGraph or TemporalGraph.
        node_features: (n_nodes, F_in).
        weights: sequence of H+1 matrices, each (F_in, F_out); weights[k]
            applies to the k-hop propagated features (weights[0] to X).
        bias: optional (F_out,) vector.

    Returns:
        (n_nodes, F_out) array.
    """
    X = np.asarray(node_features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    a_hat = normalized_adjacency(graph)
    if X.shape[0] != a_hat.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows for {a_hat.shape[0]} nodes")
    mats = [np.asarray(w, dtype=np.float64) for w in weights]
    if not mats:
        raise ValueError("need at least W_0")
    f_in, f_out = mats[0].shape
    for k, w in enumerate(mats):
        if w.shape != (f_in, f_out):
            raise ValueError(f"W_{k} has shape {w.shape}, expected {(f_in, f_out)}")
    if X.shape[1] != f_in:
        raise ValueError(f"features have width {X.shape[1]}, weights expect {f_in}")
    out = np.zeros((X.shape[0], f_out))
    prop = X
    for k, w in enumerate(mats):
        if k > 0:
            prop = a_hat @ prop
        out += prop @ w
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


def radial_layout(n_taxels: int) -> np.ndarray:
    """Deterministic radial coordinates: one center node, then rings of
    6, 12, 18, ... nodes at unit radial spacing."""
    if n_taxels < 1:
        raise ValueError("need at least one taxel")
    coords = [(0.0, 0.0)]
    ring = 1
    while len(coords) < n_taxels:
        cap = 6 * ring
        take = min(cap, n_taxels - len(coords))
        for i in range(take):
            angle = 2.0 * np.pi * i / cap + 0.5 * ring
            coords.append((ring * np.cos(angle), ring * np.sin(angle)))
        ring += 1
    return np.asarray(coords, dtype=np.float64)


def default_taxel_coords(n_taxels: int) -> np.ndarray:
    """Coordinates for building the spatial MST when none are supplied.

    39 taxels load the packaged fingertip layout; 78 place two of those
    layouts side by side; anything else falls back to a radial layout.
    """
    if n_taxels == SENSOR_TAXELS:
        return _load_packaged_coords()
    if n_taxels == 2 * SENSOR_TAXELS:
        one = _load_packaged_coords()
        other = one.copy()
        other[:, 0] += 10.0
        return np.vstack([one, other])
    return radial_layout(n_taxels)


def _load_packaged_coords() -> np.ndarray:
    text = resources.files("locsnn").joinpath("data/neutouch39.txt").read_text()
    rows = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        idx, x, y = line.split()
        rows[int(idx)] = (float(x), float(y))
    return np.asarray([rows[i] for i in range(len(rows))], dtype=np.float64)
