"""Correspondence graph and all-pairs geodesic distances.

Vertices are candidate correspondences. Two vertices are joined when their
image-P endpoints are spatial k-nearest neighbours (either direction) or
coincide; the edge carries their reprojection error. Geodesic distances
are shortest-path lengths, computed by one Dijkstra run per source. The
capped variant stops each run after a fixed number of settled vertices and
leaves everything it did not settle at infinity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from .candidates import CandidateSet
from .errors import DataError, UsageError
from .geometry import reprojection_pairs


@dataclass(eq=False)
class CorrespondenceGraph:
    """Undirected weighted graph in CSR form (both edge directions stored)."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    k: int | None = None

    @classmethod
    def from_edges(cls, n, i, j, w, k=None) -> "CorrespondenceGraph":
        """Build from undirected edges listed once each (``i != j``)."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        w = np.asarray(w, dtype=float)
        if np.any(i == j):
            raise DataError("self-loops are not allowed")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DataError("edge weights must be finite and non-negative")
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        ww = np.concatenate([w, w])
        order = np.lexsort((cols, rows))
        rows, cols, ww = rows[order], cols[order], ww[order]
        if len(rows) > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                raise DataError("duplicate edge")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n, indptr, cols, ww, k)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def adjacency(self) -> list[list[tuple[int, float]]]:
        return [
            list(zip(self.indices[self.indptr[v]:self.indptr[v + 1]].tolist(),
                     self.weights[self.indptr[v]:self.indptr[v + 1]].tolist()))
            for v in range(self.n)
        ]

    def edge_list(self):
        """Each undirected edge once, as ``(i, j, w)`` arrays with ``i < j``."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = rows < self.indices
        return rows[keep], self.indices[keep], self.weights[keep]


def spatial_neighbor_pairs(points: np.ndarray, k: int) -> np.ndarray:
    """Boolean adjacency over points under the symmetric k-NN rule.

    ``a ~ b`` iff ``b`` is among the ``k`` nearest of ``a`` or vice versa.
    Ties go to the lower index. The diagonal is False.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    m = len(points)
    adj = np.zeros((m, m), dtype=bool)
    if m < 2:
        return adj
    d = cdist(points, points)
    np.fill_diagonal(d, np.inf)
    kk = min(k, m - 1)
    nn = np.argsort(d, axis=1, kind="stable")[:, :kk]
    adj[np.repeat(np.arange(m), kk), nn.ravel()] = True
    return adj | adj.T


def build_graph(cands: CandidateSet, k: int = 8) -> CorrespondenceGraph:
    """Correspondence graph over ``cands`` with reprojection-error weights.

    Neighbourhoods are computed over distinct p-endpoint locations and then
    expanded, so correspondences sharing a p-feature are always adjacent and
    do not use up each other's k budget.
    """
    n = len(cands)
    if n == 0:
        return CorrespondenceGraph.from_edges(0, [], [], [], k)
    xp = cands.xp
    locs, loc_of = np.unique(xp, axis=0, return_inverse=True)
    loc_of = loc_of.reshape(-1)
    adj = spatial_neighbor_pairs(locs, k)
    np.fill_diagonal(adj, True)
    member = sparse.csr_matrix(
        (np.ones(n), (np.arange(n), loc_of)), shape=(n, len(locs))
    )
    linked = (member @ sparse.csr_matrix(adj.astype(float)) @ member.T).tocoo()
    keep = linked.row < linked.col
    i = linked.row[keep].astype(np.int64)
    j = linked.col[keep].astype(np.int64)
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    w = reprojection_pairs(xp, cands.xq, cands.homographies, i, j)
    return CorrespondenceGraph.from_edges(n, i, j, w, k)


@numba.njit(cache=True)
def _less(d1, v1, d2, v2):
    return d1 < d2 or (d1 == d2 and v1 < v2)


@numba.njit(cache=True)
def _push(hd, hv, size, d, v):
    pos = size
    hd[pos] = d
    hv[pos] = v
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(hd[pos], hv[pos], hd[parent], hv[parent]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hv[pos], hv[parent] = hv[parent], hv[pos]
            pos = parent
        else:
            break
    return size + 1


@numba.njit(cache=True)
def _pop(hd, hv, size):
    size -= 1
    hd[0] = hd[size]
    hv[0] = hv[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _less(hd[right], hv[right], hd[left], hv[left]):
            best = right
        if _less(hd[best], hv[best], hd[pos], hv[pos]):
            hd[pos], hd[best] = hd[best], hd[pos]
            hv[pos], hv[best] = hv[best], hv[pos]
            pos = best
        else:
            break
    return size


@numba.njit(cache=True)
def _dijkstra_all(indptr, indices, weights, n, cap, out):
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    touched = np.empty(n, dtype=np.int64)
    hd = np.empty(len(indices) + 1)
    hv = np.empty(len(indices) + 1, dtype=np.int64)
    for s in range(n):
        dist[s] = 0.0
        touched[0] = s
        ntouched = 1
        size = _push(hd, hv, 0, 0.0, s)
        settled = 0
        while size > 0 and settled < cap:
            d = hd[0]
            v = hv[0]
            size = _pop(hd, hv, size)
            if done[v] or d > dist[v]:
                continue
            done[v] = True
            out[s, v] = d
            settled += 1
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                if done[u]:
                    continue
                nd = d + weights[e]
                if nd < dist[u]:
                    if dist[u] == np.inf:
                        touched[ntouched] = u
                        ntouched += 1
                    dist[u] = nd
                    size = _push(hd, hv, size, nd, u)
        for t in range(ntouched):
            dist[touched[t]] = np.inf
            done[touched[t]] = False


def geodesic_all_pairs(g: CorrespondenceGraph, mode: str = "exact", max_updates: int = 200) -> np.ndarray:
    """All-pairs shortest-path matrix; unreachable pairs are ``inf``.

    ``mode="capped"`` settles at most ``max_updates`` vertices per source.
    The result is symmetrized by entrywise minimum, which is a no-op in
    exact mode up to rounding.
    """
    if mode == "exact":
        cap = g.n
    elif mode == "capped":
        if max_updates < 1:
            raise UsageError("max_updates must be >= 1")
        cap = min(g.n, int(max_updates))
    else:
        raise UsageError(f"unknown geodesic mode {mode!r}")
    out = np.full((g.n, g.n), np.inf)
    if g.n:
        _dijkstra_all(g.indptr, g.indices, g.weights, g.n, cap, out)
    return np.minimum(out, out.T)
