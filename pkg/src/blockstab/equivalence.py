"""Structural-equivalence dissimilarities and agglomerative clustering.

Used for indirect blockmodeling (choosing the number of positions from a
dendrogram) and reused for clustering disciplines by their stability
profiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidDissimilarityError
from .network import Network
from .partition import Partition

LINKAGES = ("ward", "complete")
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        n = len(self.labels)
        if vals.shape != (n, n):
            raise InvalidDissimilarityError(f"shape {vals.shape} does not match {n} labels")
        if not np.all(np.isfinite(vals)):
            raise InvalidDissimilarityError("dissimilarities must be finite")
        if not np.allclose(vals, vals.T, rtol=0, atol=1e-12):
            raise InvalidDissimilarityError("dissimilarity matrix is not symmetric")
        if np.any(vals < 0):
            raise InvalidDissimilarityError("dissimilarities must be non-negative")
        if np.any(np.diagonal(vals) != 0):
            raise InvalidDissimilarityError("diagonal must be zero")
        vals.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return len(self.labels)

    @classmethod
    def from_points(cls, points, labels=None) -> "DissimilarityMatrix":
        """Euclidean distances between the rows of ``points``."""
        x = np.asarray(points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        sq = np.sum(x * x, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, 0.0)
        d = np.sqrt(d2)
        d = (d + d.T) / 2.0
        if labels is None:
            labels = range(len(x))
        return cls(tuple(labels), d)


def corrected_euclidean(net: Network) -> DissimilarityMatrix:
    """Corrected Euclidean distance consistent with structural equivalence.

    ``d(i, j)^2`` sums ``(a_is - a_js)^2`` over all third vertices ``s`` plus
    the two correction terms ``(a_ii - a_jj)^2 + (a_ij - a_ji)^2``, which are
    zero for undirected loop-free networks. The columns ``s = i`` and
    ``s = j`` are left out, so a tie between ``i`` and ``j`` never counts.
    """
    n = net.n
    if n < 2:
        raise ValueError("corrected Euclidean distance needs at least 2 vertices")
    a = net.adjacency.astype(float)
    sq = np.sum(a * a, axis=1)
    full = sq[:, None] + sq[None, :] - 2.0 * a @ a.T
    diag = np.diagonal(a)
    # s = i term: (a_ii - a_ji)^2 ; s = j term: (a_ij - a_jj)^2
    term_i = (diag[:, None] - a.T) ** 2
    term_j = (a - diag[None, :]) ** 2
    corr = (diag[:, None] - diag[None, :]) ** 2 + (a - a.T) ** 2
    d2 = full - term_i - term_j + corr
    np.fill_diagonal(d2, 0.0)
    d2 = np.rint(d2) if np.all(np.isin(a, (0.0, 1.0))) else np.maximum(d2, 0.0)
    return DissimilarityMatrix(net.vertices, np.sqrt(d2))


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    node: int
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Agglomeration history; leaves are nodes ``0..n-1``, merges create ``n..2n-2``."""

    labels: tuple
    merges: tuple
    linkage: str = "ward"

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "linkage": self.linkage,
            "merges": [[m.left, m.right, m.height] for m in self.merges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def render(self, precision: int = 4) -> str:
        """Indented text tree, root first."""
        if self.n == 1:
            return f"{self.labels[0]}\n"
        by_node = {m.node: m for m in self.merges}
        lines = []

        def walk(node, depth):
            pad = "  " * depth
            if node < self.n:
                lines.append(f"{pad}- {self.labels[node]}")
                return
            m = by_node[node]
            lines.append(f"{pad}+ [{m.height:.{precision}f}] ({m.size})")
            walk(m.left, depth + 1)
            walk(m.right, depth + 1)

        walk(self.merges[-1].node, 0)
        return "\n".join(lines) + "\n"


def ward_cluster(d: DissimilarityMatrix, linkage: str = "ward") -> Dendrogram:
    """Agglomerative clustering via the Lance-Williams recurrence.

    Works on squared dissimilarities; merge heights are reported on the
    original (unsquared) scale, as in the usual Ward dendrogram. Ties on the
    merge criterion go to the pair whose (min leaf, max leaf) indices are
    lexicographically smallest, where a cluster is represented by its
    smallest leaf index in ``d.labels`` order.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    if not isinstance(d, DissimilarityMatrix):
        d = DissimilarityMatrix(tuple(range(len(d))), d)
    n = d.n
    if n < 2:
        raise InvalidDissimilarityError("clustering needs at least 2 items")

    dist = d.values ** 2
    dist = dist.copy()
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    rep = np.arange(n)  # smallest leaf in each slot's cluster
    node_of = np.arange(n)
    merges = []
    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], dist, np.inf)
        best = masked.min()
        tol = _TIE_RTOL * max(abs(best), 1.0)
        ii, jj = np.nonzero(masked <= best + tol)
        lo = np.minimum(rep[ii], rep[jj])
        hi = np.maximum(rep[ii], rep[jj])
        pick = np.lexsort((hi, lo))[0]
        i, j = int(ii[pick]), int(jj[pick])
        if rep[i] > rep[j]:
            i, j = j, i
        dij = dist[i, j]
        ni, nj = sizes[i], sizes[j]
        others = active.copy()
        others[[i, j]] = False
        k_idx = np.flatnonzero(others)
        if linkage == "ward":
            nk = sizes[k_idx]
            tot = ni + nj + nk
            new = ((ni + nk) * dist[i, k_idx] + (nj + nk) * dist[j, k_idx] - nk * dij) / tot
        else:
            new = np.maximum(dist[i, k_idx], dist[j, k_idx])
        dist[i, k_idx] = new
        dist[k_idx, i] = new
        active[j] = False
        sizes[i] = ni + nj
        height = float(np.sqrt(max(dij, 0.0)))
        merges.append(Merge(int(node_of[i]), int(node_of[j]), height, n + step, int(ni + nj)))
        node_of[i] = n + step
        rep[i] = min(rep[i], rep[j])
    return Dendrogram(d.labels, tuple(merges), linkage)


def cut_dendrogram(dend: Dendrogram, k: int) -> Partition:
    """Flat partition with ``k`` clusters, numbered ``1..k`` by smallest member."""
    n = dend.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in dend.merges[: n - k]:
        parent[find(m.left)] = m.node
        parent[find(m.right)] = m.node
    roots = [find(i) for i in range(n)]
    first_leaf: dict = {}
    for leaf, r in enumerate(roots):
        first_leaf.setdefault(r, leaf)
    numbering = {r: rank + 1 for rank, r in enumerate(sorted(first_leaf, key=first_leaf.get))}
    return Partition({dend.labels[i]: numbering[roots[i]] for i in range(n)})


def cluster_points(points, k: int, labels: Sequence | None = None, linkage: str = "ward"):
    """Convenience: Euclidean distances, agglomerate, cut at ``k``."""
    dend = ward_cluster(DissimilarityMatrix.from_points(points, labels), linkage)
    return cut_dendrogram(dend, k), dend
