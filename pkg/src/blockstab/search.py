"""Relocation/exchange local search for the blockmodel criterion.

State for one restart is the position vector ``g`` plus the tie-count
matrix ``T[v, c]`` (ties from ``v`` into position ``c``). From these the
cost of placing each vertex in each position is a small matrix product, so
every single-vertex relocation delta and every pairwise exchange delta is
available in O(n*m + n^2) per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-9


@dataclass
class SearchResult:
    assignment: np.ndarray  # position per vertex
    value: float
    moves: int


class _Problem:
    """Static data shared by every restart on one network/image."""

    def __init__(self, adjacency, complete, weights, frozen_pos):
        self.adj = np.asarray(adjacency, dtype=np.float64)
        self.n = self.adj.shape[0]
        complete = np.asarray(complete, dtype=bool)
        weights = np.asarray(weights, dtype=np.float64)
        self.m = complete.shape[0]
        self.wc = np.where(complete, weights, 0.0)
        self.wn = np.where(complete, 0.0, weights)
        # frozen_pos[v] >= 0 pins v to that position
        self.frozen_pos = np.asarray(frozen_pos, dtype=np.int64)
        self.free = self.frozen_pos < 0
        wc, wn = self.wc, self.wn
        # swap correction for u in A, v in B, indexed [A, B] for a_uv = 0 / 1
        ca = np.arange(self.m)
        A, B = np.meshgrid(ca, ca, indexing="ij")
        corr0 = -(wc[A, A] - wc[B, A]) + (wc[A, B] - wc[B, B])
        corr1 = -(wn[A, A] - wn[B, A]) + (wn[A, B] - wn[B, B])
        corr0 = corr0.astype(np.float64)
        np.fill_diagonal(corr0, np.inf)
        self.corr0 = corr0
        self.cdiff = np.where(np.isinf(corr0), 0.0, corr1 - corr0)
        block = ~(self.free[:, None] & self.free[None, :])
        block |= np.tri(self.n, dtype=bool)  # keep u < v only
        self.static_mask = np.where(block, np.inf, 0.0)
        self.any_swappable = int(self.free.sum()) >= 2

    def value(self, g) -> float:
        onehot = np.zeros((self.n, self.m))
        onehot[np.arange(self.n), g] = 1.0
        e = onehot.T @ self.adj @ onehot
        sizes = onehot.sum(axis=0)
        cells = np.outer(sizes, sizes)
        np.fill_diagonal(cells, sizes * (sizes - 1))
        # ordered-pair counts; halve for unordered pairs
        inc = self.wc * (cells - e) + self.wn * e
        return float(inc.sum()) / 2.0


def _costs(p: _Problem, g, sizes, T):
    nminus = np.broadcast_to(sizes, T.shape).copy()
    nminus[np.arange(p.n), g] -= 1
    return (nminus - T) @ p.wc.T + T @ p.wn.T


def descend(p: _Problem, g0) -> SearchResult:
    """Best-improvement descent from ``g0`` until no strictly improving move.

    Ties on the improvement go to the smallest moved vertex, then the
    smallest target position; a relocation beats an exchange on a full tie.
    """
    n, m = p.n, p.m
    g = np.array(g0, dtype=np.int64)
    onehot = np.zeros((n, m))
    onehot[np.arange(n), g] = 1.0
    T = p.adj @ onehot
    sizes = onehot.sum(axis=0)
    value = p.value(g)
    rows = np.arange(n)
    pair_base = p.corr0[g][:, g] + p.static_mask
    pair_diff = p.cdiff[g][:, g] * p.adj
    moves = 0

    def relocate(v, target):
        src = g[v]
        col = p.adj[:, v]
        T[:, src] -= col
        T[:, target] += col
        sizes[src] -= 1
        sizes[target] += 1
        g[v] = target
        row0 = p.corr0[target, g] + p.static_mask[v]
        col0 = p.corr0[g, target] + p.static_mask[:, v]
        pair_base[v, :] = row0
        pair_base[:, v] = col0
        pair_diff[v, :] = p.cdiff[target, g] * p.adj[v]
        pair_diff[:, v] = p.cdiff[g, target] * p.adj[:, v]

    while True:
        C = _costs(p, g, sizes, T)
        D = C - C[rows, g][:, None]
        Dr = D.copy()
        Dr[rows, g] = np.inf
        Dr[~p.free] = np.inf
        best_r = Dr.min() if n else np.inf
        best_s = np.inf
        S = None
        if p.any_swappable:
            Dg = D[:, g]
            S = Dg + Dg.T
            S += pair_base
            S += pair_diff
            best_s = S.min()
        best = min(best_r, best_s)
        if not best < -_EPS:
            break
        tol = _EPS * max(1.0, abs(best))
        cands = []
        if best_r <= best + tol:
            vv, xx = np.nonzero(Dr <= best + tol)
            for v, x in zip(vv, xx):
                cands.append((int(v), int(x), 0, -1))
        if S is not None and best_s <= best + tol:
            uu, ww = np.nonzero(S <= best + tol)
            for u, w in zip(uu, ww):
                cands.append((int(u), int(g[w]), 1, int(w)))
        v, target, kind, other = min(cands)
        delta = Dr[v, target] if kind == 0 else S[v, other]
        if kind == 0:
            relocate(v, target)
        else:
            src = int(g[v])
            relocate(v, target)
            relocate(other, src)
        value += float(delta)
        moves += 1
    return SearchResult(g, value, moves)


def random_start(p: _Problem, rng: np.random.Generator) -> np.ndarray:
    g = rng.integers(0, p.m, size=p.n)
    return np.where(p.free, g, p.frozen_pos)
