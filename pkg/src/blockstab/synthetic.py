"""Planted core/semi-periphery/periphery networks and publication corpora."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .network import Network
from .partition import PERI, SEMI, Partition, Role


@dataclass
class PlantedNetwork:
    net: Network
    truth: Partition
    semi_ties: int


def planted_network(core_sizes, n_semi: int, n_isolates: int, rng: np.random.Generator,
                    max_semi_ties: int = 2, noise_edges: int = 0) -> PlantedNetwork:
    """Disjoint cliques plus sparse semi-periphery vertices plus isolates.

    Each semi-periphery vertex gets 1..``max_semi_ties`` ties, each into a
    different core, so no core is ever cheaper for it than the
    semi-periphery. ``noise_edges`` adds random ties between different
    cores. Vertex IDs are shuffled so the planted order is not the vertex
    order.
    """
    core_sizes = list(core_sizes)
    n_core = sum(core_sizes)
    n = n_core + n_semi + n_isolates
    ids = [f"r{i:04d}" for i in rng.permutation(n)]
    adj = np.zeros((n, n), dtype=np.int8)
    groups: dict[Role, list] = {}
    start = 0
    core_ranges = []
    for c, size in enumerate(core_sizes, start=1):
        members = list(range(start, start + size))
        core_ranges.append(members)
        for i in members:
            for j in members:
                if i != j:
                    adj[i, j] = 1
        groups[Role.core(c)] = [ids[i] for i in members]
        start += size
    semi = list(range(start, start + n_semi))
    ties = 0
    for s in semi:
        want = int(rng.integers(1, max_semi_ties + 1))
        want = min(want, len(core_ranges))
        chosen = rng.choice(len(core_ranges), size=want, replace=False)
        for c in chosen:
            t = int(rng.choice(core_ranges[c]))
            adj[s, t] = adj[t, s] = 1
            ties += 1
    for _ in range(noise_edges):
        if len(core_ranges) < 2:
            break
        a, b = rng.choice(len(core_ranges), size=2, replace=False)
        i, j = int(rng.choice(core_ranges[a])), int(rng.choice(core_ranges[b]))
        adj[i, j] = adj[j, i] = 1
    if n_semi:
        groups[SEMI] = [ids[i] for i in semi]
    if n_isolates:
        groups[PERI] = [ids[i] for i in range(start + n_semi, n)]
    order = np.argsort(ids)
    net = Network(tuple(ids[i] for i in order), adj[np.ix_(order, order)])
    return PlantedNetwork(net, Partition.from_roles(groups), ties)


def random_partition_sizes(units, sizes, rng: np.random.Generator, labels=None) -> dict:
    """Assign ``units`` uniformly at random to clusters with the given sizes."""
    units = list(units)
    if sum(sizes) != len(units):
        raise ValueError("sizes must sum to the number of units")
    labels = list(labels) if labels is not None else list(range(1, len(sizes) + 1))
    perm = rng.permutation(len(units))
    out, pos = {}, 0
    for lab, size in zip(labels, sizes):
        for i in perm[pos:pos + size]:
            out[units[i]] = lab
        pos += size
    return out


# --- corpus -----------------------------------------------------------------------------


@dataclass
class DisciplinePlan:
    name: str
    n_researchers: int
    k: int
    field: str | None = None


def _period_structure(rng, pool, k, previous=None, dissolve=0.2):
    """Pick cores (cliques), semi-periphery and solo authors from ``pool``.

    With ``previous`` cores, surviving members stay together unless the core
    dissolves; dissolved or too-small cores are replaced by fresh ones.
    """
    pool = list(pool)
    alive = set(pool)
    cores = []
    for core in previous or []:
        kept = [a for a in core if a in alive]
        if len(kept) >= 3 and rng.random() >= dissolve and len(cores) < k:
            cores.append(kept)
    used = {a for c in cores for a in c}
    free = [a for a in pool if a not in used]
    rng.shuffle(free)
    pos = 0
    while len(cores) < k and pos < len(free):
        size = int(rng.integers(4, 9))
        cores.append(free[pos:pos + size])
        pos += size
    rest = free[pos:]
    n_semi = int(len(rest) * 0.55)
    return cores, rest[:n_semi], rest[n_semi:]


def planted_corpus(plans, periods, rng: np.random.Generator, turnover: float = 0.3, growth: float = 0.1):
    """Publication rows ``(pub_id, author_id, year, discipline)``.

    Per discipline and period: each core publishes one whole-team
    publication plus, with probability 1/2, one per member pair;
    semi-periphery researchers co-author one or two publications with members
    of different cores, and the remainder publish
    alone. ``turnover`` of each period's researchers is replaced by
    newcomers in the next period, and the active population grows by
    ``growth``.
    """
    rows = []
    pub = 0
    for plan in plans:
        roster = [f"{plan.name[:3].upper()}{i:05d}" for i in range(plan.n_researchers * (2 + len(periods)))]
        active = roster[:plan.n_researchers]
        fresh = iter(roster[plan.n_researchers:])
        cores = None
        for p_idx, period in enumerate(periods):
            if p_idx:
                n_out = int(turnover * len(active))
                leave = set(rng.choice(active, size=n_out, replace=False).tolist())
                grow = int(growth * len(active))
                active = [a for a in active if a not in leave] + [next(fresh) for _ in range(n_out + grow)]
            cores, semi, solo = _period_structure(rng, active, plan.k, cores)
            years = list(range(period.start_year, period.end_year + 1))

            def add(authors):
                nonlocal pub
                pub += 1
                y = int(rng.choice(years))
                pid = f"P{pub:07d}"
                for a in authors:
                    rows.append((pid, a, y, plan.name))

            for core in cores:
                add(core)
                for i in range(len(core)):
                    for j in range(i + 1, len(core)):
                        if rng.random() < 0.5:
                            add([core[i], core[j]])
            for s in semi:
                picks = rng.choice(len(cores), size=min(len(cores), int(rng.integers(1, 3))), replace=False)
                for c in picks:
                    add([s, cores[c][int(rng.integers(len(cores[c])))]])
            for a in solo:
                add([a])
    return rows


def corpus_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pub_id", "author_id", "year", "discipline"])
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
