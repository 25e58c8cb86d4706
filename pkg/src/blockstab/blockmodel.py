"""Direct blockmodeling of multi-core / semi-periphery / periphery structure."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, InvalidImageError, PartitionMismatchError
from .network import Network, induced_subnetwork, isolates
from .partition import CORE, PERI, PERIPHERY, SEMI, SEMI_PERIPHERY, Partition, Role
from .search import SearchResult, _Problem, descend, random_start

log = logging.getLogger(__name__)

COMPLETE = "complete"
NULL = "null"
DEFAULT_SEED = 20100101
DEFAULT_BRIDGING_THRESHOLD = 0.8


@dataclass(frozen=True, eq=False)
class ImageSpec:
    """Ideal block types over positions ``core 1..k`` (+ semi-periphery).

    ``complete[r, s]`` is True for complete blocks and False for null
    blocks; ``weights[r, s]`` scales each block's inconsistencies.
    """

    k_cores: int
    has_semi_periphery: bool
    complete: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = self.k_cores + int(self.has_semi_periphery)
        comp = np.array(self.complete, dtype=bool)
        w = np.array(self.weights, dtype=float)
        if self.k_cores < 1:
            raise InvalidImageError("an image needs at least one core")
        if comp.shape != (m, m) or w.shape != (m, m):
            raise InvalidImageError(f"block matrices must be {m}x{m}")
        if not np.array_equal(comp, comp.T) or not np.array_equal(w, w.T):
            raise InvalidImageError("undirected networks need a symmetric image")
        if np.any(w < 0):
            raise InvalidImageError("block weights must be non-negative")
        comp.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "complete", comp)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.k_cores + int(self.has_semi_periphery)

    def positions(self) -> list[Role]:
        roles = [Role.core(i) for i in range(1, self.k_cores + 1)]
        if self.has_semi_periphery:
            roles.append(SEMI)
        return roles

    def position_of(self, role: Role) -> int:
        if role.is_core:
            if not 1 <= role.index <= self.k_cores:
                raise InvalidImageError(f"{role} outside image with {self.k_cores} cores")
            return role.index - 1
        if role.kind == SEMI_PERIPHERY and self.has_semi_periphery:
            return self.k_cores
        raise InvalidImageError(f"role {role} has no position in this image")

    def block_type(self, r: int, s: int) -> str:
        return COMPLETE if self.complete[r, s] else NULL

    def is_core_symmetric(self) -> bool:
        """True when any relabeling of cores maps the image onto itself."""
        k = self.k_cores
        cc, cw = self.complete[:k, :k], self.weights[:k, :k]
        off = ~np.eye(k, dtype=bool)
        diag_ok = len(set(zip(np.diagonal(cc), np.diagonal(cw)))) == 1
        off_ok = k < 2 or len(set(zip(cc[off], cw[off]))) == 1
        semi_ok = True
        if self.has_semi_periphery:
            semi_ok = len(set(zip(self.complete[k, :k], self.weights[k, :k]))) == 1
        return diag_ok and off_ok and semi_ok


def default_image(
    k: int,
    bridging: Iterable[tuple[int, int]] = (),
    semi_periphery: bool = True,
    semi_weight: float = 1.0,
) -> ImageSpec:
    """Complete core diagonals, null everywhere else, plus bridging blocks.

    ``bridging`` lists core-index pairs (1-based) whose off-diagonal block is
    complete.
    """
    if k < 1:
        raise InvalidImageError(f"k must be positive, got {k}")
    m = k + int(semi_periphery)
    comp = np.zeros((m, m), dtype=bool)
    comp[np.arange(k), np.arange(k)] = True
    for i, j in bridging:
        if not (1 <= i <= k and 1 <= j <= k) or i == j:
            raise InvalidImageError(f"invalid bridging pair ({i}, {j}) for k={k}")
        comp[i - 1, j - 1] = comp[j - 1, i - 1] = True
    w = np.ones((m, m))
    if semi_periphery:
        w[k, :] = w[:, k] = semi_weight
    return ImageSpec(k, semi_periphery, comp, w)


def _positions(net: Network, p: Partition, img: ImageSpec):
    """Position per vertex of ``net``; -1 for periphery vertices."""
    missing = [v for v in net.vertices if v not in p.assignment]
    if missing:
        raise PartitionMismatchError(f"vertices missing from partition: {missing[:5]}")
    extra = set(p.assignment) - set(net.vertices)
    if extra:
        raise PartitionMismatchError(f"partition has vertices not in network: {sorted(extra)[:5]}")
    if not p.roles:
        raise PartitionMismatchError("criterion needs a partition with role labels")
    pos = np.empty(net.n, dtype=np.int64)
    for i, v in enumerate(net.vertices):
        role = p.roles[p.assignment[v]]
        pos[i] = -1 if role.kind == PERIPHERY else img.position_of(role)
    return pos


def criterion(net: Network, p: Partition, img: ImageSpec):
    """Weighted count of block inconsistencies against the image.

    Every unordered vertex pair is counted once. A complete block is
    charged for each absent tie, a null block for each present tie.
    Periphery vertices sit outside all blocks. Returns the total and a map
    ``(role_r, role_s) -> inconsistencies`` for ``r <= s``.
    """
    pos = _positions(net, p, img)
    keep = pos >= 0
    a = net.adjacency[np.ix_(keep, keep)].astype(np.int64)
    g = pos[keep]
    m = img.m
    onehot = np.zeros((len(g), m), dtype=np.int64)
    onehot[np.arange(len(g)), g] = 1
    ties = onehot.T @ a @ onehot
    sizes = onehot.sum(axis=0)
    roles = img.positions()
    value = 0.0
    blocks = {}
    for r in range(m):
        for s in range(r, m):
            if r == s:
                cells = sizes[r] * (sizes[r] - 1) // 2
                present = ties[r, r] // 2
            else:
                cells = sizes[r] * sizes[s]
                present = ties[r, s]
            inc = int(cells - present) if img.complete[r, s] else int(present)
            blocks[(roles[r], roles[s])] = inc
            value += img.weights[r, s] * inc
    return _as_number(value), blocks


def _as_number(x: float):
    return int(round(x)) if abs(x - round(x)) < 1e-9 else float(x)


def strip_periphery(net: Network):
    """Split off isolates; they form the periphery and are never searched."""
    peri = isolates(net)
    if not peri:
        return net, set()
    return induced_subnetwork(net, set(net.vertices) - peri), peri


def extract_exact_cores(net: Network, min_size: int = 2) -> list[set]:
    """Cliques of pairwise structurally equivalent vertices.

    Two adjacent vertices are structurally equivalent exactly when their
    closed neighborhoods coincide, and that relation is transitive, so the
    groups are the classes of identical closed neighborhoods (size >=
    ``min_size``). Returned in order of their first vertex.
    """
    if min_size < 2:
        raise ValueError("min_size must be at least 2")
    closed = net.adjacency.copy()
    np.fill_diagonal(closed, 1)
    groups: dict[bytes, list[int]] = {}
    for i in range(net.n):
        groups.setdefault(closed[i].tobytes(), []).append(i)
    out = [g for g in groups.values() if len(g) >= min_size]
    out.sort(key=lambda g: g[0])
    return [{net.vertices[i] for i in g} for g in out]


@dataclass
class BlockmodelFit:
    partition: Partition
    criterion_value: float
    block_inconsistencies: dict
    restarts_run: int
    seed: int
    image: ImageSpec | None = None
    bridging_pairs: frozenset = frozenset()


def default_restarts(n: int) -> int:
    return 50 if n <= 300 else 20


def _run_restart(args):
    problem, start, seed = args
    if start is None:
        start = random_start(problem, np.random.default_rng(seed))
    return descend(problem, start)


def _canonical(g: np.ndarray, k: int) -> np.ndarray:
    """Renumber core positions by first occurrence; semi-periphery keeps position k."""
    mapping = {}
    out = g.copy()
    for i, pos in enumerate(g):
        if pos < k and pos not in mapping:
            mapping[pos] = len(mapping)
    for i, pos in enumerate(g):
        if pos < k:
            out[i] = mapping[pos]
    return out


def local_search(
    net: Network,
    img: ImageSpec,
    frozen: Sequence[tuple[Iterable, int]] = (),
    restarts: int | None = None,
    seed: int = DEFAULT_SEED,
    initial: Partition | None = None,
    workers: int = 1,
) -> BlockmodelFit:
    """Multi-start best-improvement search over cores + semi-periphery.

    Restart ``r`` draws its random start from ``seed + r``. ``frozen`` pins
    vertex sets to core indices. ``initial``, when given, is descended from
    as an extra start. The best restart wins; ties go to the
    lexicographically smallest (canonical) assignment vector.
    """
    n = net.n
    if restarts is None:
        restarts = default_restarts(n)
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    frozen_pos = np.full(n, -1, dtype=np.int64)
    seen_idx = set()
    for members, core_idx in frozen:
        if core_idx in seen_idx or not 1 <= core_idx <= img.k_cores:
            raise InfeasibleError(f"frozen core index {core_idx} invalid or repeated")
        seen_idx.add(core_idx)
        for v in members:
            i = net.index(v)
            if frozen_pos[i] >= 0:
                raise InfeasibleError(f"vertex {v!r} is in more than one frozen set")
            frozen_pos[i] = core_idx - 1
    n_free = int((frozen_pos < 0).sum())
    if img.k_cores > n_free + len(frozen):
        raise InfeasibleError(
            f"k={img.k_cores} cores but only {n_free} free vertices and {len(frozen)} frozen groups"
        )
    problem = _Problem(net.adjacency, img.complete, img.weights, frozen_pos)
    tasks = [(problem, None, seed + r) for r in range(restarts)]
    if initial is not None:
        start = np.array([img.position_of(initial.role_of(v)) for v in net.vertices])
        start = np.where(frozen_pos >= 0, frozen_pos, start)
        tasks.append((problem, start, None))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_restart, tasks))
    else:
        results = [_run_restart(t) for t in tasks]

    symmetric = img.is_core_symmetric()
    best_key, best = None, None
    for res in results:
        g = _canonical(res.assignment, img.k_cores) if symmetric else res.assignment
        key = (round(res.value, 9), tuple(int(x) for x in g))
        if best_key is None or key < best_key:
            best_key, best = key, SearchResult(g, res.value, res.moves)

    roles = img.positions()
    groups: dict[Role, list] = {}
    for i, pos in enumerate(best.assignment):
        groups.setdefault(roles[pos], []).append(net.vertices[i])
    partition = Partition.from_roles(dict(sorted(groups.items())))
    value, blocks = criterion(net, partition, img)
    if abs(value - best.value) > 1e-6:
        raise AssertionError(f"incremental value {best.value} != recomputed {value}")
    return BlockmodelFit(partition, value, blocks, len(tasks), seed, img)


@dataclass
class FitOptions:
    restarts: int | None = None
    seed: int = DEFAULT_SEED
    strip_periphery: bool = True
    freeze_cliques: bool = False
    min_clique_size: int = 2
    semi_weight: float = 1.0
    bridging: tuple = ()
    refit_bridging: bool = False
    bridging_threshold: float = DEFAULT_BRIDGING_THRESHOLD
    workers: int = 1


def fit_blockmodel(net: Network, k: int, opts: FitOptions | None = None) -> BlockmodelFit:
    """Strip periphery, optionally freeze exact cliques, search, merge back.

    With ``refit_bridging`` the fitted cores are checked for dense
    off-diagonal blocks and, if any are found, the search is repeated under
    an image that marks those blocks complete (starting also from the first
    solution).
    """
    opts = opts or FitOptions()
    if k < 1:
        raise InfeasibleError(f"k must be at least 1, got {k}")
    if opts.strip_periphery:
        reduced, peri = strip_periphery(net)
    else:
        reduced, peri = net, set()
    img = default_image(k, opts.bridging, semi_weight=opts.semi_weight)
    restarts = opts.restarts if opts.restarts is not None else default_restarts(net.n)

    if reduced.n == 0 or len(peri) == net.n:
        partition = Partition.from_roles({PERI: sorted(peri, key=net.index)})
        value, blocks = criterion(net, partition, img)
        return BlockmodelFit(partition, value, blocks, 0, opts.seed, img)

    frozen = []
    if opts.freeze_cliques:
        cliques = extract_exact_cores(reduced, opts.min_clique_size)
        cliques.sort(key=lambda c: (-len(c), min(reduced.index(v) for v in c)))
        frozen = [(c, i + 1) for i, c in enumerate(cliques[:k])]

    fit = local_search(reduced, img, frozen, restarts, opts.seed, workers=opts.workers)
    if opts.refit_bridging:
        pairs = detect_bridging_cores(reduced, fit.partition, opts.bridging_threshold)
        if pairs:
            img2 = default_image(k, set(opts.bridging) | pairs, semi_weight=opts.semi_weight)
            frozen2 = _relabel_frozen(frozen, fit.partition)
            fit = local_search(reduced, img2, frozen2, restarts, opts.seed,
                               initial=fit.partition, workers=opts.workers)
            img = img2
    groups: dict[Role, list] = {}
    for cid, members in fit.partition.clusters().items():
        groups[fit.partition.roles[cid]] = members
    if peri:
        groups[PERI] = sorted(peri, key=net.index)
    partition = Partition.from_roles(dict(sorted(groups.items())))
    value, blocks = criterion(net, partition, fit.image)
    pairs = detect_bridging_cores(net, partition, opts.bridging_threshold)
    return BlockmodelFit(partition, value, blocks, fit.restarts_run, opts.seed, fit.image,
                         frozenset(pairs))


def _relabel_frozen(frozen, partition):
    out = []
    for members, _ in frozen:
        role = partition.role_of(next(iter(members)))
        out.append((members, role.index))
    return out


def detect_bridging_cores(net: Network, p: Partition, density_threshold: float = DEFAULT_BRIDGING_THRESHOLD) -> set:
    """Core pairs ``(i, j)``, ``i < j``, whose cross block has density >= threshold."""
    cores = p.cores()
    if len(cores) < 2:
        return set()
    idx = {i: np.array([net.index(v) for v in members]) for i, members in cores.items()}
    pairs = set()
    keys = sorted(idx)
    for a_pos, i in enumerate(keys):
        for j in keys[a_pos + 1:]:
            block = net.adjacency[np.ix_(idx[i], idx[j])]
            if block.mean() >= density_threshold:
                pairs.add((i, j))
    return pairs


def bridging_cores(pairs: Iterable[tuple[int, int]]) -> set:
    """Cores tied densely to at least two other cores."""
    partners: dict[int, set] = {}
    for i, j in pairs:
        partners.setdefault(i, set()).add(j)
        partners.setdefault(j, set()).add(i)
    return {c for c, others in partners.items() if len(others) >= 2}


@dataclass(frozen=True)
class BlockmodelSummary:
    n: int
    n_cores: int
    pct_semi: float
    pct_periphery: float
    avg_core_size: float
    avg_core_size_defined: bool

    def as_row(self) -> dict:
        return {
            "N": self.n,
            "cores": self.n_cores,
            "semi_pct": self.pct_semi,
            "per_pct": self.pct_periphery,
            "avg_core_size": self.avg_core_size if self.avg_core_size_defined else None,
        }


def summarize_blockmodel(p: Partition) -> BlockmodelSummary:
    n = len(p)
    cores = p.cores()
    semi = len(p.members_with(SEMI_PERIPHERY))
    peri = len(p.members_with(PERIPHERY))
    sizes = [len(m) for m in cores.values()]
    defined = bool(sizes)
    pct = (lambda x: 100.0 * x / n) if n else (lambda x: 0.0)
    return BlockmodelSummary(
        n, len(sizes), pct(semi), pct(peri), float(np.mean(sizes)) if defined else 0.0, defined
    )


def blockmodel_matrix_csv(net: Network, p: Partition, header_note: str = "") -> str:
    """Adjacency permuted by cluster (cores, semi-periphery, periphery).

    Row 1 holds vertex IDs, row 2 their cluster labels; each data row starts
    with the vertex ID and its cluster label.
    """
    order_key = {CORE: 0, SEMI_PERIPHERY: 1, PERIPHERY: 2}
    verts = sorted(
        net.vertices,
        key=lambda v: (order_key[p.role_of(v).kind], p.role_of(v).index or 0, net.index(v)),
    )
    idx = [net.index(v) for v in verts]
    sub = net.adjacency[np.ix_(idx, idx)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([header_note, "cluster"] + list(verts))
    w.writerow(["", ""] + [str(p.role_of(v)) for v in verts])
    for v, row in zip(verts, sub):
        w.writerow([v, str(p.role_of(v))] + [int(x) for x in row])
    return buf.getvalue()
