"""Stability of cores between two periods: Rand/Wallace index family.

Flat partitions are plain ``{unit: label}`` mappings. ``a, b, c, d`` count
unordered unit pairs that are together in both partitions, together only in
the first, together only in the second, and apart in both.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import PartitionMismatchError, UndefinedAdjustmentError, UndefinedIndexError
from .partition import CORE, Partition

DEFAULT_REPLICATES = 5000
DEFAULT_SEED = 20100101

BOTH = "both"
NEWCOMERS_ONLY = "newcomers_only"
DEPARTURES_ONLY = "departures_only"
MODES = (BOTH, NEWCOMERS_ONLY, DEPARTURES_ONLY)

CORES_SCOPE = "cores"
FULL_SCOPE = "full"

INDEX_NAMES = ("ARI", "AWI_split", "AWI_merge",
               "MARI1", "MAWIS1", "MAWIM1",
               "MARI2", "MAWIS2", "MAWIM2")
# column headers as conventionally printed
INDEX_HEADERS = ("ARI", "AWI'", "AWI''", "MARI1", "MAWIS1", "MAWIM1", "MARI2", "MAWIS2", "MAWIM2")

_NEW_CLUSTER = ("__synthetic__", "newcomers")
_DEP_CLUSTER = ("__synthetic__", "departures")


@dataclass(frozen=True)
class PairCounts:
    a: int
    b: int
    c: int
    d: int

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass(frozen=True)
class TemporalPair:
    p1: Partition
    p2: Partition
    newcomers: frozenset
    departures: frozenset
    persistent: frozenset


def align(p1: Partition, p2: Partition) -> TemporalPair:
    v1, v2 = p1.units, p2.units
    return TemporalPair(p1, p2, frozenset(v2 - v1), frozenset(v1 - v2), frozenset(v1 & v2))


def _encode(u: Mapping, v: Mapping, units=None):
    """Integer label arrays for ``u`` and ``v`` over a common unit order."""
    if units is None:
        if set(u) != set(v):
            raise PartitionMismatchError("partitions cover different unit sets")
        units = sorted(u, key=str)
    lu, lv = {}, {}
    x = np.fromiter((lu.setdefault(u[k], len(lu)) for k in units), dtype=np.int64, count=len(units))
    y = np.fromiter((lv.setdefault(v[k], len(lv)) for k in units), dtype=np.int64, count=len(units))
    return x, y, len(lu), len(lv)


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def contingency(u: Mapping, v: Mapping) -> np.ndarray:
    x, y, r, c = _encode(u, v)
    return np.bincount(x * c + y, minlength=r * c).reshape(r, c)


def pair_counts(u: Mapping, v: Mapping) -> PairCounts:
    table = contingency(u, v)
    n = int(table.sum())
    a = int(_comb2(table).sum())
    same_u = int(_comb2(table.sum(axis=1)).sum())
    same_v = int(_comb2(table.sum(axis=0)).sum())
    b = same_u - a
    c = same_v - a
    d = n * (n - 1) // 2 - a - b - c
    return PairCounts(a, b, c, d)


def _ratio(num, den, what):
    if den == 0:
        raise UndefinedIndexError(f"{what} undefined: zero denominator")
    return num / den


def rand_index(pc: PairCounts) -> float:
    return _ratio(pc.a + pc.d, pc.total, "Rand index")


def wallace_split(pc: PairCounts) -> float:
    """Share of first-period together-pairs still together (penalises splits)."""
    return _ratio(pc.a, pc.a + pc.b, "Wallace index (split)")


def wallace_merge(pc: PairCounts) -> float:
    """Share of second-period together-pairs already together (penalises merges)."""
    return _ratio(pc.a, pc.a + pc.c, "Wallace index (merge)")


def adjusted_rand(u: Mapping, v: Mapping) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    table = contingency(u, v)
    n = int(table.sum())
    if n < 2:
        raise UndefinedIndexError("adjusted Rand index needs at least 2 units")
    index = int(_comb2(table).sum())
    sum_u = int(_comb2(table.sum(axis=1)).sum())
    sum_v = int(_comb2(table.sum(axis=0)).sum())
    # exact rational arithmetic; rounding happens once at the end
    expected = Fraction(sum_u * sum_v, n * (n - 1) // 2)
    maximum = Fraction(sum_u + sum_v, 2)
    if maximum == expected:
        if sum_u == sum_v == index:
            return 1.0
        raise UndefinedIndexError("adjusted Rand index undefined for trivial partitions")
    return float((index - expected) / (maximum - expected))


# --- flattening and modified partitions -------------------------------------------------


@dataclass(frozen=True)
class ComparisonSides:
    """Flat partitions for each period plus the turnover sets between them."""

    u: dict
    v: dict
    newcomers: frozenset
    departures: frozenset

    @property
    def persistent(self) -> frozenset:
        return frozenset(self.u) & frozenset(self.v)


def _flat(p: Partition, cores_only: bool) -> dict:
    if not p.roles:
        return dict(p.assignment)
    if cores_only:
        return {v: p.roles[c].index for v, c in p.assignment.items() if p.roles[c].kind == CORE}
    return {v: str(p.roles[c]) for v, c in p.assignment.items()}


def comparison_sides(tp: TemporalPair, scope: str = CORES_SCOPE) -> ComparisonSides:
    """Derive the flat partitions the indices compare.

    In ``cores`` scope each core is a cluster and anyone outside the cores
    of a period is absent from that side, so units entering or leaving the
    cores play the part of newcomers and departures. In ``full`` scope all
    clusters (semi-periphery and periphery included) are compared and only
    literal newcomers and departures count as turnover.
    """
    if scope not in (CORES_SCOPE, FULL_SCOPE):
        raise ValueError(f"unknown scope {scope!r}")
    u = _flat(tp.p1, scope == CORES_SCOPE)
    v = _flat(tp.p2, scope == CORES_SCOPE)
    return ComparisonSides(u, v, frozenset(set(v) - set(u)), frozenset(set(u) - set(v)))


@dataclass(frozen=True)
class ModifiedPartitionPair:
    u_prime: dict
    v_prime: dict
    mode: str


def modified_partitions(sides: ComparisonSides | TemporalPair, mode: str = BOTH,
                        scope: str = CORES_SCOPE) -> ModifiedPartitionPair:
    """Add a synthetic newcomer cluster to U and a departure cluster to V.

    Included newcomers sit in the newcomer cluster on the first-period side
    and in their real cluster on the second; included departures keep their
    first-period cluster and join the departure cluster on the second side.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if isinstance(sides, TemporalPair):
        sides = comparison_sides(sides, scope)
    u, v = sides.u, sides.v
    persistent = sides.persistent
    up = {x: u[x] for x in u if x in persistent}
    vp = {x: v[x] for x in up}
    if mode in (BOTH, NEWCOMERS_ONLY):
        for x in sorted(sides.newcomers, key=str):
            up[x] = _NEW_CLUSTER
            vp[x] = v[x]
    if mode in (BOTH, DEPARTURES_ONLY):
        for x in sorted(sides.departures, key=str):
            up[x] = u[x]
            vp[x] = _DEP_CLUSTER
    return ModifiedPartitionPair(up, vp, mode)


# --- Monte-Carlo chance correction ------------------------------------------------------


def _vector_index(fn):
    """Vectorised counterpart of a scalar index over arrays of pair counts."""
    if fn is rand_index:
        return lambda a, b, c, d: (a + d) / (a + b + c + d)
    if fn is wallace_split:
        return lambda a, b, c, d: a / (a + b)
    if fn is wallace_merge:
        return lambda a, b, c, d: a / (a + c)
    return None


@dataclass(frozen=True)
class NullSample:
    """Pair counts of independently permuted partitions (cluster sizes kept)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    replicates: int
    seed: int

    def counts(self, r: int) -> PairCounts:
        return PairCounts(int(self.a[r]), int(self.b[r]), int(self.c[r]), int(self.d[r]))


def null_pair_counts(u: Mapping, v: Mapping, replicates: int, seed: int,
                     chunk: int = 2048) -> NullSample:
    """Pair counts for ``replicates`` random relabelings of both partitions.

    Each replicate permutes the unit labels of ``u`` and ``v`` independently,
    which keeps every cluster size (synthetic clusters included).
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    x, y, r, c = _encode(u, v)
    n = len(x)
    same_u = int(_comb2(np.bincount(x, minlength=r)).sum())
    same_v = int(_comb2(np.bincount(y, minlength=c)).sum())
    total = n * (n - 1) // 2
    rng = np.random.default_rng(seed)
    a = np.empty(replicates, dtype=np.int64)
    chunk = max(1, min(chunk, 4_000_000 // (r * c + n)))
    done = 0
    while done < replicates:
        size = min(chunk, replicates - done)
        px = rng.permuted(np.broadcast_to(x, (size, n)), axis=1)
        py = rng.permuted(np.broadcast_to(y, (size, n)), axis=1)
        codes = px * c + py + (np.arange(size) * (r * c))[:, None]
        tables = np.bincount(codes.ravel(), minlength=size * r * c).reshape(size, r * c)
        a[done:done + size] = _comb2(tables).sum(axis=1)
        done += size
    b = same_u - a
    cc = same_v - a
    d = total - a - b - cc
    return NullSample(a, b, cc, d, replicates, seed)


@dataclass(frozen=True)
class Adjusted:
    value: float
    raw: float
    expected: float
    replicates_used: int
    replicates_skipped: int


def _null_mean(raw_index: Callable, null: NullSample):
    vec = _vector_index(raw_index)
    if vec is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = vec(null.a.astype(float), null.b.astype(float),
                       null.c.astype(float), null.d.astype(float))
        ok = np.isfinite(vals)
        vals = vals[ok]
    else:
        out = []
        for r in range(null.replicates):
            try:
                out.append(raw_index(null.counts(r)))
            except UndefinedIndexError:
                pass
        vals = np.asarray(out, dtype=float)
    skipped = null.replicates - len(vals)
    if len(vals) == 0:
        raise UndefinedAdjustmentError("index undefined in every Monte-Carlo replicate")
    return float(np.mean(vals)), len(vals), skipped


def adjust(raw: float, expected: float) -> float:
    if math.isclose(expected, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise UndefinedAdjustmentError("expected index value is 1; adjustment undefined")
    return (raw - expected) / (1.0 - expected)


def mc_adjust_detail(raw_index: Callable, u: Mapping, v: Mapping, replicates: int = DEFAULT_REPLICATES,
                     seed: int = DEFAULT_SEED, null: NullSample | None = None) -> Adjusted:
    raw = raw_index(pair_counts(u, v))
    if null is None:
        null = null_pair_counts(u, v, replicates, seed)
    expected, used, skipped = _null_mean(raw_index, null)
    return Adjusted(adjust(raw, expected), raw, expected, used, skipped)


def mc_adjust(raw_index: Callable, u: Mapping, v: Mapping, replicates: int = DEFAULT_REPLICATES,
              seed: int = DEFAULT_SEED) -> float:
    """``(raw - E) / (1 - E)`` with ``E`` the mean index under the permutation null."""
    return mc_adjust_detail(raw_index, u, v, replicates, seed).value


def expected_pairs_together(u: Mapping, v: Mapping) -> float:
    """Exact null expectation of ``a`` under the fixed-size permutation model."""
    pc = pair_counts(u, v)
    return (pc.a + pc.b) * (pc.a + pc.c) / pc.total


# --- report -----------------------------------------------------------------------------


@dataclass
class StabilityReport:
    values: dict  # index name -> adjusted value or None
    raw: dict  # index name -> unadjusted value or None
    counts: dict  # comparison name -> PairCounts or None
    replicates: int
    seed: int
    scope: str
    units: dict = field(default_factory=dict)

    def row(self) -> list:
        return [self.values[name] for name in INDEX_NAMES]

    def to_dict(self) -> dict:
        return {
            "indices": {k: self.values[k] for k in INDEX_NAMES},
            "raw": {k: self.raw[k] for k in INDEX_NAMES},
            "pair_counts": {k: (None if pc is None else [pc.a, pc.b, pc.c, pc.d])
                            for k, pc in self.counts.items()},
            "units": self.units,
            "monte_carlo": {"replicates": self.replicates, "seed": self.seed},
            "scope": self.scope,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def _safe(fn, *args):
    try:
        return fn(*args)
    except (UndefinedIndexError, UndefinedAdjustmentError, PartitionMismatchError):
        return None


def _counts_or_none(u, v):
    return pair_counts(u, v) if len(u) >= 2 else None


def stability_report(tp: TemporalPair, replicates: int = DEFAULT_REPLICATES,
                     seed: int = DEFAULT_SEED, scope: str = CORES_SCOPE) -> StabilityReport:
    """All nine indices; undefined ones are ``None``, never 0.

    ARI and the adjusted Wallace pair compare persistent units only. Variant
    1 of the modified indices counts newcomers (into-cores units in cores
    scope), variant 2 departures (out-of-cores units). The Wallace indices
    and all modified indices are Monte-Carlo adjusted with ``replicates``
    permutations drawn from ``seed``.
    """
    sides = comparison_sides(tp, scope)
    keep = sides.persistent
    u0 = {x: sides.u[x] for x in sides.u if x in keep}
    v0 = {x: sides.v[x] for x in u0}
    values, raw, counts, units = {}, {}, {}, {}

    counts["persistent"] = _counts_or_none(u0, v0)
    units["persistent"] = len(u0)
    values["ARI"] = _safe(adjusted_rand, u0, v0)
    raw["ARI"] = _safe(rand_index, counts["persistent"]) if counts["persistent"] else None

    def adjusted_family(u, v, names):
        null = None
        if len(u) >= 2:
            null = null_pair_counts(u, v, replicates, seed)
        for name, fn in names:
            if null is None:
                values[name] = raw[name] = None
                continue
            raw[name] = _safe(fn, pair_counts(u, v))
            if raw[name] is None:
                values[name] = None
                continue
            det = _safe(mc_adjust_detail, fn, u, v, replicates, seed, null)
            values[name] = None if det is None else det.value

    adjusted_family(u0, v0, [("AWI_split", wallace_split), ("AWI_merge", wallace_merge)])
    for label, mode in (("1", NEWCOMERS_ONLY), ("2", DEPARTURES_ONLY)):
        mp = modified_partitions(sides, mode)
        counts[f"modified{label}"] = _counts_or_none(mp.u_prime, mp.v_prime)
        units[f"modified{label}"] = len(mp.u_prime)
        adjusted_family(mp.u_prime, mp.v_prime, [
            (f"MARI{label}", rand_index),
            (f"MAWIS{label}", wallace_split),
            (f"MAWIM{label}", wallace_merge),
        ])
    units["newcomers"] = len(sides.newcomers)
    units["departures"] = len(sides.departures)
    return StabilityReport(values, raw, counts, replicates, seed, scope, units)
