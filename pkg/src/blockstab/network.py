"""Publication records, period splitting and co-authorship network construction."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import EmptyNetworkError, InvalidPeriodError, ParseError, UndefinedDensityError

REQUIRED_COLUMNS = ("pub_id", "author_id", "year")


@dataclass(frozen=True)
class PublicationRecord:
    pub_id: str
    author_ids: frozenset
    year: int
    discipline: str | None = None

    def __post_init__(self):
        if not self.author_ids:
            raise ValueError(f"publication {self.pub_id!r} has no authors")


@dataclass(frozen=True)
class PeriodSpec:
    label: str
    start_year: int
    end_year: int

    def __post_init__(self):
        if self.start_year > self.end_year:
            raise InvalidPeriodError(
                f"period {self.label!r}: start {self.start_year} > end {self.end_year}"
            )

    def contains(self, year: int) -> bool:
        return self.start_year <= year <= self.end_year


def validate_periods(periods: Sequence[PeriodSpec]) -> list[PeriodSpec]:
    """Reject overlapping or unordered period lists."""
    periods = list(periods)
    labels = [p.label for p in periods]
    if len(set(labels)) != len(labels):
        raise InvalidPeriodError(f"duplicate period labels in {labels}")
    for prev, cur in zip(periods, periods[1:]):
        if cur.start_year <= prev.end_year:
            raise InvalidPeriodError(
                f"periods {prev.label!r} and {cur.label!r} overlap or are out of order"
            )
    return periods


@dataclass(frozen=True, eq=False)
class Network:
    """Undirected loop-free co-authorship network.

    ``adjacency`` is binary; ``weights`` counts shared publications and is
    positive exactly where ``adjacency`` is 1.
    """

    vertices: tuple
    adjacency: np.ndarray
    weights: np.ndarray | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int8)
        n = len(self.vertices)
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} does not match {n} vertices")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if n and np.any(np.diagonal(adj)):
            raise ValueError("self-loops are not allowed")
        if np.any((adj != 0) & (adj != 1)):
            raise ValueError("adjacency must be binary")
        adj.setflags(write=False)
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "adjacency", adj)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.int64)
            if w.shape != adj.shape or not np.array_equal(w, w.T):
                raise ValueError("weights must be a symmetric matrix matching adjacency")
            if np.any(w < 0) or not np.array_equal(w > 0, adj == 1):
                raise ValueError("weights must be positive exactly on edges")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        index = {v: i for i, v in enumerate(self.vertices)}
        if len(index) != n:
            raise ValueError("duplicate vertex IDs")
        object.__setattr__(self, "_index", index)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def index(self, vertex) -> int:
        return self._index[vertex]

    def __contains__(self, vertex) -> bool:
        return vertex in self._index

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1, dtype=np.int64)

    def edges(self) -> list[tuple[int, int, int]]:
        """``(i, j, weight)`` triples with ``i < j``; weight 1 when unweighted."""
        iu, ju = np.nonzero(np.triu(self.adjacency, k=1))
        if self.weights is None:
            return [(int(i), int(j), 1) for i, j in zip(iu, ju)]
        return [(int(i), int(j), int(self.weights[i, j])) for i, j in zip(iu, ju)]

    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        if self.vertices != other.vertices or not np.array_equal(self.adjacency, other.adjacency):
            return False
        if (self.weights is None) != (other.weights is None):
            return False
        return self.weights is None or np.array_equal(self.weights, other.weights)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"vertices": list(self.vertices), "edges": [list(e) for e in self.edges()]}

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        vertices = list(data["vertices"])
        n = len(vertices)
        adj = np.zeros((n, n), dtype=np.int8)
        w = np.zeros((n, n), dtype=np.int64)
        for i, j, weight in data["edges"]:
            if not 0 <= i < j < n:
                raise ValueError(f"bad edge indices ({i}, {j})")
            adj[i, j] = adj[j, i] = 1
            w[i, j] = w[j, i] = weight
        return cls(tuple(vertices), adj, w)

    @classmethod
    def from_edges(cls, vertices: Sequence, edges: Iterable[tuple]) -> "Network":
        """Build an unweighted network from vertex-ID pairs."""
        vertices = tuple(vertices)
        index = {v: i for i, v in enumerate(vertices)}
        adj = np.zeros((len(vertices), len(vertices)), dtype=np.int8)
        for u, v in edges:
            i, j = index[u], index[v]
            if i == j:
                raise ValueError(f"self-loop on {u!r}")
            adj[i, j] = adj[j, i] = 1
        return cls(vertices, adj)


def _sniff_delimiter(header: str) -> str:
    if "\t" in header:
        return "\t"
    if "," in header:
        return ","
    raise ParseError("header must be comma- or tab-delimited", line=1)


def parse_publications(stream: TextIO | str) -> list[PublicationRecord]:
    """Read one-row-per-authorship delimited text into publication records.

    The header must contain ``pub_id``, ``author_id`` and ``year``; an
    optional ``discipline`` column tags each record. Duplicate
    (pub_id, author_id) rows are collapsed.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    header_line = stream.readline()
    if not header_line.strip():
        raise ParseError("missing header row", line=1)
    delimiter = _sniff_delimiter(header_line)
    header = [h.strip() for h in next(csv.reader([header_line], delimiter=delimiter))]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"header lacks required columns {missing}", line=1)
    col = {name: header.index(name) for name in header}
    has_discipline = "discipline" in col

    authors: dict[str, set] = {}
    years: dict[str, int] = {}
    disciplines: dict[str, str | None] = {}
    order: list[str] = []
    reader = csv.reader(stream, delimiter=delimiter)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        pub = row[col["pub_id"]].strip()
        author = row[col["author_id"]].strip()
        year_text = row[col["year"]].strip()
        if not pub or not author or not year_text:
            raise ParseError("empty pub_id, author_id or year", line=lineno)
        try:
            year = int(year_text)
        except ValueError:
            raise ParseError(f"year {year_text!r} is not an integer", line=lineno) from None
        disc = (row[col["discipline"]].strip() or None) if has_discipline else None
        if pub not in authors:
            authors[pub] = set()
            years[pub] = year
            disciplines[pub] = disc
            order.append(pub)
        else:
            if years[pub] != year:
                raise ParseError(
                    f"publication {pub!r} has conflicting years {years[pub]} and {year}",
                    line=lineno,
                )
            if disciplines[pub] != disc:
                raise ParseError(f"publication {pub!r} has conflicting disciplines", line=lineno)
        authors[pub].add(author)
    return [PublicationRecord(p, frozenset(authors[p]), years[p], disciplines[p]) for p in order]


def build_network(
    records: Iterable[PublicationRecord],
    period: PeriodSpec,
    roster: set | frozenset | None = None,
) -> Network:
    """Co-authorship network of authors publishing within ``period``.

    With a roster, non-roster co-authors are dropped before ties are formed,
    so an author whose only co-authors are external becomes an isolate.
    Vertices are sorted by ID.
    """
    members: set = set()
    pair_counts: dict[tuple, int] = {}
    for rec in records:
        if not period.contains(rec.year):
            continue
        authors = rec.author_ids if roster is None else rec.author_ids & roster
        members.update(authors)
        for u, v in itertools.combinations(sorted(authors), 2):
            pair_counts[(u, v)] = pair_counts.get((u, v), 0) + 1
    if not members:
        raise EmptyNetworkError(f"no authors publish in period {period.label!r}")
    vertices = tuple(sorted(members))
    index = {v: i for i, v in enumerate(vertices)}
    n = len(vertices)
    adj = np.zeros((n, n), dtype=np.int8)
    w = np.zeros((n, n), dtype=np.int64)
    for (u, v), count in pair_counts.items():
        i, j = index[u], index[v]
        adj[i, j] = adj[j, i] = 1
        w[i, j] = w[j, i] = count
    return Network(vertices, adj, w)


def density(net: Network) -> float:
    """Share of realised ties among all possible ties."""
    n = net.n
    if n < 2:
        raise UndefinedDensityError(f"density needs at least 2 vertices, got {n}")
    return 2.0 * net.n_edges() / (n * (n - 1))


def isolates(net: Network) -> set:
    deg = net.degrees()
    return {net.vertices[i] for i in np.flatnonzero(deg == 0)}


def induced_subnetwork(net: Network, keep) -> Network:
    """Restrict ``net`` to ``keep``, preserving the original vertex order."""
    keep = set(keep)
    unknown = keep - set(net.vertices)
    if unknown:
        raise KeyError(f"vertices not in network: {sorted(map(str, unknown))}")
    idx = np.array([i for i, v in enumerate(net.vertices) if v in keep], dtype=np.intp)
    sub = net.adjacency[np.ix_(idx, idx)]
    weights = None if net.weights is None else net.weights[np.ix_(idx, idx)]
    return Network(tuple(net.vertices[i] for i in idx), sub, weights)


def dump_network(net: Network, meta: dict | None = None) -> str:
    doc = net.to_dict()
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=1) + "\n"


def load_network(text: str) -> Network:
    return Network.from_dict(json.loads(text))
