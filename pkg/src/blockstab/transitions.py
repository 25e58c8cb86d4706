"""Flows of researchers between the cores of two periods."""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDiagramError, UndefinedIndexError
from .partition import CORE, PERIPHERY, SEMI_PERIPHERY, Partition
from .stability import TemporalPair

CORES_ONLY = "cores_only"
FULL = "full"

INTO_CORES = "into-cores"
OUT_OF_CORES = "out-of-cores"
NEWCOMERS = "newcomers"
DEPARTURES = "departures"
PSEUDO_ROLES = (INTO_CORES, OUT_OF_CORES, NEWCOMERS, DEPARTURES)

BLACK = "#000000"
GRAY = "#9a9a9a"
SILVER = "#d0d0d0"


@dataclass(frozen=True)
class Group:
    id: object
    role: str
    size: int

    @property
    def pseudo(self) -> bool:
        return self.role in PSEUDO_ROLES

    @property
    def color(self) -> str:
        if self.role == CORE:
            return BLACK
        if self.pseudo:
            return GRAY
        return SILVER


@dataclass(frozen=True, eq=False)
class FlowTable:
    rows: tuple
    cols: tuple
    counts: np.ndarray
    scope: str

    def row_index(self, gid) -> int:
        return [g.id for g in self.rows].index(gid)

    def col_index(self, gid) -> int:
        return [g.id for g in self.cols].index(gid)

    def flow(self, row_id, col_id) -> int:
        return int(self.counts[self.row_index(row_id), self.col_index(col_id)])

    def core_rows(self):
        return [(i, g) for i, g in enumerate(self.rows) if g.role == CORE]

    def core_cols(self):
        return [(j, g) for j, g in enumerate(self.cols) if g.role == CORE]


def _groups(p: Partition, cores_only: bool):
    """Ordered ``[(id, role, members)]``: cores by index, then semi, periphery."""
    out = []
    if p.roles:
        for idx, members in p.cores().items():
            out.append((idx, CORE, set(members)))
        if not cores_only:
            for kind in (SEMI_PERIPHERY, PERIPHERY):
                members = set(p.members_with(kind))
                if members:
                    out.append((kind, kind, members))
    else:
        for cid, members in sorted(p.clusters().items(), key=lambda kv: str(kv[0])):
            out.append((cid, CORE, set(members)))
    return out


def core_flows(tp: TemporalPair, scope: str = CORES_ONLY) -> FlowTable:
    """Cross-tabulate memberships of the two periods.

    ``cores_only``: rows are period-1 cores plus an into-cores row (period-2
    core members outside every period-1 core); columns are period-2 cores
    plus an out-of-cores column. ``full``: every cluster, plus newcomer and
    departure groups.
    """
    if scope not in (CORES_ONLY, FULL):
        raise ValueError(f"unknown scope {scope!r}")
    cores_only = scope == CORES_ONLY
    g1 = _groups(tp.p1, cores_only)
    g2 = _groups(tp.p2, cores_only)
    in1 = set().union(*(m for _, _, m in g1)) if g1 else set()
    in2 = set().union(*(m for _, _, m in g2)) if g2 else set()
    extra_row = (INTO_CORES if cores_only else NEWCOMERS, in2 - in1)
    extra_col = (OUT_OF_CORES if cores_only else DEPARTURES, in1 - in2)
    row_sets = [m for _, _, m in g1] + [extra_row[1]]
    col_sets = [m for _, _, m in g2] + [extra_col[1]]
    counts = np.array([[len(r & c) for c in col_sets] for r in row_sets], dtype=np.int64)
    rows = tuple(Group(i, role, len(m)) for i, role, m in g1) + (
        Group(extra_row[0], extra_row[0], len(extra_row[1])),)
    cols = tuple(Group(i, role, len(m)) for i, role, m in g2) + (
        Group(extra_col[0], extra_col[0], len(extra_col[1])),)
    return FlowTable(rows, cols, counts, scope)


@dataclass
class TransitionEvents:
    merges: list = field(default_factory=list)  # (frozenset of period-1 cores, period-2 core)
    splits: list = field(default_factory=list)  # (period-1 core, frozenset of period-2 cores)
    dissolved: list = field(default_factory=list)
    emerged: list = field(default_factory=list)
    successors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "merges": [[sorted(src, key=str), dst] for src, dst in self.merges],
            "splits": [[src, sorted(dst, key=str)] for src, dst in self.splits],
            "dissolved": list(self.dissolved),
            "emerged": list(self.emerged),
        }


def classify_events(ft: FlowTable, share_threshold: float = 0.5,
                    split_min_share: float = 0.25) -> TransitionEvents:
    """Merge/split/dissolution/emergence from a cores-only flow table.

    Period-1 core ``u`` continues as period-2 core ``v`` when more than
    ``share_threshold`` of ``u`` moves to ``v``. A period-2 core reached by
    two or more such cores is a merge. A core with no successor that sends
    at least ``ceil(split_min_share * |u|)`` members to each of two or more
    period-2 cores is a split. Majority flows into the out-of-cores column
    or out of the into-cores row mark dissolution and emergence.
    """
    if not 0.0 < share_threshold < 1.0 or not 0.0 < split_min_share < 1.0:
        raise ValueError("thresholds must lie strictly between 0 and 1")
    if ft.scope != CORES_ONLY:
        raise ValueError("classify_events needs a cores_only flow table")
    ev = TransitionEvents()
    core_cols = ft.core_cols()
    out_j = ft.col_index(OUT_OF_CORES)
    into_i = ft.row_index(INTO_CORES)
    predecessors: dict = {}
    for i, u in ft.core_rows():
        if u.size == 0:
            continue
        shares = {g.id: ft.counts[i, j] / u.size for j, g in core_cols}
        succ = [(s, gid) for gid, s in shares.items() if s > share_threshold]
        if succ:
            # below a 0.5 threshold several cores can qualify; the largest flow wins
            top = max(s for s, _ in succ)
            target = [gid for s, gid in succ if s == top][0]
            ev.successors[u.id] = target
            predecessors.setdefault(target, []).append(u.id)
        else:
            # no successor: a split if the flow fans out over >= 2 cores
            need = math.ceil(split_min_share * u.size)
            targets = frozenset(g.id for j, g in core_cols if ft.counts[i, j] >= need and ft.counts[i, j] > 0)
            if len(targets) >= 2 and max(shares.values(), default=0) <= 1 - share_threshold:
                ev.splits.append((u.id, targets))
        if ft.counts[i, out_j] / u.size > share_threshold:
            ev.dissolved.append(u.id)
    for _, v in core_cols:
        srcs = predecessors.get(v.id, [])
        if len(srcs) >= 2:
            ev.merges.append((frozenset(srcs), v.id))
    for j, v in core_cols:
        if v.size and ft.counts[into_i, j] / v.size > share_threshold:
            ev.emerged.append(v.id)
    return ev


def into_out_percentages(tp: TemporalPair):
    """Shares of period-2 core members new to the cores, and of period-1 core members leaving them.

    Returns ``(pct_into, pct_out)`` as fractions.
    """
    c1 = tp.p1.core_members() if tp.p1.roles else set(tp.p1.assignment)
    c2 = tp.p2.core_members() if tp.p2.roles else set(tp.p2.assignment)
    if not c1 or not c2:
        raise UndefinedIndexError("into/out-of-cores shares need cores in both periods")
    return len(c2 - c1) / len(c2), len(c1 - c2) / len(c1)


# --- emitters ---------------------------------------------------------------------------


def _jsonable(x):
    return x.item() if isinstance(x, np.generic) else x


def emit_flow_json(ft: FlowTable, meta: dict | None = None) -> str:
    if not ft.rows and not ft.cols:
        raise EmptyDiagramError("flow table is empty")

    def node(g):
        return {"id": _jsonable(g.id), "role": g.role, "size": g.size, "color": g.color}

    links = [[i, j, int(ft.counts[i, j])]
             for i in range(len(ft.rows)) for j in range(len(ft.cols)) if ft.counts[i, j] > 0]
    doc = {"rows": [node(g) for g in ft.rows], "cols": [node(g) for g in ft.cols], "links": links}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=1) + "\n"


@dataclass(frozen=True)
class SvgStyle:
    width: float = 800.0
    margin: float = 20.0
    gap: float = 4.0
    bar_height: float = 18.0
    band_height: float = 160.0
    label_size: float = 10.0
    ribbon_opacity: float = 0.45


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _layout(groups, scale, style):
    xs, x = [], style.margin
    for g in groups:
        if g.size == 0:
            xs.append(None)
            continue
        xs.append(x)
        x += g.size * scale + style.gap
    return xs


def _label(g: Group) -> str:
    return f"core {g.id}" if g.role == CORE else str(g.id)


def emit_alluvial_svg(ft: FlowTable, style: SvgStyle | None = None, meta: dict | None = None) -> str:
    """Two rows of group rectangles joined by ribbons.

    Rectangle widths and ribbon widths share one scale (pixels per person).
    Ribbons join real groups only; into/out (or newcomer/departure) groups
    are drawn as gray rectangles.
    """
    style = style or SvgStyle()
    groups_top = [g for g in ft.rows]
    groups_bot = [g for g in ft.cols]
    if not any(g.size for g in groups_top + groups_bot):
        raise EmptyDiagramError("flow table has no members")
    n_top = sum(1 for g in groups_top if g.size)
    n_bot = sum(1 for g in groups_bot if g.size)
    people = max(sum(g.size for g in groups_top), sum(g.size for g in groups_bot))
    usable = style.width - 2 * style.margin - style.gap * max(n_top, n_bot, 1)
    scale = max(usable, 1.0) / people
    x_top = _layout(groups_top, scale, style)
    x_bot = _layout(groups_bot, scale, style)
    y_top = style.margin + style.label_size + 4
    y_bot = y_top + style.bar_height + style.band_height
    height = y_bot + style.bar_height + style.label_size + 4 + style.margin

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg", "version": "1.1",
        "width": _fmt(style.width), "height": _fmt(height),
        "viewBox": f"0 0 {_fmt(style.width)} {_fmt(height)}",
    })
    if meta:
        md = ET.SubElement(svg, "metadata")
        md.text = json.dumps(meta, sort_keys=True)
    ribbons = ET.SubElement(svg, "g", {"id": "ribbons"})
    bars = ET.SubElement(svg, "g", {"id": "groups"})

    # ribbons: stack outflows left-to-right within each top group, inflows within bottom groups
    out_off = {i: 0.0 for i in range(len(groups_top))}
    in_off = {j: 0.0 for j in range(len(groups_bot))}
    for i, gt in enumerate(groups_top):
        for j, gb in enumerate(groups_bot):
            cnt = int(ft.counts[i, j])
            if cnt == 0:
                continue
            w = cnt * scale
            if gt.pseudo or gb.pseudo:
                out_off[i] += w
                in_off[j] += w
                continue
            x0 = x_top[i] + out_off[i]
            x1 = x_bot[j] + in_off[j]
            out_off[i] += w
            in_off[j] += w
            ya = y_top + style.bar_height
            yb = y_bot
            ym = (ya + yb) / 2
            d = (f"M{_fmt(x0)},{_fmt(ya)} C{_fmt(x0)},{_fmt(ym)} {_fmt(x1)},{_fmt(ym)} {_fmt(x1)},{_fmt(yb)} "
                 f"L{_fmt(x1 + w)},{_fmt(yb)} C{_fmt(x1 + w)},{_fmt(ym)} {_fmt(x0 + w)},{_fmt(ym)} "
                 f"{_fmt(x0 + w)},{_fmt(ya)} Z")
            ET.SubElement(ribbons, "path", {
                "class": "ribbon", "d": d, "fill": GRAY, "fill-opacity": str(style.ribbon_opacity),
                "data-from": str(_jsonable(gt.id)), "data-to": str(_jsonable(gb.id)),
                "data-count": str(cnt), "data-width": _fmt(w),
            })

    for groups, xs, y, ly in ((groups_top, x_top, y_top, y_top - 4),
                              (groups_bot, x_bot, y_bot, y_bot + style.bar_height + style.label_size + 2)):
        for g, x in zip(groups, xs):
            if x is None:
                continue
            w = g.size * scale
            ET.SubElement(bars, "rect", {
                "class": "group", "x": _fmt(x), "y": _fmt(y), "width": _fmt(w),
                "height": _fmt(style.bar_height), "fill": g.color,
                "data-id": str(_jsonable(g.id)), "data-role": g.role, "data-size": str(g.size),
            })
            t = ET.SubElement(bars, "text", {
                "x": _fmt(x + w / 2), "y": _fmt(ly), "font-size": _fmt(style.label_size),
                "text-anchor": "middle", "font-family": "sans-serif",
            })
            t.text = _label(g)
    ET.indent(svg)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"
