import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockstab.errors import EmptyDiagramError, UndefinedIndexError
from blockstab.partition import PERI, SEMI, Partition, Role
from blockstab.stability import align
from blockstab.transitions import (
    BLACK,
    FULL,
    GRAY,
    INTO_CORES,
    OUT_OF_CORES,
    classify_events,
    core_flows,
    emit_alluvial_svg,
    emit_flow_json,
    into_out_percentages,
)

SVG = "{http://www.w3.org/2000/svg}"


def cores(*groups, semi="", peri=""):
    roles = {Role.core(i + 1): list(g) for i, g in enumerate(groups)}
    if semi:
        roles[SEMI] = list(semi)
    if peri:
        roles[PERI] = list(peri)
    return Partition.from_roles(roles)


def parse(svg):
    return ET.fromstring(svg.split("\n", 1)[1])


def test_identical_structure_diagonal():
    p = cores("abc", "de")
    ft = core_flows(align(p, p))
    assert ft.counts.tolist() == [[3, 0, 0], [0, 2, 0], [0, 0, 0]]
    assert ft.rows[-1].size == 0 and ft.cols[-1].size == 0


def test_hand_cross_tab():
    ft = core_flows(align(cores("wxyz"), cores("wx", "yz")))
    assert ft.counts[ft.row_index(1)].tolist() == [2, 2, 0]


def test_into_and_out_groups():
    ft = core_flows(align(cores("abc", semi="d"), cores("ad", semi="b")))
    assert ft.flow(1, 1) == 1 and ft.flow(1, OUT_OF_CORES) == 2 and ft.flow(INTO_CORES, 1) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["cores_only", "full"]))
def test_marginals(seed, scope):
    rng = np.random.default_rng(seed)
    units = [f"u{i}" for i in range(30)]
    roles = [Role.core(1), Role.core(2), Role.core(3), SEMI, PERI]

    def random_partition():
        chosen = [u for u in units if rng.random() < 0.8]
        groups = {}
        for u in chosen:
            groups.setdefault(roles[rng.integers(len(roles))], []).append(u)
        return Partition.from_roles(groups)

    p1, p2 = random_partition(), random_partition()
    ft = core_flows(align(p1, p2), scope)
    assert np.all(ft.counts >= 0)
    assert ft.counts.sum(axis=1).tolist() == [g.size for g in ft.rows]
    assert ft.counts.sum(axis=0).tolist() == [g.size for g in ft.cols]
    if scope == FULL:
        assert sum(g.size for g in ft.rows[:-1]) == len(p1)
        assert sum(g.size for g in ft.cols[:-1]) == len(p2)


def test_merge_event():
    ev = classify_events(core_flows(align(cores("abc", "def"), cores("abcdef"))))
    assert ev.merges == [(frozenset({1, 2}), 1)]
    assert ev.splits == []


def test_split_event():
    ev = classify_events(core_flows(align(cores("abcdef"), cores("ab", "cd", "ef"))))
    assert ev.splits == [(1, frozenset({1, 2, 3}))]
    assert ev.merges == []


def test_dissolved_and_emerged():
    ev = classify_events(core_flows(align(cores("abc", semi="xyz"), cores("xyz", semi="abc"))))
    assert ev.dissolved == [1] and ev.emerged == [1]


def test_classify_relabel_invariant():
    p1 = cores("abc", "def", "ghijkl")
    p2 = cores("abcdef", "gh", "ij", "kl")
    q1 = cores("ghijkl", "abc", "def")
    q2 = cores("ij", "kl", "abcdef", "gh")
    e1 = classify_events(core_flows(align(p1, p2)))
    e2 = classify_events(core_flows(align(q1, q2)))
    name = lambda p, c: frozenset(p.cores()[c])
    assert {(frozenset(name(p1, s) for s in src), name(p2, d)) for src, d in e1.merges} == \
           {(frozenset(name(q1, s) for s in src), name(q2, d)) for src, d in e2.merges}
    assert {(name(p1, s), frozenset(name(p2, d) for d in dst)) for s, dst in e1.splits} == \
           {(name(q1, s), frozenset(name(q2, d) for d in dst)) for s, dst in e2.splits}


def test_into_out_percentages():
    p = cores("abc")
    assert into_out_percentages(align(p, p)) == (0.0, 0.0)
    into, out = into_out_percentages(align(cores("ABCD"), cores("CDEFGH")))
    assert out == 0.5 and into == pytest.approx(4 / 6)
    with pytest.raises(UndefinedIndexError):
        into_out_percentages(align(cores(semi="ab"), cores("ab")))


def test_svg_diagonal_structure():
    p = cores("abc", "de")
    root = parse(emit_alluvial_svg(core_flows(align(p, p))))
    rects = root.findall(f".//{SVG}rect")
    ribbons = root.findall(f".//{SVG}path")
    assert len(rects) == 4 and len(ribbons) == 2
    assert {r.get("fill") for r in rects} == {BLACK}


def test_svg_widths_proportional():
    ft = core_flows(align(cores("abcdef", "ghi", semi="x"), cores("ab", "cdefghi", "x")))
    root = parse(emit_alluvial_svg(ft, meta={"seed": 1}))
    ribbons = root.findall(f".//{SVG}path")
    top = min(float(r.get("y")) for r in root.findall(f".//{SVG}rect"))
    core1 = [r for r in root.findall(f".//{SVG}rect") if r.get("data-id") == "1" and float(r.get("y")) == top]
    scale = float(core1[0].get("width")) / 6
    for path in ribbons:
        assert float(path.get("data-width")) == pytest.approx(int(path.get("data-count")) * scale, abs=0.01)
    assert sum(int(p.get("data-count")) for p in ribbons) == 9
    gray = [r for r in root.findall(f".//{SVG}rect") if r.get("fill") == GRAY]
    assert gray  # into-cores (x) and out-of-cores groups
    assert root.find(f"{SVG}metadata").text == '{"seed": 1}'


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_svg_well_formed(seed):
    rng = np.random.default_rng(seed)
    units = list("abcdefghijklmnop")
    def rp():
        groups = {}
        for u in units:
            groups.setdefault([Role.core(1), Role.core(2), SEMI][rng.integers(3)], []).append(u)
        return Partition.from_roles(groups)
    ft = core_flows(align(rp(), rp()))
    try:
        svg = emit_alluvial_svg(ft)
    except EmptyDiagramError:
        return
    parse(svg)


def test_empty_diagram():
    with pytest.raises(EmptyDiagramError):
        emit_alluvial_svg(core_flows(align(cores(semi="ab"), cores(semi="ab"))))


def test_flow_json():
    import json
    ft = core_flows(align(cores("abc"), cores("ab", "cd")))
    doc = json.loads(emit_flow_json(ft, {"seed": 3}))
    assert doc["meta"] == {"seed": 3}
    assert [r["color"] for r in doc["rows"]] == [BLACK, GRAY]
    assert sorted(doc["links"]) == [[0, 0, 2], [0, 1, 1], [1, 1, 1]]
