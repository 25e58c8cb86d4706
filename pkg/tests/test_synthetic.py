import numpy as np

from blockstab.network import PeriodSpec, isolates, parse_publications
from blockstab.synthetic import DisciplinePlan, corpus_csv, planted_corpus, planted_network, random_partition_sizes


def test_planted_network_structure():
    pn = planted_network([4, 5], 3, 2, np.random.default_rng(0))
    net, truth = pn.net, pn.truth
    assert net.n == 14
    assert isolates(net) == set(truth.members_with("periphery"))
    for members in truth.cores().values():
        idx = [net.index(v) for v in members]
        block = net.adjacency[np.ix_(idx, idx)]
        assert block.sum() == len(idx) * (len(idx) - 1)
    semi_idx = [net.index(v) for v in truth.members_with("semi-periphery")]
    assert net.adjacency[semi_idx].sum() == pn.semi_ties
    assert net.adjacency[np.ix_(semi_idx, semi_idx)].sum() == 0


def test_random_partition_sizes():
    out = random_partition_sizes(range(10), [5, 3, 2], np.random.default_rng(1))
    assert sorted(np.bincount(list(out.values()))[1:]) == [2, 3, 5]


def test_planted_corpus_parses():
    periods = [PeriodSpec("a", 1991, 2000), PeriodSpec("b", 2001, 2010)]
    rows = planted_corpus([DisciplinePlan("x", 40, 3)], periods, np.random.default_rng(2))
    recs = parse_publications(corpus_csv(rows))
    assert {r.discipline for r in recs} == {"x"}
    years = [r.year for r in recs]
    assert min(years) >= 1991 and max(years) <= 2010
    again = planted_corpus([DisciplinePlan("x", 40, 3)], periods, np.random.default_rng(2))
    assert again == rows
