import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from blockstab.cli import main, parse_k
from blockstab.errors import BlockstabError
from blockstab.network import PeriodSpec
from blockstab.synthetic import DisciplinePlan, corpus_csv, planted_corpus

PERIODS = ["--period", "P1:1991-2000", "--period", "P2:2001-2010"]

TOY = """pub_id,author_id,year,discipline
1,A,1995,toy
1,B,1995,toy
1,C,1995,toy
2,D,1996,toy
2,E,1996,toy
2,F,1996,toy
3,G,1997,toy
4,A,2003,toy
4,B,2003,toy
4,C,2003,toy
5,D,2004,toy
5,E,2004,toy
6,H,2005,toy
7,X,1995,ghost
"""


def run(tmp_path, *args):
    return main(["--out", str(tmp_path / "out"), *args])


def files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text(TOY)
    return path


@pytest.fixture
def corpus3(tmp_path):
    plans = [DisciplinePlan("alpha", 40, 3), DisciplinePlan("beta", 35, 3), DisciplinePlan("gamma", 30, 2)]
    periods = [PeriodSpec("P1", 1991, 2000), PeriodSpec("P2", 2001, 2010)]
    path = tmp_path / "corpus.csv"
    path.write_text(corpus_csv(planted_corpus(plans, periods, np.random.default_rng(1))))
    return path


def test_parse_k():
    assert parse_k(3) == [3]
    assert parse_k("scan:1..4") == [1, 2, 3, 4]
    with pytest.raises(BlockstabError):
        parse_k("scan:4..1")
    with pytest.raises(BlockstabError):
        parse_k("many")


def test_build_two_periods(tmp_path, toy_csv, capsys):
    assert run(tmp_path, "--input", str(toy_csv), *PERIODS, "build") == 0
    out = tmp_path / "out" / "networks"
    assert sorted(p.name for p in (out / "toy").iterdir()) == ["P1.json", "P2.json"]
    err = capsys.readouterr().err
    assert "warning" in err  # ghost has nothing in P2
    meta = json.loads((out / "toy" / "P1.json").read_text())["meta"]
    assert meta["seed"] == 20100101 and "replicates" in meta


def test_fit_planted_and_scan(tmp_path, toy_csv, capsys):
    assert run(tmp_path, "--input", str(toy_csv), *PERIODS, "build") == 0
    assert run(tmp_path, *PERIODS, "--k", "2", "--restarts", "5", "fit") == 0
    assert "fit toy / P1: k=2 criterion=0" in capsys.readouterr().out
    assert run(tmp_path, *PERIODS, "--k", "scan:1..4", "--restarts", "5", "fit") == 0
    table = list(csv.DictReader((tmp_path / "out" / "fits" / "toy" / "P1.scan.csv").open()))
    assert [int(r["k"]) for r in table] == [1, 2, 3, 4]
    assert all(r["seed"] == "20100101" for r in table)


def test_missing_network_is_named(tmp_path, toy_csv, capsys):
    assert run(tmp_path, "--input", str(toy_csv), *PERIODS, "build") == 0
    (tmp_path / "out" / "networks" / "toy" / "P2.json").unlink()
    assert run(tmp_path, *PERIODS, "--k", "2", "--restarts", "3", "fit") == 1
    assert "toy / P2" in capsys.readouterr().err


def test_empty_period_is_warning_only(tmp_path, toy_csv):
    assert run(tmp_path, "--input", str(toy_csv), *PERIODS, "--k", "1", "--restarts", "3", "build") == 0
    assert run(tmp_path, *PERIODS, "--k", "1", "--restarts", "3", "fit") == 0


def test_single_discipline_analyze_refuses(tmp_path, toy_csv, capsys):
    rc = run(tmp_path, "--input", str(toy_csv), *PERIODS, "--k", "2", "--restarts", "3",
             "--replicates", "50", "all")
    assert rc == 1
    assert "clustering needs at least 2 disciplines" in capsys.readouterr().err


def test_end_to_end_three_disciplines(tmp_path, corpus3):
    args = ["--input", str(corpus3), *PERIODS, "--k", "3", "--restarts", "5", "--replicates", "200", "all"]
    assert run(tmp_path, *args) == 0
    out = tmp_path / "out"
    rows = list(csv.reader((out / "stability.csv").open()))
    assert rows[0][:6] == ["discipline", "period1", "period2", "ARI", "AWI'", "AWI''"]
    assert rows[0][-2:] == ["seed", "replicates"]
    assert len(rows) == 4
    svgs = sorted(out.rglob("flows.svg"))
    assert len(svgs) == 3
    for s in svgs:
        ET.fromstring(s.read_text().split("\n", 1)[1])
    clusters = list(csv.DictReader((out / "clusters.csv").open()))
    assert {r["discipline"] for r in clusters} == {"alpha", "beta", "gamma"}
    assert "seed=20100101" in (out / "regression.txt").read_text()
    first = files(out)
    assert run(tmp_path, *args) == 0
    assert files(out) == first


def test_config_file_and_override(tmp_path, corpus3):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f"""
input = "{corpus3.name}"
out = "cfg-out"
seed = 5
replicates = 100
restarts = 4

[k]
default = 3
gamma = 2

[[periods]]
label = "early"
start = 1991
end = 2000

[[periods]]
label = "late"
start = 2001
end = 2010

[fields]
alpha = "humanities"
""")
    assert main(["--config", str(cfg), "--seed", "9", "build"]) == 0
    assert main(["--config", str(cfg), "--seed", "9", "fit"]) == 0
    part = json.loads((tmp_path / "cfg-out" / "fits" / "gamma" / "early.partition.json").read_text())
    assert part["seed"] == 9 and part["k"] == 2


def test_synth_and_dendrogram(tmp_path, capsys):
    path = tmp_path / "demo.csv"
    assert main(["synth", str(path), "--sizes", "30,20", "--cores", "2"]) == 0
    assert path.read_text().startswith("pub_id,author_id,year,discipline")
    assert run(tmp_path, "--input", str(path), *PERIODS, "build") == 0
    net = next((tmp_path / "out" / "networks").rglob("P1.json"))
    capsys.readouterr()
    assert main(["dendrogram", str(net)]) == 0
    assert "merge-height" in capsys.readouterr().out


def test_missing_input_is_error(tmp_path, capsys):
    assert run(tmp_path, *PERIODS, "build") == 1
    assert "no input" in capsys.readouterr().err
