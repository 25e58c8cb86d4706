"""Command-line pipeline: build -> fit -> stability -> transitions -> analyze."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis
from .blockmodel import FitOptions, blockmodel_matrix_csv, fit_blockmodel, strip_periphery, summarize_blockmodel
from .equivalence import corrected_euclidean, ward_cluster
from .errors import BlockstabError, EmptyNetworkError, InfeasibleError
from .network import PeriodSpec, build_network, density, dump_network, load_network, parse_publications, validate_periods
from .partition import dump_partition, load_partition
from .stability import INDEX_HEADERS, INDEX_NAMES, StabilityReport, align, stability_report
from .transitions import classify_events, core_flows, emit_alluvial_svg, emit_flow_json

log = logging.getLogger("blockstab")

DEFAULT_SEED = 20100101
DEFAULT_REPLICATES = 5000
UNNAMED = "all"


@dataclass
class RunConfig:
    input: str | None = None
    out: str = "blockstab-out"
    periods: list = field(default_factory=list)
    k: object = None  # int | "scan:a..b" | {discipline: int|str, "default": ...}
    restarts: int | None = None
    seed: int = DEFAULT_SEED
    replicates: int = DEFAULT_REPLICATES
    bridging_density: float = 0.8
    transition_share: float = 0.5
    split_min_share: float = 0.25
    scope: str = "cores"
    freeze_cliques: bool = False
    refit_bridging: bool = False
    roster: str | None = None
    fields: dict = field(default_factory=dict)
    workers: int = 1
    clusters_k: int | None = None
    gap_refs: int = 100

    def k_for(self, discipline: str):
        spec = self.k
        if isinstance(spec, dict):
            spec = spec.get(discipline, spec.get("default"))
        if spec is None:
            raise BlockstabError(f"no k configured for discipline {discipline!r}")
        return parse_k(spec)

    def meta(self) -> dict:
        return {"seed": self.seed, "replicates": self.replicates}


def parse_k(spec) -> list[int]:
    """``3`` -> [3]; ``"scan:2..5"`` -> [2, 3, 4, 5]."""
    if isinstance(spec, int):
        return [spec]
    text = str(spec).strip()
    m = re.fullmatch(r"scan:(\d+)\.\.(\d+)", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo < 1 or hi < lo:
            raise BlockstabError(f"empty or invalid k scan range {text!r}")
        return list(range(lo, hi + 1))
    if text.isdigit():
        return [int(text)]
    raise BlockstabError(f"cannot parse k specification {spec!r}")


def parse_period(text: str) -> PeriodSpec:
    m = re.fullmatch(r"(?:(?P<label>[^:]+):)?(?P<a>\d{3,4})-(?P<b>\d{3,4})", text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"period must look like LABEL:1991-2000, got {text!r}")
    a, b = int(m.group("a")), int(m.group("b"))
    return PeriodSpec(m.group("label") or f"{a}-{b}", a, b)


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if not path:
        return cfg
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    base = Path(path).parent
    for key in ("input", "roster"):
        if key in doc:
            setattr(cfg, key, str(base / doc[key]))
    if "out" in doc:
        cfg.out = str(base / doc["out"])
    for key in ("restarts", "seed", "replicates", "scope", "freeze_cliques", "refit_bridging", "workers", "gap_refs"):
        if key in doc:
            setattr(cfg, key, doc[key])
    if "k" in doc:
        cfg.k = doc["k"]
    cfg.periods = [PeriodSpec(p["label"], int(p["start"]), int(p["end"])) for p in doc.get("periods", [])]
    th = doc.get("thresholds", {})
    cfg.bridging_density = th.get("bridging_density", cfg.bridging_density)
    cfg.transition_share = th.get("transition_share", cfg.transition_share)
    cfg.split_min_share = th.get("split_min_share", cfg.split_min_share)
    cfg.fields = dict(doc.get("fields", {}))
    cfg.clusters_k = doc.get("clusters", {}).get("k")
    return cfg


# --- io helpers -------------------------------------------------------------------------


def slug(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", name.strip()).strip("_")
    return s or UNNAMED


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x, places=4) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if not np.isfinite(x):
        return ""
    return f"{float(x):.{places}f}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


class Paths:
    def __init__(self, out):
        self.out = Path(out)

    def network(self, disc, period):
        return self.out / "networks" / slug(disc) / f"{slug(period)}.json"

    def partition(self, disc, period):
        return self.out / "fits" / slug(disc) / f"{slug(period)}.partition.json"

    def matrix(self, disc, period):
        return self.out / "fits" / slug(disc) / f"{slug(period)}.matrix.csv"

    def scan(self, disc, period):
        return self.out / "fits" / slug(disc) / f"{slug(period)}.scan.csv"

    def flows(self, disc, p1, p2, ext):
        return self.out / "transitions" / slug(disc) / f"{slug(p1)}--{slug(p2)}" / f"flows.{ext}"

    def disciplines_index(self):
        return self.out / "networks" / "disciplines.json"


class Outcome:
    """Per-run error and warning collector."""

    def __init__(self):
        self.errors: list[str] = []
        self.warnings: list[str] = []

    def warn(self, msg):
        self.warnings.append(msg)
        log.warning(msg)

    def error(self, msg):
        self.errors.append(msg)
        log.error(msg)

    def merge(self, other: "Outcome"):
        self.errors += other.errors
        self.warnings += other.warnings


def _pmap(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _index(paths: Paths) -> dict:
    p = paths.disciplines_index()
    if not p.exists():
        raise BlockstabError(f"{p} not found; run `blockstab build` first")
    return json.loads(p.read_text())


def _disciplines(paths: Paths) -> list[str]:
    return _index(paths)["disciplines"]


# --- commands ---------------------------------------------------------------------------


def cmd_build(cfg: RunConfig, outcome: Outcome):
    if not cfg.input:
        raise BlockstabError("no input file given (--input or config `input`)")
    if not cfg.periods:
        raise BlockstabError("no periods configured")
    periods = validate_periods(cfg.periods)
    with open(cfg.input, encoding="utf-8") as fh:
        records = parse_publications(fh)
    roster = None
    if cfg.roster:
        with open(cfg.roster, encoding="utf-8") as fh:
            roster = {line.strip() for line in fh if line.strip()}
    by_disc: dict[str, list] = {}
    for r in records:
        by_disc.setdefault(r.discipline or UNNAMED, []).append(r)
    paths = Paths(cfg.out)
    empty = {}
    for disc in sorted(by_disc):
        for period in periods:
            try:
                net = build_network(by_disc[disc], period, roster)
            except EmptyNetworkError:
                outcome.warn(f"{disc} / {period.label}: no publications in period; skipped")
                empty.setdefault(disc, []).append(period.label)
                continue
            write_atomic(paths.network(disc, period.label), dump_network(net, {"discipline": disc, "period": period.label, **cfg.meta()}))
            dens = density(net) if net.n >= 2 else float("nan")
            print(f"built {disc} / {period.label}: N={net.n} edges={net.n_edges()} density={fmt(dens)}")
    index = {"disciplines": sorted(by_disc), "periods": [[p.label, p.start_year, p.end_year] for p in periods],
             "empty_cells": empty, **cfg.meta()}
    write_atomic(paths.disciplines_index(), json.dumps(index, indent=1) + "\n")


def _fit_cell(args):
    cfg, disc, period, known_empty = args
    paths = Paths(cfg.out)
    outcome = Outcome()
    lines = []
    src = paths.network(disc, period)
    if known_empty:
        outcome.warn(f"{disc} / {period}: empty network; not fitted")
        return outcome, lines
    if not src.exists():
        outcome.error(f"{disc} / {period}: network file {src} is missing")
        return outcome, lines
    net = load_network(src.read_text())
    try:
        ks = cfg.k_for(disc)
    except BlockstabError as e:
        outcome.error(f"{disc} / {period}: {e}")
        return outcome, lines
    opts = FitOptions(restarts=cfg.restarts, seed=cfg.seed, freeze_cliques=cfg.freeze_cliques,
                      refit_bridging=cfg.refit_bridging, bridging_threshold=cfg.bridging_density)
    fits = {}
    for k in ks:
        try:
            fits[k] = fit_blockmodel(net, k, opts)
        except InfeasibleError as e:
            outcome.warn(f"{disc} / {period}: k={k} infeasible ({e})")
    if not fits:
        outcome.warn(f"{disc} / {period}: no feasible fit; cell excluded")
        return outcome, lines
    if len(ks) > 1:
        rows = [[k, fmt(f.criterion_value), summarize_blockmodel(f.partition).n_cores, cfg.seed]
                for k, f in sorted(fits.items())]
        write_atomic(paths.scan(disc, period), csv_text(["k", "criterion", "cores_found", "seed"], rows))
    best_k = min(fits, key=lambda k: (fits[k].criterion_value, k))
    fit = fits[best_k]
    summary = summarize_blockmodel(fit.partition)
    write_atomic(paths.partition(disc, period), dump_partition(
        fit.partition, criterion=fit.criterion_value, seed=fit.seed, k=best_k,
        restarts=fit.restarts_run, replicates=cfg.replicates,
        bridging_pairs=sorted([list(p) for p in fit.bridging_pairs])))
    write_atomic(paths.matrix(disc, period), blockmodel_matrix_csv(
        net, fit.partition, header_note=f"seed={fit.seed};replicates={cfg.replicates}"))
    lines.append(f"fit {disc} / {period}: k={best_k} criterion={fit.criterion_value} "
                 f"cores={summary.n_cores} semi%={fmt(summary.pct_semi, 2)} per%={fmt(summary.pct_periphery, 2)} seed={fit.seed}")
    return outcome, lines


def cmd_fit(cfg: RunConfig, outcome: Outcome):
    paths = Paths(cfg.out)
    index = _index(paths)
    empty = index.get("empty_cells", {})
    cells = [(cfg, d, p.label, p.label in empty.get(d, [])) for d in index["disciplines"] for p in cfg.periods]
    for res, lines in _pmap(_fit_cell, cells, cfg.workers):
        outcome.merge(res)
        for line in lines:
            print(line)


def _pairs(cfg):
    return list(zip(cfg.periods, cfg.periods[1:]))


def _load_fit(paths, disc, period):
    p = paths.partition(disc, period)
    if not p.exists():
        return None
    return load_partition(p.read_text())


def _stability_cell(args):
    cfg, disc, p1, p2 = args
    paths = Paths(cfg.out)
    outcome = Outcome()
    a, b = _load_fit(paths, disc, p1), _load_fit(paths, disc, p2)
    if a is None or b is None:
        outcome.warn(f"{disc}: fits for {p1} and {p2} not both available; skipped")
        return outcome, None
    report = stability_report(align(a, b), cfg.replicates, cfg.seed, cfg.scope)
    return outcome, report


def cmd_stability(cfg: RunConfig, outcome: Outcome):
    paths = Paths(cfg.out)
    cells = [(cfg, d, p1.label, p2.label) for d in _disciplines(paths) for p1, p2 in _pairs(cfg)]
    results = _pmap(_stability_cell, cells, cfg.workers)
    rows, docs = [], []
    for (_, disc, p1, p2), (res, report) in zip(cells, results):
        outcome.merge(res)
        if report is None:
            continue
        rows.append([disc, p1, p2] + [fmt(report.values[k]) for k in INDEX_NAMES] + [cfg.seed, cfg.replicates])
        docs.append({"discipline": disc, "period1": p1, "period2": p2, **report.to_dict()})
    header = ["discipline", "period1", "period2", *INDEX_HEADERS, "seed", "replicates"]
    write_atomic(paths.out / "stability.csv", csv_text(header, rows))
    write_atomic(paths.out / "stability.json", json.dumps(docs, indent=1) + "\n")
    print(f"stability: {len(rows)} rows -> {paths.out / 'stability.csv'}")


def cmd_transitions(cfg: RunConfig, outcome: Outcome):
    paths = Paths(cfg.out)
    n = 0
    for disc in _disciplines(paths):
        for p1, p2 in _pairs(cfg):
            a, b = _load_fit(paths, disc, p1.label), _load_fit(paths, disc, p2.label)
            if a is None or b is None:
                outcome.warn(f"{disc}: fits for {p1.label} and {p2.label} not both available; skipped")
                continue
            tp = align(a, b)
            ft = core_flows(tp)
            meta = {**cfg.meta(), "discipline": disc, "period1": p1.label, "period2": p2.label}
            try:
                events = classify_events(ft, cfg.transition_share, cfg.split_min_share)
                meta["events"] = events.to_dict()
                svg = emit_alluvial_svg(ft, meta=meta)
            except BlockstabError as e:
                outcome.warn(f"{disc}: {e}")
                continue
            write_atomic(paths.flows(disc, p1.label, p2.label, "json"), emit_flow_json(ft, meta))
            write_atomic(paths.flows(disc, p1.label, p2.label, "svg"), svg)
            n += 1
    print(f"transitions: {n} diagrams written")


def cmd_analyze(cfg: RunConfig, outcome: Outcome):
    paths = Paths(cfg.out)
    pairs = _pairs(cfg)
    if not pairs:
        raise BlockstabError("analyze needs at least two periods")
    p1, p2 = pairs[0][0].label, pairs[0][1].label
    stab_path = paths.out / "stability.json"
    if not stab_path.exists():
        raise BlockstabError(f"{stab_path} not found; run `blockstab stability` first")
    reports = {(d["discipline"], d["period1"], d["period2"]): d for d in json.loads(stab_path.read_text())}
    runs = []
    for disc in _disciplines(paths):
        nets, parts = [], []
        for p in (p1, p2):
            npath = paths.network(disc, p)
            nets.append(load_network(npath.read_text()) if npath.exists() else None)
            parts.append(_load_fit(paths, disc, p))
        doc = reports.get((disc, p1, p2))
        report = None
        if doc:
            report = StabilityReport(doc["indices"], doc["raw"], {}, doc["monte_carlo"]["replicates"],
                                     doc["monte_carlo"]["seed"], doc["scope"])
        runs.append(analysis.DisciplineRun(disc, nets[0], nets[1], parts[0], parts[1], report,
                                           cfg.fields.get(disc)))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        feats = analysis.assemble_features(runs, cfg.bridging_density)
    for w in caught:
        outcome.warn(str(w.message))
    header = ["discipline", "field", *analysis.DisciplineFeatures.COLUMNS, *INDEX_HEADERS, "seed", "replicates"]
    rows = []
    for f in feats:
        row = f.as_row()
        rows.append([row["discipline"], row["field"] or ""] + [fmt(row[c]) for c in analysis.DisciplineFeatures.COLUMNS]
                    + [fmt(row[k]) for k in INDEX_NAMES] + [cfg.seed, cfg.replicates])
    write_atomic(paths.out / "disciplines.csv", csv_text(header, rows))

    results = {}
    notes = []
    for model in (1, 2):
        X, y, names, kept = analysis.build_design(feats, model)
        try:
            results[f"Model {model}"] = analysis.ols_fit(X, y, names)
        except (BlockstabError, ValueError) as e:
            notes.append(f"Model {model}: not estimated ({e})")
    text = analysis.format_regression(results, f"Response: {analysis.RESPONSE}") if results else ""
    text += "".join(n + "\n" for n in notes)
    text += f"seed={cfg.seed} replicates={cfg.replicates}\n"
    write_atomic(paths.out / "regression.txt", text)

    usable = [f for f in feats if all(f.indices.get(k) is not None for k in INDEX_NAMES)]
    for f in feats:
        if f not in usable:
            outcome.warn(f"{f.name}: undefined stability index; excluded from clustering")
    if len(usable) < 2:
        raise BlockstabError(f"clustering needs at least 2 disciplines with complete indices, got {len(usable)}")
    x = np.array([[f.indices[k] for k in INDEX_NAMES] for f in usable])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = analysis.standardize(x)
    k = cfg.clusters_k
    if k is None:
        k = analysis.gap_statistic(z, min(6, len(usable) - 1), cfg.gap_refs, cfg.seed) if len(usable) > 2 else 1
    labels = analysis.cluster_disciplines(z, k=k)
    rows = [[f.name, int(c), cfg.seed, cfg.replicates] for f, c in zip(usable, labels)]
    write_atomic(paths.out / "clusters.csv", csv_text(["discipline", "cluster", "seed", "replicates"], rows))
    summ = analysis.cluster_summary(labels, usable)
    srows = [[s.cluster, s.members, fmt(s.pct_into, 1), fmt(s.pct_out, 1), fmt(s.avg_core_size, 1), fmt(s.researchers, 0)]
             for s in summ]
    write_atomic(paths.out / "cluster_summary.csv",
                 csv_text(["cluster", "disciplines", "pct_into", "pct_out", "core_size", "researchers"], srows))
    print(f"analyze: {len(usable)} disciplines in {k} clusters")


def cmd_dendrogram(cfg: RunConfig, outcome: Outcome, network_path: str, linkage: str = "ward"):
    net = load_network(Path(network_path).read_text())
    reduced, _ = strip_periphery(net)
    dend = ward_cluster(corrected_euclidean(reduced), linkage)
    heights = dend.heights[::-1]
    print("positions  merge-height")
    for k, h in enumerate(heights[:30], start=1):
        print(f"{k:>9}  {h:.4f}")
    print(dend.render(), end="")


def cmd_synth(cfg: RunConfig, outcome: Outcome, path: str, sizes: list[int], k: int):
    from .synthetic import DisciplinePlan, corpus_csv, planted_corpus
    periods = cfg.periods or [PeriodSpec("1991-2000", 1991, 2000), PeriodSpec("2001-2010", 2001, 2010)]
    plans = [DisciplinePlan(f"discipline{i + 1}", n, k) for i, n in enumerate(sizes)]
    rows = planted_corpus(plans, periods, np.random.default_rng(cfg.seed))
    write_atomic(Path(path), corpus_csv(rows))
    print(f"wrote {len(rows)} authorship rows to {path}")


COMMANDS = {
    "build": cmd_build,
    "fit": cmd_fit,
    "stability": cmd_stability,
    "transitions": cmd_transitions,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockstab", description=__doc__)
    ap.add_argument("--config", help="TOML run configuration")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int, help="parallel disciplines (default $BLOCKSTAB_WORKERS or 1)")
    ap.add_argument("--input")
    ap.add_argument("--period", action="append", type=parse_period, dest="periods",
                    help="LABEL:START-END, repeatable")
    ap.add_argument("--k", help="cores per discipline: N or scan:A..B")
    ap.add_argument("--restarts", type=int)
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--scope", choices=("cores", "full"))
    ap.add_argument("--freeze-cliques", action="store_true", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "all"):
        sub.add_parser(name)
    d = sub.add_parser("dendrogram", help="merge heights of the corrected-Euclidean dendrogram")
    d.add_argument("network")
    d.add_argument("--linkage", choices=("ward", "complete"), default="ward")
    s = sub.add_parser("synth", help="write a planted demo corpus")
    s.add_argument("path")
    s.add_argument("--sizes", type=lambda t: [int(x) for x in t.split(",")], default=[120, 80, 60])
    s.add_argument("--cores", type=int, default=5)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    env_workers = os.environ.get("BLOCKSTAB_WORKERS")
    if env_workers and not (args.config and "workers" in tomllib.load(open(args.config, "rb"))):
        cfg.workers = int(env_workers)
    overrides = {
        "seed": args.seed, "out": args.out, "workers": args.workers, "input": args.input,
        "periods": args.periods, "restarts": args.restarts, "replicates": args.replicates,
        "scope": args.scope, "freeze_cliques": args.freeze_cliques,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if args.k is not None:
        cfg.k = args.k
    if cfg.replicates < 1:
        raise BlockstabError("replicates must be at least 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    outcome = Outcome()
    try:
        cfg = resolve_config(args)
        if args.command == "all":
            for name in ("build", "fit", "stability", "transitions", "analyze"):
                COMMANDS[name](cfg, outcome)
        elif args.command == "dendrogram":
            cmd_dendrogram(cfg, outcome, args.network, args.linkage)
        elif args.command == "synth":
            cmd_synth(cfg, outcome, args.path, args.sizes, args.cores)
        else:
            COMMANDS[args.command](cfg, outcome)
    except (BlockstabError, OSError) as e:
        outcome.error(str(e))
    if outcome.warnings:
        print(f"{len(outcome.warnings)} warning(s)", file=sys.stderr)
    if outcome.errors:
        print("errors:", file=sys.stderr)
        for e in outcome.errors:
            print(f"  {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
