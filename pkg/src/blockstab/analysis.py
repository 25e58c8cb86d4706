"""Discipline-level statistics over fitted blockmodels and stability indices."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg, stats

from .blockmodel import bridging_cores, detect_bridging_cores, summarize_blockmodel
from .equivalence import DissimilarityMatrix, cut_dendrogram, ward_cluster
from .errors import SingularDesignError, UndefinedIndexError
from .network import Network, density
from .partition import Partition
from .stability import INDEX_NAMES, StabilityReport, align
from .transitions import into_out_percentages

log = logging.getLogger(__name__)

FIELDS = (
    "natural sciences and mathematics",
    "engineering sciences and technologies",
    "medical sciences",
    "biotechnical sciences",
    "social sciences",
    "humanities",
)
REFERENCE_FIELD = "humanities"
RESPONSE = "MAWIS2"


@dataclass
class DisciplineRun:
    """Everything fitted for one discipline over two consecutive periods."""

    name: str
    net1: Network | None
    net2: Network | None
    part1: Partition | None
    part2: Partition | None
    report: StabilityReport | None = None
    field: str | None = None


@dataclass
class DisciplineFeatures:
    name: str
    N1: int
    N2: int
    growth_N: float
    density1: float
    density2: float
    growth_density: float | None
    n_cores1: int
    n_cores2: int
    avg_core_size1: float
    avg_core_size2: float
    pct_semi1: float
    pct_semi2: float
    pct_per1: float
    pct_per2: float
    pct_cores: float
    bridge_present1: bool
    pct_into: float | None
    pct_out: float | None
    indices: dict = field(default_factory=dict)
    field: str | None = None

    COLUMNS = (
        "N1", "N2", "growth_N", "density1", "density2", "growth_density",
        "n_cores1", "n_cores2", "avg_core_size1", "avg_core_size2",
        "pct_semi1", "pct_semi2", "pct_per1", "pct_per2", "pct_cores",
        "bridge_present1", "pct_into", "pct_out",
    )

    def as_row(self) -> dict:
        row = {"discipline": self.name, "field": self.field}
        for c in self.COLUMNS:
            row[c] = getattr(self, c)
        for k in INDEX_NAMES:
            row[k] = self.indices.get(k)
        return row


def _growth(a: float, b: float) -> float | None:
    return None if a == 0 else 100.0 * (b - a) / a


def features_for(run: DisciplineRun, bridging_threshold: float = 0.8) -> DisciplineFeatures:
    s1 = summarize_blockmodel(run.part1)
    s2 = summarize_blockmodel(run.part2)
    d1, d2 = density(run.net1), density(run.net2)
    pairs1 = detect_bridging_cores(run.net1, run.part1, bridging_threshold)
    tp = align(run.part1, run.part2)
    try:
        into, out = into_out_percentages(tp)
        into, out = 100.0 * into, 100.0 * out
    except UndefinedIndexError:
        into = out = None
    pct_cores = ((100.0 - s1.pct_semi - s1.pct_periphery) + (100.0 - s2.pct_semi - s2.pct_periphery)) / 2
    return DisciplineFeatures(
        name=run.name,
        N1=s1.n, N2=s2.n, growth_N=_growth(s1.n, s2.n),
        density1=d1, density2=d2, growth_density=_growth(d1, d2),
        n_cores1=s1.n_cores, n_cores2=s2.n_cores,
        avg_core_size1=s1.avg_core_size, avg_core_size2=s2.avg_core_size,
        pct_semi1=s1.pct_semi, pct_semi2=s2.pct_semi,
        pct_per1=s1.pct_periphery, pct_per2=s2.pct_periphery,
        pct_cores=pct_cores,
        bridge_present1=bool(bridging_cores(pairs1)),
        pct_into=into, pct_out=out,
        indices=dict(run.report.values) if run.report else {},
        field=run.field,
    )


def assemble_features(runs: Sequence[DisciplineRun], bridging_threshold: float = 0.8) -> list[DisciplineFeatures]:
    """Feature rows for every discipline fitted in both periods; others are skipped."""
    out = []
    for run in runs:
        if None in (run.net1, run.net2, run.part1, run.part2):
            msg = f"discipline {run.name!r} lacks a fitted period; skipped"
            log.warning(msg)
            warnings.warn(msg, stacklevel=2)
            continue
        out.append(features_for(run, bridging_threshold))
    return out


def standardize(x) -> np.ndarray:
    """Column z-scores with the sample (n - 1) standard deviation.

    Constant columns become zeros and trigger a warning.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("standardize needs a 2-D matrix with at least 2 rows")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    flat = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if flat.any():
        warnings.warn(f"zero-variance columns set to 0: {np.flatnonzero(flat).tolist()}", stacklevel=2)
    z = np.zeros_like(x)
    ok = ~flat
    z[:, ok] = (x[:, ok] - mean[ok]) / sd[ok]
    return z


def within_dispersion(x: np.ndarray, labels: np.ndarray) -> float:
    """Sum over clusters of pairwise squared distances / (2 * cluster size)."""
    total = 0.0
    for c in np.unique(labels):
        pts = x[labels == c]
        d = pts[:, None, :] - pts[None, :, :]
        total += float(np.sum(d * d)) / (2 * len(pts))
    return total


def _ward_labels(x: np.ndarray, k: int) -> np.ndarray:
    dend = ward_cluster(DissimilarityMatrix.from_points(x))
    part = cut_dendrogram(dend, k)
    return np.array([part.assignment[i] for i in range(len(x))])


@dataclass(frozen=True)
class GapResult:
    k: int
    gap: np.ndarray  # index 0 is k = 1
    s: np.ndarray
    log_w: np.ndarray
    log_w_ref: np.ndarray


def gap_table(x, k_max: int, B: int = 100, seed: int = 0) -> GapResult:
    """Gap statistic for Ward partitions with ``k = 1..k_max``.

    Reference sets are uniform over the bounding box of ``x``; ``s_k`` is the
    reference standard deviation of ``log W`` times ``sqrt(1 + 1/B)``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not 1 <= k_max < n:
        raise ValueError(f"k_max must lie in [1, {n - 1}]")
    if B < 1:
        raise ValueError("B must be at least 1")
    lo, hi = x.min(axis=0), x.max(axis=0)
    tiny = 1e-300

    def log_ws(data):
        dend = ward_cluster(DissimilarityMatrix.from_points(data))
        out = []
        for k in range(1, k_max + 1):
            part = cut_dendrogram(dend, k)
            labels = np.array([part.assignment[i] for i in range(len(data))])
            out.append(np.log(max(within_dispersion(data, labels), tiny)))
        return np.array(out)

    log_w = log_ws(x)
    rng = np.random.default_rng(seed)
    ref = np.array([log_ws(rng.uniform(lo, hi, size=x.shape)) for _ in range(B)])
    gap = ref.mean(axis=0) - log_w
    s = ref.std(axis=0) * np.sqrt(1.0 + 1.0 / B)
    k_star = k_max
    for k in range(1, k_max):
        if gap[k - 1] >= gap[k] - s[k]:
            k_star = k
            break
    return GapResult(k_star, gap, s, log_w, ref.mean(axis=0))


def gap_statistic(x, k_max: int, B: int = 100, seed: int = 0) -> int:
    """Smallest ``k`` with ``Gap(k) >= Gap(k+1) - s(k+1)``; ``k_max`` if none."""
    return gap_table(x, k_max, B, seed).k


def cluster_disciplines(z, k: int | None = None, k_max: int = 6, B: int = 100, seed: int = 0,
                        order_column: int = 0) -> np.ndarray:
    """Ward clusters of standardised index vectors, 1 = least stable.

    Without ``k`` the gap statistic picks it. Clusters are numbered by
    increasing mean of ``order_column`` (the ARI column), ties broken by the
    mean of the first three columns and then by first member.
    """
    z = np.asarray(z, dtype=float)
    n = len(z)
    if n < 2:
        raise ValueError("clustering needs at least 2 disciplines")
    if k is None:
        k = gap_statistic(z, min(k_max, n - 1), B, seed)
    labels = _ward_labels(z, k)
    keys = []
    for c in np.unique(labels):
        members = labels == c
        keys.append((float(np.mean(z[members, order_column])),
                     float(np.mean(z[members, :3])),
                     int(np.flatnonzero(members)[0]), c))
    keys.sort()
    relabel = {c: rank + 1 for rank, (*_, c) in enumerate(keys)}
    return np.array([relabel[c] for c in labels])


@dataclass(frozen=True)
class ClusterSummary:
    cluster: int
    members: int
    pct_into: float | None
    pct_out: float | None
    avg_core_size: float
    researchers: float


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def cluster_summary(assignments, features: Sequence[DisciplineFeatures]) -> list[ClusterSummary]:
    """Per-cluster averages; core size and researcher counts average both periods."""
    assignments = list(assignments)
    out = []
    for c in sorted(set(assignments)):
        fs = [f for a, f in zip(assignments, features) if a == c]
        out.append(ClusterSummary(
            cluster=int(c),
            members=len(fs),
            pct_into=_mean(f.pct_into for f in fs),
            pct_out=_mean(f.pct_out for f in fs),
            avg_core_size=_mean((f.avg_core_size1 + f.avg_core_size2) / 2 for f in fs),
            researchers=_mean((f.N1 + f.N2) / 2 for f in fs),
        ))
    return out


# --- regression -------------------------------------------------------------------------


@dataclass
class RegressionResult:
    names: list
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    adj_r2: float
    f: float
    df_model: int
    df_resid: int
    f_pvalue: float
    n_obs: int
    resid: np.ndarray = field(repr=False)

    def table(self) -> list[dict]:
        return [{"term": n, "b": b, "se": s, "p": p}
                for n, b, s, p in zip(self.names, self.coef, self.se, self.p)]


def _check_rank(x: np.ndarray, names: Sequence[str]):
    _, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diagonal(r))
    tol = diag.max() * max(x.shape) * np.finfo(float).eps if diag.size else 0
    rank = int((diag > tol).sum())
    if rank < x.shape[1]:
        bad = [names[i] for i in piv[rank:]]
        raise SingularDesignError(f"design matrix is rank deficient; dependent columns: {bad}", bad)


def ols_fit(x, y, names: Sequence[str] | None = None) -> RegressionResult:
    """Least squares with classical standard errors.

    ``x`` must contain an intercept (constant) column; F tests the model
    against the intercept-only model.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    if n <= p:
        raise SingularDesignError(f"need more observations ({n}) than parameters ({p})")
    const = np.all(np.isclose(x, x[:1]), axis=0) & (np.abs(x[0]) > 0)
    if not const.any():
        raise ValueError("design matrix needs an intercept column")
    _check_rank(x, names)
    q, r = np.linalg.qr(x)
    coef = linalg.solve_triangular(r, q.T @ y)
    resid = y - x @ coef
    rss = float(resid @ resid)
    df_resid = n - p
    sigma2 = rss / df_resid
    r_inv = linalg.solve_triangular(r, np.eye(p))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diagonal(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    pvals = 2 * stats.t.sf(np.abs(t), df_resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - rss / tss if tss > 0 else 1.0
    adj = 1 - (1 - r2) * (n - 1) / df_resid
    df_model = p - 1
    if df_model > 0 and rss > 0:
        f = ((tss - rss) / df_model) / (rss / df_resid)
        f_p = float(stats.f.sf(f, df_model, df_resid))
    else:
        f, f_p = float("inf") if df_model > 0 else float("nan"), 0.0 if df_model > 0 else float("nan")
    return RegressionResult(names, coef, se, t, pvals, r2, adj, float(f), df_model, df_resid, f_p, n, resid)


@dataclass(frozen=True)
class VIF:
    name: str
    value: float
    collinear: bool


def vif(x, names: Sequence[str] | None = None) -> list[VIF]:
    """Variance inflation factors of predictor columns (no intercept column in ``x``).

    Each column is regressed on the others plus an intercept. Perfectly
    collinear columns get ``inf`` and ``collinear=True``.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if p < 2:
        raise ValueError("VIF needs at least 2 predictors")
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    out = []
    for j in range(p):
        yj = x[:, j]
        others = np.column_stack([np.ones(n), np.delete(x, j, axis=1)])
        coef, *_ = np.linalg.lstsq(others, yj, rcond=None)
        resid = yj - others @ coef
        tss = float(np.sum((yj - yj.mean()) ** 2))
        rss = float(resid @ resid)
        if tss == 0 or rss <= 1e-12 * tss:
            out.append(VIF(names[j], float("inf"), True))
            continue
        r2 = 1 - rss / tss
        out.append(VIF(names[j], 1.0 / (1.0 - r2), False))
    return out


MODEL1_TERMS = (
    ("N1", "number of researchers (first time period)"),
    ("growth_N", "growth of number of researchers (1st and 2nd time period)"),
    ("growth_density", "growth of density (1st and 2nd time period)"),
    ("avg_core_size1", "average core size (1st time period)"),
    ("pct_cores", "percentage of cores (1st and 2nd time period)"),
    ("bridge_present1", "presence of the bridge (1st time period)"),
)
MODEL2_TERMS = MODEL1_TERMS + (("pct_out", "percentage of out-of-cores"),)


def build_design(features: Sequence[DisciplineFeatures], model: int = 1,
                 response: str = RESPONSE):
    """Design matrix, response and term names for regression Model 1 or 2.

    Field dummies use humanities as the reference category and are included
    only when every discipline has a field. Disciplines with any missing
    value are dropped.
    """
    terms = MODEL1_TERMS if model == 1 else MODEL2_TERMS
    use_fields = bool(features) and all(f.field for f in features)
    dummies = [fl for fl in FIELDS if fl != REFERENCE_FIELD] if use_fields else []
    rows, ys, kept = [], [], []
    for f in features:
        vals = [getattr(f, attr) for attr, _ in terms]
        yv = f.indices.get(response)
        if yv is None or any(v is None for v in vals):
            log.warning("discipline %r has missing values; dropped from regression", f.name)
            continue
        row = [1.0] + [float(v) for v in vals] + [1.0 if f.field == fl else 0.0 for fl in dummies]
        rows.append(row)
        ys.append(float(yv))
        kept.append(f.name)
    names = ["intercept"] + [label for _, label in terms] + dummies
    return np.array(rows).reshape(len(rows), len(names)), np.array(ys), names, kept


def format_regression(results: Mapping[str, RegressionResult], title: str = "") -> str:
    """Side-by-side coefficient table (b, SE(b), p) per model."""
    models = list(results)
    all_terms = []
    for r in results.values():
        for t in r.names:
            if t not in all_terms:
                all_terms.append(t)
    width = max(len(t) for t in all_terms + ["Adjusted R^2"]) + 2
    lines = []
    if title:
        lines.append(title)
    head = " " * width + "".join(f"{m:>30}" for m in models)
    lines.append(head)
    lines.append(" " * width + "".join(f"{'b':>10}{'SE(b)':>10}{'p':>10}" for _ in models))
    lines.append("-" * len(head))
    for term in all_terms:
        cells = []
        for m in models:
            r = results[m]
            if term in r.names:
                i = r.names.index(term)
                cells.append(f"{r.coef[i]:>10.4f}{r.se[i]:>10.4f}{r.p[i]:>10.2f}")
            else:
                cells.append(f"{'not included':>30}")
        lines.append(f"{term:<{width}}" + "".join(cells))
    lines.append("-" * len(head))
    lines.append(f"{'Number of obs.':<{width}}" + "".join(f"{r.n_obs:>30d}" for r in results.values()))
    lines.append(f"{'Adjusted R^2':<{width}}" + "".join(f"{r.adj_r2:>30.4f}" for r in results.values()))
    lines.append(f"{'F statistic':<{width}}" + "".join(
        f"{f'{r.f:.3f} ({r.df_model}; {r.df_resid}) p={r.f_pvalue:.4f}':>30}" for r in results.values()))
    lines.append(f"{'Method of estimation':<{width}}" + "".join(f"{'least squares':>30}" for _ in models))
    return "\n".join(lines) + "\n"
