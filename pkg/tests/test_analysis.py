import itertools
import warnings

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.stats.outliers_influence import variance_inflation_factor

from blockstab.analysis import (
    FIELDS,
    MODEL2_TERMS,
    DisciplineFeatures,
    DisciplineRun,
    assemble_features,
    build_design,
    cluster_disciplines,
    cluster_summary,
    features_for,
    format_regression,
    gap_statistic,
    gap_table,
    ols_fit,
    standardize,
    vif,
    within_dispersion,
)
from blockstab.errors import SingularDesignError
from blockstab.network import Network
from blockstab.partition import PERI, SEMI, Partition, Role
from blockstab.stability import INDEX_NAMES, align, stability_report


def core_partition(groups, semi="", peri=""):
    roles = {Role.core(i + 1): list(g) for i, g in enumerate(groups)}
    if semi:
        roles[SEMI] = list(semi)
    if peri:
        roles[PERI] = list(peri)
    return Partition.from_roles(roles)


def toy_run(name="toy", field=None):
    net1 = Network.from_edges("abcdefghij", ["ab", "bc", "ac", "de", "ef", "df", "ga", "hd"])
    net2 = Network.from_edges("abcdefghijklm", ["ab", "bc", "ac", "ak", "bk", "ck", "de", "lm", "ga"])
    p1 = core_partition(["abc", "def"], semi="gh", peri="ij")
    p2 = core_partition(["abck", "de", "lm"], semi="g", peri="fhij")
    rep = stability_report(align(p1, p2), replicates=200, seed=1)
    return DisciplineRun(name, net1, net2, p1, p2, rep, field)


# --- features -------------------------------------------------------------------------------


def test_features_hand_computation():
    f = features_for(toy_run())
    assert (f.N1, f.N2) == (10, 13)
    assert f.growth_N == pytest.approx(30.0)
    assert f.density1 == pytest.approx(8 / 45)
    assert f.density2 == pytest.approx(9 / 78)
    assert f.growth_density == pytest.approx(100 * (9 / 78 - 8 / 45) / (8 / 45))
    assert (f.n_cores1, f.n_cores2) == (2, 3)
    assert f.avg_core_size1 == 3.0 and f.avg_core_size2 == pytest.approx(8 / 3)
    assert f.pct_semi1 == 20.0 and f.pct_per1 == 20.0
    assert f.pct_cores == pytest.approx((60.0 + 100 * 8 / 13) / 2)
    # cores 1: abcdef ; cores 2: abckdelm -> into {k,l,m}/8, out {f}/6
    assert f.pct_into == pytest.approx(100 * 3 / 8)
    assert f.pct_out == pytest.approx(100 / 6)
    assert f.bridge_present1 is False
    for c in ("pct_semi1", "pct_semi2", "pct_per1", "pct_per2", "pct_cores", "pct_into", "pct_out"):
        assert 0 <= getattr(f, c) <= 100


def test_growth_anchor():
    base = features_for(toy_run())
    assert 100 * (134 - 100) / 100 == 34
    assert base.growth_N == 100 * (base.N2 - base.N1) / base.N1


def test_assemble_skips_incomplete():
    run = toy_run()
    broken = DisciplineRun("broken", run.net1, None, run.part1, None)
    with pytest.warns(UserWarning):
        feats = assemble_features([run, broken])
    assert [f.name for f in feats] == ["toy"]


# --- standardize ----------------------------------------------------------------------------


def test_standardize_hand():
    z = standardize([[1.0], [3.0]])
    assert z[:, 0] == pytest.approx([-1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_standardize_constant_column():
    with pytest.warns(UserWarning):
        z = standardize([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    assert np.all(z[:, 1] == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(1, 6), st.integers(0, 10_000))
def test_standardize_means_zero(n, p, seed):
    x = np.random.default_rng(seed).normal(size=(n, p)) * 10 + 3
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = standardize(x)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-12)


# --- clustering -----------------------------------------------------------------------------


def test_planted_profiles_recovered():
    rng = np.random.default_rng(2)
    profiles = np.array([[0.1] * 9, [0.5] * 9, [0.9] * 9])
    x = np.repeat(profiles, 5, axis=0) + 0.01 * rng.normal(size=(15, 9))
    labels = cluster_disciplines(standardize(x), k=3)
    assert labels.tolist() == [1] * 5 + [2] * 5 + [3] * 5
    # exhaustive check: no 3-partition has a smaller within-cluster sum of squares
    z = standardize(x)
    ours = within_dispersion(z, labels)
    small = z[[0, 1, 5, 6, 10, 11]]
    best = min(within_dispersion(small, np.array(lab))
               for lab in itertools.product(range(3), repeat=6) if len(set(lab)) == 3)
    assert within_dispersion(small, labels[[0, 1, 5, 6, 10, 11]]) == pytest.approx(best)
    assert ours > 0


def test_k1_single_cluster():
    z = standardize(np.random.default_rng(0).normal(size=(6, 3)))
    assert set(cluster_disciplines(z, k=1)) == {1}


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 8), st.floats(0.1, 100), st.floats(-50, 50))
def test_clusters_invariant_to_affine_rescaling(seed, col, scale, shift):
    x = np.random.default_rng(seed).normal(size=(12, 9))
    y = x.copy()
    y[:, col] = y[:, col] * scale + shift
    a = cluster_disciplines(standardize(x), k=3)
    b = cluster_disciplines(standardize(y), k=3)
    assert a.tolist() == b.tolist()


def test_gap_single_blob():
    x = np.random.default_rng(1).normal(size=(30, 2))
    assert gap_statistic(x, 5, B=50, seed=3) == 1


def test_gap_three_blobs():
    rng = np.random.default_rng(1)
    centers = np.array([[0, 0], [20, 0], [0, 20]])
    x = np.vstack([c + rng.normal(size=(10, 2)) for c in centers])
    res = gap_table(x, 6, B=50, seed=3)
    assert res.k == 3
    # direct evaluation of the rule on the returned table
    first = next(k for k in range(1, 6) if res.gap[k - 1] >= res.gap[k] - res.s[k])
    assert first == 3


def test_gap_b1_in_range():
    x = np.random.default_rng(5).normal(size=(12, 3))
    assert 1 <= gap_statistic(x, 4, B=1, seed=0) <= 4


def test_cluster_summary():
    run = toy_run()
    f1 = features_for(run)
    f2 = features_for(toy_run("other"))
    s = cluster_summary([1, 1], [f1, f2])
    assert len(s) == 1 and s[0].members == 2
    assert s[0].pct_into == pytest.approx(f1.pct_into)
    s2 = cluster_summary([1, 2], [f1, f2])
    assert s2[1].researchers == pytest.approx((f2.N1 + f2.N2) / 2)
    assert s2[0].avg_core_size == pytest.approx((f1.avg_core_size1 + f1.avg_core_size2) / 2)


# --- regression -----------------------------------------------------------------------------


def test_exact_fit():
    x = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
    res = ols_fit(x, 2 * x[:, 1] + 1)
    assert res.coef == pytest.approx([1.0, 2.0])
    assert res.r2 == pytest.approx(1.0)
    assert np.allclose(res.resid, 0)


def test_orthogonal_response():
    x = np.column_stack([np.ones(4), [-1.0, -1.0, 1.0, 1.0]])
    res = ols_fit(x, np.array([1.0, -1.0, 1.0, -1.0]))
    assert res.coef[1] == pytest.approx(0.0, abs=1e-14)


def test_matches_statsmodels():
    rng = np.random.default_rng(7)
    x = np.column_stack([np.ones(43), rng.normal(size=(43, 11))])
    y = x @ rng.normal(size=12) + rng.normal(size=43)
    ours = ols_fit(x, y)
    ref = sm.OLS(y, x).fit()
    assert ours.coef == pytest.approx(ref.params, abs=1e-10)
    assert ours.se == pytest.approx(ref.bse, rel=1e-8)
    assert ours.p == pytest.approx(ref.pvalues, rel=1e-6, abs=1e-12)
    assert ours.adj_r2 == pytest.approx(ref.rsquared_adj, abs=1e-10)
    assert ours.f == pytest.approx(ref.fvalue, rel=1e-8)
    assert ours.f_pvalue == pytest.approx(ref.f_pvalue, rel=1e-6, abs=1e-14)
    assert (ours.df_model, ours.df_resid) == (11, 31)


def test_singular_design_names_columns():
    x = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(SingularDesignError) as e:
        ols_fit(x, np.arange(10.0), ["const", "a", "b"])
    assert set(e.value.columns) & {"a", "b"}
    with pytest.raises(SingularDesignError):
        ols_fit(np.ones((2, 2)), np.ones(2))
    with pytest.raises(ValueError):
        ols_fit(np.random.default_rng(0).normal(size=(10, 2)), np.ones(10))


def test_vif_cases():
    x = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    assert [v.value for v in vif(x)] == pytest.approx([1.0, 1.0])
    dup = np.column_stack([np.arange(6.0), np.arange(6.0), np.random.default_rng(0).normal(size=6)])
    flags = vif(dup)
    assert flags[0].collinear and flags[1].collinear and np.isinf(flags[0].value)
    # exact correlation 0.8: two standardised columns built from orthogonal pieces
    a = np.array([1, -1, 1, -1, 1, -1, 1, -1], dtype=float)
    b = np.array([1, 1, -1, -1, 1, 1, -1, -1], dtype=float)
    x2 = np.column_stack([a, 0.8 * a + 0.6 * b])
    assert np.corrcoef(x2.T)[0, 1] == pytest.approx(0.8)
    assert [v.value for v in vif(x2)] == pytest.approx([1 / (1 - 0.64)] * 2)


def test_vif_matches_statsmodels():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(40, 4))
    x[:, 3] += 0.7 * x[:, 0]
    ours = [v.value for v in vif(x)]
    xc = np.column_stack([np.ones(40), x])
    ref = [variance_inflation_factor(xc, j) for j in range(1, 5)]
    assert ours == pytest.approx(ref, rel=1e-9)


def test_design_with_fields():
    feats = []
    rng = np.random.default_rng(0)
    for i in range(14):
        f = features_for(toy_run(f"d{i}", FIELDS[i % 6]))
        f.N1 = int(rng.integers(50, 500))
        f.pct_out = float(rng.uniform(0, 100))
        f.growth_density = float(rng.normal())
        f.indices["MAWIS2"] = float(rng.uniform(-0.2, 0.6))
        feats.append(f)
    x, y, names, kept = build_design(feats, model=2)
    assert x.shape == (14, 1 + len(MODEL2_TERMS) + 5)
    assert "humanities" not in names and names[0] == "intercept"
    assert len(kept) == 14 and y.shape == (14,)


def test_format_regression():
    rng = np.random.default_rng(1)
    x = np.column_stack([np.ones(20), rng.normal(size=(20, 2))])
    res = ols_fit(x, rng.normal(size=20), ["intercept", "a", "b"])
    text = format_regression({"Model 1": res}, "title")
    assert "Adjusted R^2" in text and "(2; 17)" in text
