import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import empirical_mutual_information, lasso_grid_2d
from transmode.boosting import BoostingParams
from transmode.errors import DegenerateLabels, SchemaError, SizeError
from transmode.features import (CATEGORICAL, NUMERIC, FeatureMatrix, ImportanceScore, aggregate_mean_rank,
                                boosting_importance, design_matrix, feature_matrix, forest_importance,
                                fractional_ranks, l1_logistic_cd, lasso_importance, rank_features,
                                select_top_k, univariate_importance)


def fm_of(columns: dict, labels, kinds=None) -> FeatureMatrix:
    names = tuple(columns)
    values = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    kinds = tuple((kinds or {}).get(n, NUMERIC) for n in names)
    return FeatureMatrix(names, kinds, values, tuple(labels))


def planted(n=300, seed=0, noise=4):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, n)
    cols = {"signal": y + rng.normal(0, 0.3, n)}
    for j in range(noise):
        cols[f"noise{j}"] = rng.normal(size=n)
    return fm_of(cols, y)


# --------------------------------------------------------------------------
# univariate


def test_univariate_label_copy_scores_highest():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 200)
    fm = fm_of({"copy": y, "a": rng.normal(size=200), "b": rng.normal(size=200)}, y)
    s = univariate_importance(fm).scores
    assert s["copy"] > s["a"] and s["copy"] > s["b"]
    assert np.isfinite(s["copy"])


def test_univariate_constant_feature_scores_zero():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 50)
    fm = fm_of({"const": np.ones(50), "cat_const": np.zeros(50)}, y, {"cat_const": CATEGORICAL})
    s = univariate_importance(fm).scores
    assert s["const"] == 0.0 and s["cat_const"] == 0.0


def test_univariate_order_agrees_with_mutual_information_oracle():
    rng = np.random.default_rng(7)
    n = 400
    y = rng.integers(0, 3, n)
    f1 = np.where(rng.random(n) < 0.7, y, rng.integers(0, 3, n))
    f2 = rng.integers(0, 3, n)
    f3 = rng.integers(0, 4, n)
    fm = fm_of({"f1": f1, "f2": f2, "f3": f3}, y, {k: CATEGORICAL for k in ("f1", "f2", "f3")})
    s = univariate_importance(fm).scores
    mi = {k: empirical_mutual_information(list(v), list(y)) for k, v in (("f1", f1), ("f2", f2), ("f3", f3))}
    assert max(mi, key=mi.get) == "f1"
    assert s["f1"] > s["f2"] and s["f1"] > s["f3"]


def test_univariate_requires_two_labels():
    with pytest.raises(DegenerateLabels):
        univariate_importance(fm_of({"a": [1, 2, 3]}, [0, 0, 0]))


# --------------------------------------------------------------------------
# lasso

TOY_X = np.array([[0.5, 1.0], [1.5, -0.3], [-1.0, 0.2], [-0.4, -1.2], [1.1, 0.8], [-1.6, -0.5],
                  [0.3, -0.9], [-0.2, 1.4], [0.9, -0.1], [-0.7, 0.6]])
TOY_Y = np.array([1, 1, 0, 0, 1, 0, 0, 1, 0, 1], dtype=float)


@pytest.mark.parametrize("lam", [0.01, 0.05, 0.2, 0.5])
def test_coordinate_descent_matches_grid_oracle(lam):
    fit = l1_logistic_cd(TOY_X, TOY_Y, lam, fit_intercept=False, tol=1e-12, max_iter=500)
    b, v = lasso_grid_2d(TOY_X.tolist(), TOY_Y.tolist(), lam)
    assert fit.converged
    assert np.allclose(fit.beta, b, atol=1e-3)
    assert fit.objective <= v + 1e-9


def test_lasso_strong_penalty_zeroes_noise():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 3, 150)
    fm = fm_of({f"n{j}": rng.normal(size=150) for j in range(4)}, y)
    s = lasso_importance(fm, lambda_grid=[5.0])
    assert all(v == 0.0 for v in s.scores.values())


def test_lasso_separating_feature_has_unique_max():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, 120)
    fm = fm_of({"sep": y * 2.0 - 1 + rng.normal(0, 0.1, 120), "n0": rng.normal(size=120),
                "n1": rng.normal(size=120)}, y)
    s = lasso_importance(fm, lambda_grid=[0.01]).scores
    assert s["sep"] > max(s["n0"], s["n1"])


def test_lasso_path_sparsity_is_monotone():
    fm = planted(n=240, seed=4)
    X, _, _ = design_matrix(fm)
    X = (X - X.mean(0)) / X.std(0)
    y01 = (np.asarray([int(v) for v in fm.labels]) == 0).astype(float)
    counts = [int(np.count_nonzero(l1_logistic_cd(X, y01, lam).beta)) for lam in np.geomspace(1e-3, 0.3, 10)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_lasso_reports_selected_lambda_and_convergence():
    s = lasso_importance(planted(seed=5))
    assert s.converged and s.details["lambda"] in s.details["lambda_grid"]
    assert max(s.scores, key=s.scores.get) == "signal"


# --------------------------------------------------------------------------
# forest and boosting


def test_forest_label_feature_dominates():
    rng = np.random.default_rng(4)
    y = rng.integers(0, 3, 200)
    fm = fm_of({"copy": y, "a": rng.normal(size=200), "b": rng.normal(size=200)}, y)
    s = forest_importance(fm, n_trees=30, seed=0).scores
    assert s["copy"] > 0.8 * sum(s.values())


def test_forest_noise_importances_roughly_uniform():
    rng = np.random.default_rng(5)
    p = 5
    y = rng.integers(0, 2, 200)
    fm = fm_of({f"n{j}": rng.normal(size=200) for j in range(p)}, y)
    s = forest_importance(fm, n_trees=200, max_depth=4, seed=1).scores
    total = sum(s.values())
    shares = [v / total for v in s.values()]
    assert all(1 / (3 * p) <= sh <= 3 / p for sh in shares)


def test_forest_is_deterministic_given_seed():
    fm = planted(seed=6)
    assert forest_importance(fm, n_trees=20, seed=3).scores == forest_importance(fm, n_trees=20, seed=3).scores
    assert forest_importance(fm, n_trees=20, seed=3).scores != forest_importance(fm, n_trees=20, seed=4).scores


def test_boosting_importance_label_copy_and_constant():
    rng = np.random.default_rng(6)
    y = rng.integers(0, 3, 150)
    fm = fm_of({"copy": y, "const": np.ones(150), "a": rng.normal(size=150)}, y)
    s = boosting_importance(fm, BoostingParams(n_rounds=10)).scores
    assert s["const"] == 0.0
    assert s["copy"] > 0.9 * sum(s.values())


def test_boosting_importance_finds_planted_interaction():
    rng = np.random.default_rng(8)
    n = 400
    a, b = rng.integers(0, 2, n), rng.integers(0, 2, n)
    y = a & b  # needs both features; unlike XOR each has a marginal effect a greedy split can see
    fm = fm_of({"a": a, "b": b, "n0": rng.normal(size=n), "n1": rng.normal(size=n)}, y)
    s = boosting_importance(fm, BoostingParams(n_rounds=20, max_depth=2)).scores
    assert min(s["a"], s["b"]) > max(s["n0"], s["n1"])


# --------------------------------------------------------------------------
# aggregation


def test_mean_rank_identity_for_one_selector():
    sc = ImportanceScore("only", {"a": 3.0, "b": 2.0, "c": 1.0})
    r = aggregate_mean_rank([sc], k=3)
    assert r.mean_rank == {"a": 1.0, "b": 2.0, "c": 3.0}
    assert select_top_k(r) == ["a", "b", "c"]


def test_mean_rank_hand_table_with_ties():
    s1 = ImportanceScore("s1", {"a": 9.0, "b": 5.0, "c": 5.0, "d": 1.0})
    s2 = ImportanceScore("s2", {"a": 1.0, "b": 4.0, "c": 3.0, "d": 2.0})
    s3 = ImportanceScore("s3", {"a": 2.0, "b": 8.0, "c": 1.0, "d": 3.0})
    r = aggregate_mean_rank([s1, s2, s3], k=2)
    assert r.per_selector_ranks["s1"] == {"a": 1.0, "b": 2.5, "c": 2.5, "d": 4.0}
    # a: (1 + 4 + 3)/3, b: (2.5 + 1 + 1)/3, c: (2.5 + 2 + 4)/3, d: (4 + 3 + 2)/3
    assert r.mean_rank == pytest.approx({"a": 8 / 3, "b": 1.5, "c": 8.5 / 3, "d": 3.0})
    assert r.selected == ("b", "a")


def test_mean_rank_arithmetic_and_name_tiebreak():
    scores = [ImportanceScore(f"s{i}", {"x": float(3 - i), "y": float(i), "z": 1.5}) for i in range(3)]
    r = aggregate_mean_rank(scores, k=3)
    assert r.mean_rank["z"] == 2.0
    assert aggregate_mean_rank([ImportanceScore("s", {"b": 1.0, "a": 1.0})], k=1).selected == ("a",)


def test_aggregate_errors():
    with pytest.raises(SchemaError):
        aggregate_mean_rank([ImportanceScore("a", {"x": 1.0}), ImportanceScore("b", {"y": 1.0})])
    with pytest.raises(SizeError):
        aggregate_mean_rank([ImportanceScore("a", {"x": 1.0})], k=2)
    with pytest.raises(SchemaError):
        aggregate_mean_rank([ImportanceScore("a", {"x": 1.0}), ImportanceScore("a", {"x": 2.0})], k=1)


score_dicts = st.lists(st.integers(0, 5), min_size=2, max_size=8).map(
    lambda v: {f"f{i}": float(x) for i, x in enumerate(v)})


@given(score_dicts)
def test_fractional_ranks_sum(scores):
    p = len(scores)
    assert sum(fractional_ranks(scores).values()) == pytest.approx(p * (p + 1) / 2)


@given(st.lists(st.lists(st.integers(0, 5), min_size=4, max_size=4), min_size=2, max_size=4), st.randoms())
@settings(max_examples=60)
def test_aggregation_selector_order_invariant_and_monotone(rows, rnd):
    scores = [ImportanceScore(f"s{i}", {f"f{j}": float(v) for j, v in enumerate(r)}) for i, r in enumerate(rows)]
    shuffled = scores[:]
    rnd.shuffle(shuffled)
    a, b = aggregate_mean_rank(scores, k=4), aggregate_mean_rank(shuffled, k=4)
    assert a.mean_rank == pytest.approx(b.mean_rank) and a.selected == b.selected
    for f in a.mean_rank:
        for g in a.mean_rank:
            if all(s.scores[f] > s.scores[g] for s in scores):
                assert a.mean_rank[f] < a.mean_rank[g]


def test_feature_matrix_from_records_and_report(synthetic_600):
    fm = feature_matrix(synthetic_600)
    assert fm.n_rows == 600 and "distance_miles" in fm.names and "trip_start_hour" in fm.names
    X, groups, names = design_matrix(fm)
    assert X.shape[0] == 600 and len(groups) == X.shape[1] == len(names)
    ranking, scores = rank_features(fm, k=15, selectors=("univariate", "boosting"))
    report = ranking.to_report()
    assert [row["feature"] for row in report["features"]] == ranking.ordered()
    assert sum(row["selected"] for row in report["features"]) == 15
