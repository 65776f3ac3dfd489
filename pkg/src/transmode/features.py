"""Feature-importance selectors and mean-rank aggregation."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy import stats

from .boosting import BoostingParams, train_gradient_boosting
from .codes import MODES, Mode
from .errors import DegenerateLabels, SchemaError, SizeError
from .survey import Dataset, TripRecord
from .trees import build_tree

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str
    category: str
    label: str
    extract: Callable[[TripRecord], float]


def _enum_code(enum_cls):
    members = list(enum_cls)
    return lambda v: float(members.index(v))


_purpose_keys = ["home", "work", "school", "medical", "shopping", "social", "transport_someone", "meals", "other"]

# Encoding table for TripRecord attributes. Nominal attributes are category
# codes; they are one-hot expanded wherever a selector needs a design matrix.
FEATURES: tuple[FeatureDef, ...] = (
    FeatureDef("distance_miles", NUMERIC, "Trip characteristics", "trip distance", lambda r: r.distance_miles),
    FeatureDef("duration_minutes", NUMERIC, "Trip characteristics", "travel time", lambda r: r.duration_minutes),
    FeatureDef("trip_purpose", CATEGORICAL, "Trip characteristics", "trip purpose",
               lambda r: float(_purpose_keys.index(r.trip_purpose))),
    FeatureDef("age", NUMERIC, "Person characteristics", "age", lambda r: r.age),
    FeatureDef("gender", CATEGORICAL, "Person characteristics", "gender",
               lambda r: _enum_code(type(r.gender))(r.gender)),
    FeatureDef("has_license", NUMERIC, "Person characteristics", "driving license status",
               lambda r: float(r.has_license)),
    FeatureDef("employed", NUMERIC, "Person characteristics", "employment status", lambda r: float(r.employed)),
    FeatureDef("household_size", NUMERIC, "Household characteristics", "household size",
               lambda r: r.household_size),
    FeatureDef("vehicle_count", NUMERIC, "Household characteristics", "number of household vehicles",
               lambda r: r.vehicle_count),
    FeatureDef("home_ownership", CATEGORICAL, "Household characteristics", "homeownership",
               lambda r: _enum_code(type(r.home_ownership))(r.home_ownership)),
    FeatureDef("income_bracket", NUMERIC, "Household characteristics", "household income",
               lambda r: r.income_bracket),
    FeatureDef("urban_rural", NUMERIC, "Built environment", "urban/rural location",
               lambda r: float(r.urban_rural.value == "Urban")),
    FeatureDef("msa_population_bracket", CATEGORICAL, "Built environment", "MSA population size",
               lambda r: float(r.msa_population_bracket)),
    FeatureDef("rail_available", NUMERIC, "Built environment", "rail transit availability",
               lambda r: float(r.rail_available)),
    FeatureDef("gas_price_cents", NUMERIC, "Pricing factors", "gasoline price", lambda r: r.gas_price_cents),
)
FEATURE_BY_NAME: dict[str, FeatureDef] = {f.name: f for f in FEATURES}


def feature_label(name: str) -> str:
    f = FEATURE_BY_NAME.get(name)
    return f.label if f else name.replace("_", " ")


@dataclass(frozen=True)
class FeatureMatrix:
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    values: np.ndarray
    labels: tuple

    def __post_init__(self):
        n, p = self.values.shape
        if p != len(self.names) or p != len(self.kinds):
            raise SchemaError("names/kinds do not match column count")
        if n != len(self.labels):
            raise SchemaError("label count does not match row count")
        if not np.all(np.isfinite(self.values)):
            raise SchemaError("feature matrix contains missing values")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def feature_matrix(ds: Dataset | Sequence[TripRecord], features: Sequence[str] | None = None,
                   include_extras: bool = True) -> FeatureMatrix:
    records = list(ds)
    defs = [FEATURE_BY_NAME[f] for f in features] if features else list(FEATURES)
    extra_names: list[str] = []
    if include_extras and records and features is None:
        common = set(records[0].extras)
        for r in records[1:]:
            common &= set(r.extras)
        extra_names = sorted(common)
    cols = [[d.extract(r) for r in records] for d in defs]
    cols += [[r.extras[e] for r in records] for e in extra_names]
    values = np.asarray(cols, dtype=float).T if cols else np.zeros((len(records), 0))
    values = values.reshape(len(records), len(defs) + len(extra_names))
    labels = []
    for r in records:
        if r.observed_mode is None:
            raise SchemaError(f"record {r.trip_id} has an excluded mode")
        labels.append(r.observed_mode)
    return FeatureMatrix(
        names=tuple(d.name for d in defs) + tuple(extra_names),
        kinds=tuple(d.kind for d in defs) + (NUMERIC,) * len(extra_names),
        values=values,
        labels=tuple(labels),
    )


def design_matrix(fm: FeatureMatrix) -> tuple[np.ndarray, list[int], list[str]]:
    """One-hot expand categorical columns.

    Returns the numeric matrix, the source-feature index of every output
    column and the output column names.
    """
    blocks, groups, names = [], [], []
    for j, (name, kind) in enumerate(zip(fm.names, fm.kinds)):
        col = fm.values[:, j]
        if kind == CATEGORICAL:
            for level in np.unique(col):
                blocks.append((col == level).astype(float))
                groups.append(j)
                names.append(f"{name}={level:g}")
        else:
            blocks.append(col)
            groups.append(j)
            names.append(name)
    X = np.column_stack(blocks) if blocks else np.zeros((fm.n_rows, 0))
    return X, groups, names


def _label_index(labels: Sequence[Hashable]) -> tuple[np.ndarray, list]:
    classes = [m for m in MODES if m in set(labels)] if all(isinstance(l, Mode) for l in labels) \
        else sorted(set(labels))
    idx = {c: i for i, c in enumerate(classes)}
    return np.array([idx[l] for l in labels], dtype=np.int64), classes


def _require_labels(fm: FeatureMatrix) -> tuple[np.ndarray, list]:
    y, classes = _label_index(fm.labels)
    if len(classes) < 2:
        raise DegenerateLabels("importance needs at least two distinct labels")
    return y, classes


@dataclass(frozen=True)
class ImportanceScore:
    selector_name: str
    scores: Mapping[str, float]
    converged: bool = True
    details: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        bad = [f for f, v in self.scores.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite importance for {bad}")


def _group_reduce(values: np.ndarray, groups: Sequence[int], p: int, how: str) -> np.ndarray:
    out = np.zeros(p)
    for v, g in zip(values, groups):
        out[g] = out[g] + v if how == "sum" else max(out[g], v)
    return out


# --------------------------------------------------------------------------
# univariate


def _neg_log10_sf(dist: str, x: float, *df: float) -> float:
    if x <= 0:
        return 0.0
    lsf = stats.f.logsf(x, *df) if dist == "f" else stats.chi2.logsf(x, *df)
    if np.isfinite(lsf):
        return float(max(-lsf / math.log(10), 0.0))
    import mpmath  # only reached when the tail underflows double precision

    if dist == "f":
        d1, d2 = df
        sf = mpmath.betainc(d2 / 2, d1 / 2, 0, d2 / (d2 + d1 * x), regularized=True)
    else:
        sf = mpmath.gammainc(df[0] / 2, x / 2, mpmath.inf, regularized=True)
    return float(-mpmath.log10(sf)) if sf > 0 else 1e300


def anova_f(x: np.ndarray, y: np.ndarray) -> tuple[float, int, int]:
    groups = np.unique(y)
    n, k = len(x), len(groups)
    grand = x.mean()
    sst = float(((x - grand) ** 2).sum())
    ssb = sum(float((y == g).sum()) * (x[y == g].mean() - grand) ** 2 for g in groups)
    ssw = max(sst - ssb, 0.0)
    df_b, df_w = k - 1, max(n - k, 1)
    if sst <= 1e-15 * max(1.0, grand * grand) * n or ssb <= 0:
        return 0.0, df_b, df_w
    ssw = max(ssw, 1e-12 * sst)
    return (ssb / df_b) / (ssw / df_w), df_b, df_w


def chi_square(x: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    levels, xi = np.unique(x, return_inverse=True)
    classes, yi = np.unique(y, return_inverse=True)
    table = np.zeros((len(levels), len(classes)))
    np.add.at(table, (xi, yi), 1)
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (table - expected) ** 2 / expected, 0.0)
    dof = max((len(levels) - 1) * (len(classes) - 1), 1)
    return float(terms.sum()), dof


def univariate_importance(fm: FeatureMatrix) -> ImportanceScore:
    """-log10 p-value of a per-feature association test against the label.

    Numeric columns use the one-way ANOVA F test, categorical columns the
    chi-square test of independence. Reporting both on the p-value scale
    keeps statistics from different tests comparable within one ranking.
    """
    y, _ = _require_labels(fm)
    scores, stat = {}, {}
    for j, (name, kind) in enumerate(zip(fm.names, fm.kinds)):
        x = fm.values[:, j]
        if kind == CATEGORICAL:
            chi2, dof = chi_square(x, y)
            stat[name] = chi2
            scores[name] = _neg_log10_sf("chi2", chi2, dof)
        else:
            f, d1, d2 = anova_f(x, y)
            stat[name] = f
            scores[name] = _neg_log10_sf("f", f, d1, d2)
    return ImportanceScore("univariate", scores, details={"statistic": stat})


# --------------------------------------------------------------------------
# lasso


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def penalized_logistic_loss(X, y01, intercept, beta, lam) -> float:
    eta = intercept + X @ beta
    return float(np.mean(np.logaddexp(0.0, eta) - y01 * eta) + lam * np.abs(beta).sum())


@dataclass
class LassoFit:
    intercept: float
    beta: np.ndarray
    converged: bool
    n_iter: int
    objective: float


def l1_logistic_cd(X: np.ndarray, y01: np.ndarray, lam: float, *, fit_intercept: bool = True,
                   max_iter: int = 200, tol: float = 1e-8, warm: LassoFit | None = None) -> LassoFit:
    """L1-penalised logistic regression by cyclic coordinate descent.

    Minimises ``mean(log(1+exp(eta)) - y*eta) + lam * |beta|_1`` with an
    unpenalised intercept. Each outer iteration forms the IRLS quadratic
    approximation and sweeps soft-thresholded coordinate updates over it;
    the step is halved whenever the true objective would increase.
    """
    n, p = X.shape
    b0 = warm.intercept if warm else (math.log((y01.mean() + 1e-9) / (1 - y01.mean() + 1e-9)) if fit_intercept else 0.0)
    beta = warm.beta.copy() if warm else np.zeros(p)
    obj = penalized_logistic_loss(X, y01, b0, beta, lam)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = b0 + X @ beta
        prob = _sigmoid(eta)
        w = np.maximum(prob * (1 - prob), 1e-5)
        z = eta + (y01 - prob) / w
        # weighted Gram form of the IRLS quadratic: coordinate updates cost O(p)
        wX = X * w[:, None]
        G = (wX.T @ X) / n
        c = (wX.T @ z) / n
        u = wX.mean(axis=0)
        sw, swz = float(w.mean()), float((w * z).mean())
        diag = np.diag(G).copy()
        nb0, nbeta = b0, beta.copy()
        for _ in range(50):
            max_delta = 0.0
            if fit_intercept:
                new0 = (swz - float(u @ nbeta)) / sw
                max_delta = abs(new0 - nb0)
                nb0 = new0
            for j in range(p):
                if diag[j] <= 0:
                    continue
                rho = c[j] - u[j] * nb0 - float(G[j] @ nbeta) + diag[j] * nbeta[j]
                new = math.copysign(max(abs(rho) - lam, 0.0), rho) / diag[j]
                delta = new - nbeta[j]
                if delta != 0.0:
                    nbeta[j] = new
                    max_delta = max(max_delta, abs(delta))
            if max_delta < tol:
                break
        step = 1.0
        while True:
            cb0 = b0 + step * (nb0 - b0)
            cbeta = beta + step * (nbeta - beta)
            cobj = penalized_logistic_loss(X, y01, cb0, cbeta, lam)
            if cobj <= obj + 1e-15 or step < 1e-10:
                break
            step *= 0.5
        change = max(abs(cb0 - b0), float(np.abs(cbeta - beta).max()) if p else 0.0)
        improved = cobj <= obj + 1e-15
        if improved:
            b0, beta, obj = cb0, cbeta, cobj
        if change < tol or not improved:
            converged = True
            break
    beta[np.abs(beta) < 1e-12] = 0.0
    return LassoFit(b0, beta, converged, it, obj)


def standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


DEFAULT_LAMBDA_GRID = tuple(float(v) for v in np.geomspace(0.2, 2e-4, 12))


def _ovr_path(X, y, n_classes, lambdas, max_iter):
    """Coefficients (len(lambdas), K, 1 + p) along a warm-started path."""
    out = np.zeros((len(lambdas), n_classes, X.shape[1] + 1))
    ok = True
    for c in range(n_classes):
        y01 = (y == c).astype(float)
        warm = None
        for i, lam in enumerate(lambdas):
            warm = l1_logistic_cd(X, y01, lam, max_iter=max_iter, warm=warm)
            ok &= warm.converged
            out[i, c, 0] = warm.intercept
            out[i, c, 1:] = warm.beta
    return out, ok


def _ovr_logloss(coef, X, y):
    raw = _sigmoid(coef[:, 0][None, :] + X @ coef[:, 1:].T)
    prob = raw / np.maximum(raw.sum(axis=1, keepdims=True), 1e-300)
    return float(-np.log(np.clip(prob[np.arange(len(y)), y], 1e-15, None)).mean())


def lasso_importance(fm: FeatureMatrix, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                     seed: int = 0, max_iter: int = 200) -> ImportanceScore:
    """One-vs-rest L1 logistic regression; score is max |coefficient|.

    The penalty is picked from ``lambda_grid`` by held-out log-loss on a
    seeded 80/20 split, then refit on all rows. Categorical features are
    one-hot expanded and scored by their largest dummy coefficient.
    """
    y, classes = _require_labels(fm)
    X, groups, _ = design_matrix(fm)
    X = standardize(X)
    lambdas = sorted(float(l) for l in lambda_grid)[::-1]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_val = max(1, int(round(0.2 * len(y))))
    val, tr = perm[:n_val], perm[n_val:]
    K = len(classes)
    ok = True
    if len(set(y[tr])) == K and len(tr) > 1:
        path, ok = _ovr_path(X[tr], y[tr], K, lambdas, max_iter)
        losses = [_ovr_logloss(path[i], X[val], y[val]) for i in range(len(lambdas))]
        best = int(np.argmin(losses))  # first minimum = largest penalty among ties
    else:
        losses, best = [], len(lambdas) // 2
    lam = lambdas[best]
    full, ok_full = _ovr_path(X, y, K, lambdas[: best + 1], max_iter)
    coef = full[-1]
    col_scores = np.abs(coef[:, 1:]).max(axis=0)
    per_feature = _group_reduce(col_scores, groups, len(fm.names), "max")
    if not (ok and ok_full):
        log.warning("lasso coordinate descent hit max_iter=%d; scores are from a partial fit", max_iter)
    return ImportanceScore(
        "lasso",
        {n: float(v) for n, v in zip(fm.names, per_feature)},
        converged=bool(ok and ok_full),
        details={"lambda": lam, "lambda_grid": lambdas, "validation_logloss": losses},
    )


# --------------------------------------------------------------------------
# tree ensembles


def forest_importance(fm: FeatureMatrix, n_trees: int = 100, max_depth: int = 8,
                      seed: int = 0) -> ImportanceScore:
    """Mean Gini-impurity decrease over a bootstrap forest with sqrt(p) feature sampling."""
    y, classes = _require_labels(fm)
    X, groups, _ = design_matrix(fm)
    n, p = X.shape
    Y = np.eye(len(classes))[y]
    rng = np.random.default_rng(seed)
    m = max(1, int(math.sqrt(p)))
    total = np.zeros(p)
    for _ in range(n_trees):
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        rows = np.nonzero(counts)[0]
        tree = build_tree(X, Y, counts, max_depth=max_depth, max_features=m, rng=rng,
                          rows=rows)
        g = tree.feature_gain(p)
        if g.sum() > 0:
            total += g / g.sum()
    total /= max(n_trees, 1)
    per_feature = _group_reduce(total, groups, len(fm.names), "sum")
    return ImportanceScore("forest", {nm: float(v) for nm, v in zip(fm.names, per_feature)},
                           details={"n_trees": n_trees, "max_depth": max_depth, "max_features": m})


def boosting_importance(fm: FeatureMatrix, params: BoostingParams = BoostingParams(n_rounds=50)) -> ImportanceScore:
    """Total split gain per feature across a softmax gradient-boosting model."""
    y, classes = _require_labels(fm)
    X, groups, _ = design_matrix(fm)
    model = train_gradient_boosting(X, list(y), params)
    per_feature = _group_reduce(model.feature_gain(), groups, len(fm.names), "sum")
    return ImportanceScore("boosting", {nm: float(v) for nm, v in zip(fm.names, per_feature)},
                           details={"n_rounds": params.n_rounds, "max_depth": params.max_depth})


SELECTORS = {
    "univariate": lambda fm, seed: univariate_importance(fm),
    "lasso": lambda fm, seed: lasso_importance(fm, seed=seed),
    "forest": lambda fm, seed: forest_importance(fm, seed=seed),
    "boosting": lambda fm, seed: boosting_importance(fm, BoostingParams(n_rounds=50, seed=seed)),
}


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class FeatureRanking:
    per_selector_ranks: Mapping[str, Mapping[str, float]]
    mean_rank: Mapping[str, float]
    selected: tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.selected)

    def ordered(self) -> list[str]:
        return sorted(self.mean_rank, key=lambda f: (self.mean_rank[f], f))

    def to_report(self) -> dict:
        rows = []
        chosen = set(self.selected)
        for f in self.ordered():
            fd = FEATURE_BY_NAME.get(f)
            rows.append({
                "feature": f,
                "category": fd.category if fd else "Other",
                "label": feature_label(f),
                "ranks": {s: r[f] for s, r in self.per_selector_ranks.items()},
                "mean_rank": self.mean_rank[f],
                "selected": f in chosen,
            })
        return {"selectors": list(self.per_selector_ranks), "k": self.k, "features": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_report(), indent=2)

    @classmethod
    def from_report(cls, report: Mapping) -> "FeatureRanking":
        rows = report["features"]
        per = {s: {row["feature"]: row["ranks"][s] for row in rows} for s in report["selectors"]}
        mean = {row["feature"]: row["mean_rank"] for row in rows}
        selected = tuple(row["feature"] for row in rows if row["selected"])
        return cls(per, mean, selected)


def fractional_ranks(scores: Mapping[str, float]) -> dict[str, float]:
    """Rank 1 = highest score; tied scores share the average of their positions."""
    names = list(scores)
    r = stats.rankdata([-scores[f] for f in names], method="average")
    return {f: float(v) for f, v in zip(names, r)}


def aggregate_mean_rank(scores: Sequence[ImportanceScore], k: int = 15) -> FeatureRanking:
    if not scores:
        raise SchemaError("at least one importance score is required")
    names = [s.selector_name for s in scores]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate selector names: {names}")
    feature_set = set(scores[0].scores)
    for s in scores[1:]:
        if set(s.scores) != feature_set:
            raise SchemaError(f"selector {s.selector_name!r} covers a different feature set")
    if not 1 <= k <= len(feature_set):
        raise SizeError(f"k={k} must be between 1 and {len(feature_set)}")
    per = {s.selector_name: fractional_ranks(s.scores) for s in scores}
    mean = {f: float(np.mean([per[s][f] for s in per])) for f in sorted(feature_set)}
    selected = tuple(sorted(mean, key=lambda f: (mean[f], f))[:k])
    return FeatureRanking(per, mean, selected)


def select_top_k(ranking: FeatureRanking) -> list[str]:
    return list(ranking.selected)


def rank_features(fm: FeatureMatrix, k: int = 15, selectors: Sequence[str] = tuple(SELECTORS),
                  seed: int = 0) -> tuple[FeatureRanking, list[ImportanceScore]]:
    unknown = [s for s in selectors if s not in SELECTORS]
    if unknown:
        raise SchemaError(f"unknown selectors: {unknown}")
    scores = [SELECTORS[s](fm, seed) for s in selectors]
    return aggregate_mean_rank(scores, min(k, len(fm.names))), scores
