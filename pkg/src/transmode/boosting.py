"""Multiclass gradient boosting and LogitBoost on regression trees."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import DegenerateLabels, SchemaError
from .trees import Tree, build_tree

FORMAT_VERSION = "transmode.boosted/1"
GRADIENT_BOOSTING = "GradientBoosting"
LOGITBOOST = "LogitBoost"

W_MIN = 1e-5
Z_MAX = 4.0


@dataclass(frozen=True)
class BoostingParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.n_rounds < 0 or self.max_depth < 0:
            raise ValueError("n_rounds and max_depth must be non-negative")


@dataclass
class BoostedModel:
    algorithm: str
    classes: tuple
    n_features: int
    params: BoostingParams
    init: np.ndarray
    trees: list[list[Tree]] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    loss_curve: list[float] = field(default_factory=list)
    feature_names: tuple[str, ...] | None = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = _check_X(self, X)
        F = np.tile(self.init, (X.shape[0], 1))
        for round_trees, step in zip(self.trees, self.steps):
            F += step * _round_update(self.algorithm, round_trees, X)
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X: np.ndarray) -> list:
        proba = self.predict_proba(X)
        return [self.classes[i] for i in np.argmax(proba, axis=1)]

    def feature_gain(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for round_trees in self.trees:
            for t in round_trees:
                out += t.feature_gain(self.n_features)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "format": FORMAT_VERSION,
            "algorithm": self.algorithm,
            "classes": [_jsonable(c) for c in self.classes],
            "n_features": self.n_features,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "params": self.params.__dict__,
            "init": self.init.tolist(),
            "steps": self.steps,
            "loss_curve": self.loss_curve,
            "trees": [[t.to_dict() for t in rt] for rt in self.trees],
        })

    @classmethod
    def from_json(cls, text: str, class_decoder=None) -> "BoostedModel":
        d = json.loads(text)
        if d.get("format") != FORMAT_VERSION:
            raise SchemaError(f"unsupported model format {d.get('format')!r}")
        classes = tuple(class_decoder(c) for c in d["classes"]) if class_decoder else tuple(d["classes"])
        return cls(
            algorithm=d["algorithm"],
            classes=classes,
            n_features=d["n_features"],
            params=BoostingParams(**d["params"]),
            init=np.asarray(d["init"], dtype=float),
            trees=[[Tree.from_dict(t) for t in rt] for rt in d["trees"]],
            steps=list(d["steps"]),
            loss_curve=list(d["loss_curve"]),
            feature_names=tuple(d["feature_names"]) if d["feature_names"] else None,
        )


def _jsonable(c):
    if isinstance(c, np.generic):
        return c.item()
    return getattr(c, "value", c)


def softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def multinomial_loss(F: np.ndarray, y_idx: np.ndarray) -> float:
    Z = F - F.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y_idx)), y_idx].mean())


def _check_X(model: BoostedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(f"expected {model.n_features} features, got shape {X.shape}")
    return X


def _round_update(algorithm: str, round_trees: Sequence[Tree], X: np.ndarray) -> np.ndarray:
    f = np.column_stack([t.predict(X)[:, 0] for t in round_trees])
    if algorithm == LOGITBOOST:
        K = f.shape[1]
        f = (K - 1) / K * (f - f.mean(axis=1, keepdims=True))
    return f


def _prepare(X, y, classes):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise SchemaError("X must be 2-D with one row per label")
    if not np.all(np.isfinite(X)):
        raise SchemaError("X contains missing or non-finite values")
    present = list(dict.fromkeys(y))
    if classes is None:
        classes = present
        try:
            classes = sorted(present)
        except TypeError:
            pass
    else:
        classes = [c for c in classes if c in set(present)]
        unknown = set(present) - set(classes)
        if unknown:
            raise SchemaError(f"labels outside class order: {sorted(map(str, unknown))}")
    if len(classes) < 2:
        raise DegenerateLabels("boosting needs at least two distinct labels")
    index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([index[c] for c in y], dtype=np.int64)
    Y = np.eye(len(classes))[y_idx]
    prior = Y.mean(axis=0)
    return X, tuple(classes), y_idx, Y, prior


def _line_step(F, update, step, y_idx, prev_loss, max_halvings=30):
    """Largest step in {step, step/2, ...} that does not raise the training loss."""
    for _ in range(max_halvings):
        loss = multinomial_loss(F + step * update, y_idx)
        if loss <= prev_loss:
            return step, loss
        step *= 0.5
    return 0.0, prev_loss


def train_gradient_boosting(X, y: Sequence[Hashable], params: BoostingParams = BoostingParams(),
                            classes: Sequence[Hashable] | None = None,
                            feature_names: Sequence[str] | None = None) -> BoostedModel:
    """Softmax gradient boosting.

    Each round fits one least-squares tree per class to the residual
    ``onehot - softmax(F)`` and replaces its leaf values with the Newton
    step ``(K-1)/K * sum(r) / sum(|r|(1-|r|))``. The round is applied with
    the learning rate, halved if needed so the training loss never rises.
    """
    X, classes, y_idx, Y, prior = _prepare(X, y, classes)
    K = len(classes)
    init = np.log(prior)
    F = np.tile(init, (X.shape[0], 1))
    model = BoostedModel(GRADIENT_BOOSTING, classes, X.shape[1], params, init,
                         feature_names=tuple(feature_names) if feature_names else None)
    loss = multinomial_loss(F, y_idx)
    model.loss_curve.append(loss)
    for _ in range(params.n_rounds):
        P = softmax(F)
        round_trees, update = [], np.zeros_like(F)
        for k in range(K):
            r = Y[:, k] - P[:, k]
            tree = build_tree(X, r, max_depth=params.max_depth,
                              min_samples_leaf=params.min_samples_leaf)
            leaf = tree.apply(X)
            num = np.bincount(leaf, weights=r, minlength=tree.n_nodes)
            den = np.bincount(leaf, weights=np.abs(r) * (1 - np.abs(r)), minlength=tree.n_nodes)
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(den > 1e-12, (K - 1) / K * num / den, 0.0)
            tree.value = vals[:, None]
            update[:, k] = vals[leaf]
            round_trees.append(tree)
        step, loss = _line_step(F, update, params.learning_rate, y_idx, loss)
        F = F + step * update
        model.trees.append(round_trees)
        model.steps.append(step)
        model.loss_curve.append(loss)
    return model


def train_logitboost(X, y: Sequence[Hashable], params: BoostingParams = BoostingParams(),
                     classes: Sequence[Hashable] | None = None,
                     feature_names: Sequence[str] | None = None) -> BoostedModel:
    """K-class LogitBoost with weighted least-squares regression trees.

    Working responses ``z = (y - p) / w`` use weights ``w = p(1-p)`` floored
    at 1e-5 and are clipped to ``|z| <= 4``. Per-class fits are centred as
    ``(K-1)/K * (f_k - mean_j f_j)`` before the update.
    """
    X, classes, y_idx, Y, prior = _prepare(X, y, classes)
    K = len(classes)
    logp = np.log(prior)
    init = logp - logp.mean()
    F = np.tile(init, (X.shape[0], 1))
    model = BoostedModel(LOGITBOOST, classes, X.shape[1], params, init,
                         feature_names=tuple(feature_names) if feature_names else None)
    loss = multinomial_loss(F, y_idx)
    model.loss_curve.append(loss)
    for _ in range(params.n_rounds):
        P = softmax(F)
        round_trees = []
        for k in range(K):
            p = P[:, k]
            w = np.maximum(p * (1 - p), W_MIN)
            z = np.clip((Y[:, k] - p) / w, -Z_MAX, Z_MAX)
            round_trees.append(build_tree(X, z, weight=w, max_depth=params.max_depth,
                                          min_samples_leaf=params.min_samples_leaf))
        update = _round_update(LOGITBOOST, round_trees, X)
        step, loss = _line_step(F, update, params.learning_rate, y_idx, loss)
        F = F + step * update
        model.trees.append(round_trees)
        model.steps.append(step)
        model.loss_curve.append(loss)
    return model


def predict(model: BoostedModel, row) -> tuple[Hashable, np.ndarray]:
    """Class and probability vector for a single feature row."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise SchemaError("predict expects a single 1-D row")
    proba = model.predict_proba(row)[0]
    return model.classes[int(np.argmax(proba))], proba
