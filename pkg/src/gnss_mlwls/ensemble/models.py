"""Random forest, AdaBoost and gradient boosting built on :mod:`.tree`."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .tree import TreeConfig, TreeNode, _check_data, canonical_order, fit_tree, flatten, predict_flat

FORMAT_NAME = "gnss_mlwls.ensemble"
FORMAT_VERSION = 1
KINDS = ("random_forest", "adaboost", "gradient_boosting")
EPS_CLAMP = 1e-10


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    feature_subset_size: Optional[int] = 3
    bootstrap: bool = True
    criterion: str = "gini"
    min_leaf: int = 1
    rng_seed: int = 0


@dataclass(frozen=True)
class AdaBoostConfig:
    n_learners: int = 100
    learning_rate: float = 0.5
    stump_depth: int = 1
    rng_seed: int = 0


@dataclass(frozen=True)
class BoostingConfig:
    n_iter: int = 100
    learning_rate: float = 0.1
    tree_depth: int = 3
    min_leaf: int = 1
    rng_seed: int = 0


@dataclass
class EnsembleModel:
    kind: str
    learners: list
    alphas: list = field(default_factory=list)  # AdaBoost vote weights
    learning_rate: float = 1.0
    init_score: float = 0.0  # GB initial log-odds
    hyperparameters: dict = field(default_factory=dict)
    feature_names: tuple = ()
    constellation: Optional[str] = None
    train_loss: list = field(default_factory=list)  # GB log-loss after each stage
    _flat: Optional[list] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not all(math.isfinite(a) for a in self.alphas):
            raise ValueError("AdaBoost weights must be finite")
        if not math.isfinite(self.init_score):
            raise ValueError("initial score must be finite")

    def flat(self) -> list:
        if self._flat is None:
            self._flat = [flatten(t) for t in self.learners]
        return self._flat

    def predict_score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "random_forest":
            return predict_forest_score(self, X)
        if self.kind == "adaboost":
            return predict_adaboost_score(self, X)
        return predict_gb_score(self, X)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "constellation": self.constellation,
            "feature_names": list(self.feature_names),
            "hyperparameters": self.hyperparameters,
            "learning_rate": self.learning_rate,
            "init_score": self.init_score,
            "alphas": list(self.alphas),
            "train_loss": list(self.train_loss),
            "learners": [t.to_dict() for t in self.learners],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("format") != FORMAT_NAME:
            raise ValueError("not a serialized ensemble model")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        return cls(
            kind=d["kind"],
            learners=[TreeNode.from_dict(t) for t in d["learners"]],
            alphas=[float(a) for a in d["alphas"]],
            learning_rate=float(d["learning_rate"]),
            init_score=float(d["init_score"]),
            hyperparameters=dict(d["hyperparameters"]),
            feature_names=tuple(d["feature_names"]),
            constellation=d.get("constellation"),
            train_loss=[float(v) for v in d.get("train_loss", [])],
        )

    @classmethod
    def from_json(cls, text: str) -> "EnsembleModel":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _sorted_data(X, y, sample_weight=None):
    X, y, w = _check_data(X, y, sample_weight)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    order = canonical_order(X, y, None if sample_weight is None else w)
    return X[order], y[order], w[order]


# ---------------------------------------------------------------- forest


def fit_random_forest(X, y, config: ForestConfig = ForestConfig(), n_jobs: int = 1,
                      feature_names: Sequence[str] = (), constellation: Optional[str] = None) -> EnsembleModel:
    """Bagged CART trees with per-split random feature subsets.

    Tree ``i`` draws from a generator spawned from the master seed, and the
    bootstrap indexes the canonically sorted sample order, so the model
    depends only on the sample set and the seed.
    """
    X, y, w = _sorted_data(X, y)
    n = len(y)
    tcfg = TreeConfig(max_depth=config.max_depth, min_leaf=config.min_leaf, criterion=config.criterion,
                      feature_subset_size=config.feature_subset_size)
    seeds = np.random.SeedSequence(config.rng_seed).spawn(config.n_trees)

    def one(i: int) -> TreeNode:
        rng = np.random.default_rng(seeds[i])
        if config.bootstrap:
            idx = np.sort(rng.integers(0, n, n))
            return fit_tree(X[idx], y[idx], tcfg, rng=rng, presorted=True)
        return fit_tree(X, y, tcfg, rng=rng, presorted=True)

    if n_jobs > 1 and config.n_trees > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(one, range(config.n_trees)))
    else:
        trees = [one(i) for i in range(config.n_trees)]
    return EnsembleModel("random_forest", trees, hyperparameters=asdict(config),
                         feature_names=tuple(feature_names), constellation=constellation)


def predict_forest_score(model: EnsembleModel, X) -> np.ndarray:
    """Soft vote: mean of the trees' leaf class-1 proportions."""
    flats = model.flat()
    total = np.zeros(len(np.atleast_2d(X)))
    for t in flats:
        total += predict_flat(t, X)
    return np.clip(total / len(flats), 0.0, 1.0)


# ---------------------------------------------------------------- AdaBoost


def adaboost_alpha(eps: float, learning_rate: float) -> float:
    """``eta * log((1 - eps) / eps)``."""
    return learning_rate * math.log((1.0 - eps) / eps)


def _stump_votes(flat, X) -> np.ndarray:
    return np.where(predict_flat(flat, X) >= 0.5, 1.0, -1.0)


def fit_adaboost(X, y, config: AdaBoostConfig = AdaBoostConfig(), feature_names: Sequence[str] = (),
                 constellation: Optional[str] = None) -> EnsembleModel:
    """Discrete AdaBoost over weighted gini stumps.

    Stops when a learner's weighted error reaches 0.5 (that learner is
    discarded) or hits 0 (clamped, kept, then stop).
    """
    X, y, _ = _sorted_data(X, y)
    s = 2.0 * y - 1.0
    n = len(y)
    w = np.full(n, 1.0 / n)
    tcfg = TreeConfig(max_depth=config.stump_depth, criterion="gini")
    rng = np.random.default_rng(config.rng_seed)
    learners, alphas = [], []
    for _ in range(config.n_learners):
        stump = fit_tree(X, y, tcfg, sample_weight=w, rng=rng, presorted=True)
        h = _stump_votes(flatten(stump), X)
        eps = float(np.sum(w[h != s]) / np.sum(w))
        if eps >= 0.5:
            break
        perfect = eps <= 0.0
        a = adaboost_alpha(max(eps, EPS_CLAMP), config.learning_rate)
        learners.append(stump)
        alphas.append(a)
        if perfect:
            break
        w = w * np.exp(-a * s * h)
        w /= w.sum()
    return EnsembleModel("adaboost", learners, alphas=alphas, learning_rate=config.learning_rate,
                         hyperparameters=asdict(config), feature_names=tuple(feature_names),
                         constellation=constellation)


def predict_adaboost_margin(model: EnsembleModel, X) -> np.ndarray:
    """``sum_m alpha_m * h_m(x)``, whose sign is the hard AdaBoost decision."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(len(X))
    for a, t in zip(model.alphas, model.flat()):
        out += a * _stump_votes(t, X)
    return out


def predict_adaboost_score(model: EnsembleModel, X) -> np.ndarray:
    """Share of the total vote weight cast for class 1; 0.5 with no learners."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = float(sum(model.alphas))
    if not model.alphas or total <= 0.0:
        return np.full(len(X), 0.5)
    pos = np.zeros(len(X))
    for a, t in zip(model.alphas, model.flat()):
        pos += np.where(_stump_votes(t, X) > 0, a, 0.0)
    return np.clip(pos / total, 0.0, 1.0)


# ---------------------------------------------------------------- gradient boosting


def log_loss(labels, probs) -> float:
    p = np.clip(np.asarray(probs, dtype=float), 1e-15, 1 - 1e-15)
    y = np.asarray(labels, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def initial_log_odds(y) -> float:
    y = np.asarray(y, dtype=float)
    n1 = float(np.sum(y == 1))
    n0 = float(np.sum(y == 0))
    if n1 == 0 or n0 == 0:
        raise ValueError("gradient boosting needs both classes in the training data")
    return math.log(n1 / n0)


def pseudo_residuals(y, phi) -> np.ndarray:
    """Negative log-loss gradient ``l - sigmoid(phi)``."""
    return np.asarray(y, dtype=float) - expit(np.asarray(phi, dtype=float))


def fit_gradient_boosting(X, y, config: BoostingConfig = BoostingConfig(), feature_names: Sequence[str] = (),
                          constellation: Optional[str] = None) -> EnsembleModel:
    """Log-loss gradient boosting with mean-valued regression-tree leaves."""
    X, y, _ = _sorted_data(X, y)
    phi0 = initial_log_odds(y)
    phi = np.full(len(y), phi0)
    tcfg = TreeConfig(max_depth=config.tree_depth, min_leaf=config.min_leaf, criterion="mse")
    rng = np.random.default_rng(config.rng_seed)
    trees, losses = [], []
    for _ in range(config.n_iter):
        r = pseudo_residuals(y, phi)
        tree = fit_tree(X, r, tcfg, rng=rng, presorted=True)
        phi = phi + config.learning_rate * predict_flat(flatten(tree), X)
        trees.append(tree)
        losses.append(log_loss(y, expit(phi)))
    return EnsembleModel("gradient_boosting", trees, learning_rate=config.learning_rate, init_score=phi0,
                         hyperparameters=asdict(config), feature_names=tuple(feature_names),
                         constellation=constellation, train_loss=losses)


def predict_gb_log_odds(model: EnsembleModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi = np.full(len(X), model.init_score)
    for t in model.flat():
        phi = phi + model.learning_rate * predict_flat(t, X)
    return phi


def predict_gb_score(model: EnsembleModel, X) -> np.ndarray:
    return expit(predict_gb_log_odds(model, X))


# ---------------------------------------------------------------- metric


def accuracy(scores, labels, epoch_sizes, min_epoch_size: int = 5, threshold: float = 0.5) -> float:
    """Share of correct thresholded predictions; epochs below ``min_epoch_size`` signals are skipped.

    A score equal to the threshold counts as class 1.
    """
    s = np.asarray(scores, dtype=float)
    l = np.asarray(labels)
    sizes = np.asarray(epoch_sizes)
    if not (s.shape == l.shape == sizes.shape):
        raise ValueError("scores, labels and epoch sizes must align")
    keep = sizes >= min_epoch_size
    if not keep.any():
        raise ValueError("no samples left after excluding small epochs")
    pred = (s[keep] >= threshold).astype(int)
    return float(np.mean(pred == l[keep]))


def fit_model(kind: str, X, y, params: Optional[dict] = None, n_jobs: int = 1,
              feature_names: Sequence[str] = (), constellation: Optional[str] = None) -> EnsembleModel:
    """Dispatch by model kind with a hyperparameter dict."""
    params = dict(params or {})
    if kind == "random_forest":
        return fit_random_forest(X, y, ForestConfig(**params), n_jobs, feature_names, constellation)
    if kind == "adaboost":
        return fit_adaboost(X, y, AdaBoostConfig(**params), feature_names, constellation)
    if kind == "gradient_boosting":
        return fit_gradient_boosting(X, y, BoostingConfig(**params), feature_names, constellation)
    raise ValueError(f"unknown model kind {kind!r}")
