"""Classifiers and fusion for the 4-level engagement target.

The visual branch is boosted decision stumps (multiclass SAMME), the
physiological branch a random forest, and late fusion stacks their
out-of-fold probabilities under a multinomial logistic meta-classifier.
Early fusion (one forest over the concatenated features) exists as an
ablation baseline.

Everything is implemented directly on numpy so that model artifacts are
plain JSON and training is bit-reproducible from a seed: per-tree RNG
streams derive from (seed, tree index), so results do not depend on
execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .datamodel import N_CLASSES, DataError, EngagementLabel, ProbabilityVector

ARTIFACT_FORMAT_VERSION = 1

VISUAL_DIM = 15
PHYSIO_DIM = 4
META_DIM = 2 * N_CLASSES


@dataclass(frozen=True)
class EnsembleParams:
    """Training hyperparameters for both branches and the meta-classifier."""

    adaboost_rounds: int = 100
    rf_trees: int = 200
    rf_min_leaf: int = 2
    meta_epochs: int = 500
    meta_lr: float = 0.1
    meta_l2: float = 1e-3
    stack_folds: int = 5

    def __post_init__(self) -> None:
        if self.adaboost_rounds < 1 or self.rf_trees < 1 or self.stack_folds < 2:
            raise DataError("rounds, trees and folds must all be at least 1 (folds >= 2)")
        if self.rf_min_leaf < 1 or self.meta_epochs < 1 or self.meta_lr <= 0:
            raise DataError("invalid meta/forest parameters")


# ---------------------------------------------------------------------------
# AdaBoost (multiclass SAMME over depth-1 stumps)
# ---------------------------------------------------------------------------


_PROBA_EPS = 1e-15


@dataclass(frozen=True)
class Stump:
    """Axis-aligned depth-1 split; votes are weighted class histograms per side."""

    feature_index: int
    threshold: float
    left_votes: tuple[float, ...]   # for samples with x[feature] <= threshold
    right_votes: tuple[float, ...]

    def log_proba(self, x_feature: np.ndarray) -> np.ndarray:
        """Per-sample log of the matched leaf's class distribution, clipped away from 0."""
        def leaf_logp(votes: Sequence[float]) -> np.ndarray:
            v = np.asarray(votes, dtype=float)
            return np.log(np.clip(v / max(v.sum(), _PROBA_EPS), _PROBA_EPS, None))

        mask = (x_feature <= self.threshold)[:, None]
        return np.where(mask, leaf_logp(self.left_votes), leaf_logp(self.right_votes))

    def predict_class(self, x_feature: np.ndarray) -> np.ndarray:
        left_cls = int(np.argmax(self.left_votes))
        right_cls = int(np.argmax(self.right_votes))
        return np.where(x_feature <= self.threshold, left_cls, right_cls)


@dataclass(frozen=True)
class AdaBoostModel:
    stumps: tuple[Stump, ...]
    stump_weights: tuple[float, ...]
    n_features: int
    n_classes: int = N_CLASSES

    def __post_init__(self) -> None:
        if not self.stumps:
            raise DataError("boosted model must contain at least one stump")
        if any(not math.isfinite(w) for w in self.stump_weights):
            raise DataError("stump weights must be finite")

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        """Accumulated real-valued class votes: each stump contributes the
        symmetrized log of its leaf distribution, (K-1) * (log p - mean log p)."""
        X = _as_matrix(X, self.n_features)
        scores = np.zeros((X.shape[0], self.n_classes))
        for stump, weight in zip(self.stumps, self.stump_weights):
            logp = stump.log_proba(X[:, stump.feature_index])
            scores += weight * (self.n_classes - 1) * (logp - logp.mean(axis=1, keepdims=True))
        return scores

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.decision_scores(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba_batch(X), axis=1)


def _as_matrix(X: np.ndarray, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != dim:
        raise DataError(f"expected feature rows of dimension {dim}, got shape {X.shape}")
    return X


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cut_threshold(low: float, high: float) -> float:
    # midpoint unless rounding collapses it onto the right value, which would
    # silently move samples across the cut
    mid = (low + high) / 2.0
    return mid if mid < high else low


def _best_stump(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, orders: list[np.ndarray], onehots: list[np.ndarray]
) -> tuple[Stump, float]:
    """Exhaustive weighted stump search; ties resolve to the lowest feature/cut."""
    n, d = X.shape
    total_by_class = np.array([w[y == k].sum() for k in range(N_CLASSES)])
    total = w.sum()
    best_err = math.inf
    best: Optional[tuple[int, float, np.ndarray]] = None
    for j in range(d):
        order = orders[j]
        sv = X[order, j]
        valid = sv[:-1] < sv[1:]
        if not valid.any():
            continue
        cum = np.cumsum(w[order, None] * onehots[j], axis=0)  # (n, K) class weight left of cut
        left = cum[:-1]
        right = total_by_class - left
        err = total - left.max(axis=1) - right.max(axis=1)
        err[~valid] = math.inf
        i = int(np.argmin(err))
        if err[i] < best_err - 1e-15:
            best_err = float(err[i])
            threshold = _cut_threshold(sv[i], sv[i + 1])
            best = (j, threshold, left[i].copy())
    if best is None:
        raise DataError("all features are constant; no stump can split the data")
    j, threshold, left_votes = best
    right_votes = total_by_class - left_votes
    stump = Stump(
        feature_index=j,
        threshold=threshold,
        left_votes=tuple(float(v) for v in left_votes),
        right_votes=tuple(float(v) for v in right_votes),
    )
    return stump, best_err / total


def train_adaboost(X: np.ndarray, y: np.ndarray, rounds: int = 100, seed: int = 0) -> AdaBoostModel:
    """Boost depth-1 stumps with the real-valued multiclass SAMME update.

    Each round fits the minimum-weighted-error stump, then reweights samples
    by exp(-(K-1)/K * <coding(y), log p(x)>) where p is the stump's leaf
    distribution and coding(y) is 1 at the true class, -1/(K-1) elsewhere.
    The real-valued (leaf-distribution) vote is what lets a sequence of
    two-leaf stumps separate all four classes; discrete one-hot voting
    provably ties on range-separable data. Deterministic for fixed inputs
    (the seed is accepted for API uniformity; stump search breaks ties by
    feature and cut order). Raises on fewer than two classes or rounds < 1.
    """
    del seed
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"feature/label shapes do not align: {X.shape} vs {y.shape}")
    if rounds < 1:
        raise DataError(f"rounds must be >= 1, got {rounds}")
    classes = np.unique(y)
    if classes.size < 2:
        raise DataError("training data contains a single class; boosting is undefined")
    if np.any((classes < 0) | (classes >= N_CLASSES)):
        raise DataError(f"labels must lie in 0..{N_CLASSES - 1}")

    n, d = X.shape
    orders = [np.argsort(X[:, j], kind="stable") for j in range(d)]
    eye = np.eye(N_CLASSES)
    onehots = [eye[y[order]] for order in orders]
    coding = np.full((n, N_CLASSES), -1.0 / (N_CLASSES - 1))
    coding[np.arange(n), y] = 1.0

    w = np.full(n, 1.0 / n)
    stumps: list[Stump] = []
    for _ in range(rounds):
        stump, err = _best_stump(X, y, w, orders, onehots)
        stumps.append(stump)
        if err <= 0.0:
            break  # stump already perfect on the weighted sample
        logp = stump.log_proba(X[:, stump.feature_index])
        w = w * np.exp(-(N_CLASSES - 1.0) / N_CLASSES * (coding * logp).sum(axis=1))
        total = w.sum()
        if not math.isfinite(total) or total <= 0.0:
            break  # weights degenerated; keep the stumps accumulated so far
        w = w / total
    return AdaBoostModel(
        stumps=tuple(stumps), stump_weights=tuple(1.0 for _ in stumps), n_features=d
    )


# ---------------------------------------------------------------------------
# Random forest (bootstrap + Gini, sqrt(d) features per split)
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    """Internal split or leaf; leaves carry raw class counts of their samples."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    counts: Optional[tuple[int, ...]] = None

    @property
    def is_leaf(self) -> bool:
        return self.counts is not None


def _gini_best_split(
    X: np.ndarray, y: np.ndarray, idx: np.ndarray, features: np.ndarray, min_leaf: int
) -> Optional[tuple[int, float, float]]:
    n = idx.size
    best: Optional[tuple[int, float, float]] = None
    eye = np.eye(N_CLASSES)
    for j in features:
        vals = X[idx, j]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        cum = np.cumsum(eye[y[idx][order]], axis=0)
        nl = np.arange(1, n)
        nr = n - nl
        left = cum[:-1]
        right = cum[-1] - left
        valid = (sv[:-1] < sv[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        weighted[~valid] = math.inf
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[2] - 1e-15:
            best = (int(j), _cut_threshold(sv[i], sv[i + 1]), float(weighted[i]))
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    rng: np.random.Generator,
    min_leaf: int,
    n_split_features: int,
) -> TreeNode:
    counts = np.bincount(y[idx], minlength=N_CLASSES)
    node_gini = 1.0 - ((counts / idx.size) ** 2).sum()
    if node_gini == 0.0 or idx.size < 2 * min_leaf:
        return TreeNode(counts=tuple(int(c) for c in counts))
    features = rng.permutation(X.shape[1])[:n_split_features]
    best = _gini_best_split(X, y, idx, features, min_leaf)
    if best is None or best[2] >= node_gini - 1e-12:
        return TreeNode(counts=tuple(int(c) for c in counts))
    feature, threshold, _ = best
    mask = X[idx, feature] <= threshold
    if not mask.any() or mask.all():  # degenerate cut; cannot happen with _cut_threshold, kept defensive
        return TreeNode(counts=tuple(int(c) for c in counts))
    left = _grow_tree(X, y, idx[mask], rng, min_leaf, n_split_features)
    right = _grow_tree(X, y, idx[~mask], rng, min_leaf, n_split_features)
    return TreeNode(feature=feature, threshold=threshold, left=left, right=right)


def _tree_proba(root: TreeNode, x: np.ndarray) -> np.ndarray:
    node = root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    counts = np.asarray(node.counts, dtype=float)
    return counts / counts.sum()


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple[TreeNode, ...]
    seed: int
    n_features: int
    n_classes: int = N_CLASSES

    def __post_init__(self) -> None:
        if not self.trees:
            raise DataError("forest must contain at least one tree")

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        out = np.zeros((X.shape[0], self.n_classes))
        for i, x in enumerate(X):
            acc = np.zeros(self.n_classes)
            for tree in self.trees:
                acc += _tree_proba(tree, x)
            out[i] = acc / len(self.trees)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba_batch(X), axis=1)


def train_random_forest(
    X: np.ndarray, y: np.ndarray, n_trees: int = 200, seed: int = 0, min_leaf: int = 2
) -> RandomForestModel:
    """Bootstrap-sampled Gini trees with sqrt(d) candidate features per split.

    Tree t draws its bootstrap and feature subsets from an RNG stream seeded
    by (seed, t), so the forest is identical however tree training is
    scheduled.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training data must be a non-empty 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise DataError(f"feature/label shapes do not align: {X.shape} vs {y.shape}")
    if n_trees < 1:
        raise DataError(f"n_trees must be >= 1, got {n_trees}")
    n, d = X.shape
    n_split_features = max(1, int(math.sqrt(d)))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng((seed, t))
        idx = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X, y, idx, rng, min_leaf, n_split_features))
    return RandomForestModel(trees=tuple(trees), seed=seed, n_features=d)


# ---------------------------------------------------------------------------
# Multinomial logistic regression (meta-classifier)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray     # (n_classes,)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise DataError("logistic parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        return _softmax(X @ self.weights.T + self.bias)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba_batch(X), axis=1)


def train_logistic(
    X: np.ndarray, y: np.ndarray, epochs: int = 500, lr: float = 0.1, l2: float = 1e-3
) -> LogisticModel:
    """Full-batch gradient descent on L2-regularized softmax cross-entropy."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DataError("training data must be non-empty and aligned")
    n, d = X.shape
    w = np.zeros((N_CLASSES, d))
    b = np.zeros(N_CLASSES)
    targets = np.eye(N_CLASSES)[y]
    for _ in range(epochs):
        p = _softmax(X @ w.T + b)
        delta = (p - targets) / n
        w -= lr * (delta.T @ X + l2 * w)
        b -= lr * delta.sum(axis=0)
    return LogisticModel(weights=w, bias=b)


# ---------------------------------------------------------------------------
# Stacked late fusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FusedModel:
    """Trained visual + physiological classifiers and the stacking meta-classifier."""

    visual: AdaBoostModel
    physio: RandomForestModel
    meta: LogisticModel
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.meta.n_features != META_DIM:
            raise DataError(f"meta-classifier input must be {META_DIM}-dimensional")


def stratified_fold_assignments(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per sample: class-balanced, fold sizes differing by at most 1."""
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    folds = np.empty(y.shape[0], dtype=int)
    dealt = 0
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        rng.shuffle(members)
        for j, m in enumerate(members):
            folds[m] = (dealt + j) % k
        dealt += members.size
    return folds


def train_stacked(
    visual_X: np.ndarray,
    physio_X: np.ndarray,
    y: np.ndarray,
    params: EnsembleParams | None = None,
    seed: int = 0,
    config_snapshot: Optional[dict] = None,
) -> FusedModel:
    """Stacked generalization over the two modality branches.

    Internal stratified folds produce out-of-fold base probabilities; the
    logistic meta-classifier trains on their 8-dim concatenation; the base
    models are then refit on all rows. Deterministic for a fixed seed.
    """
    params = params or EnsembleParams()
    visual_X = _as_matrix(np.atleast_2d(visual_X), VISUAL_DIM)
    physio_X = _as_matrix(np.atleast_2d(physio_X), PHYSIO_DIM)
    y = np.asarray(y, dtype=int)
    n = y.shape[0]
    if visual_X.shape[0] != n or physio_X.shape[0] != n:
        raise DataError("modality feature matrices and labels must align row-for-row")
    k = params.stack_folds
    if n < k:
        raise DataError(f"need at least {k} rows for {k}-fold stacking, got {n}")

    folds = stratified_fold_assignments(y, k, seed)
    oof = np.zeros((n, META_DIM))
    for f in range(k):
        test = folds == f
        train = ~test
        if not test.any():
            continue
        fold_seed = seed * 1000 + f + 1
        ab = train_adaboost(visual_X[train], y[train], params.adaboost_rounds, fold_seed)
        rf = train_random_forest(physio_X[train], y[train], params.rf_trees, fold_seed, params.rf_min_leaf)
        oof[test, :N_CLASSES] = ab.predict_proba_batch(visual_X[test])
        oof[test, N_CLASSES:] = rf.predict_proba_batch(physio_X[test])
    meta = train_logistic(oof, y, params.meta_epochs, params.meta_lr, params.meta_l2)

    visual_model = train_adaboost(visual_X, y, params.adaboost_rounds, seed)
    physio_model = train_random_forest(physio_X, y, params.rf_trees, seed, params.rf_min_leaf)
    snapshot = dict(config_snapshot) if config_snapshot else {"ensemble": asdict(params)}
    return FusedModel(
        visual=visual_model,
        physio=physio_model,
        meta=meta,
        config=snapshot,
        metadata={"seed": seed, "fold_scheme": f"stratified-{k}-fold"},
    )


def train_early_fusion(
    X: np.ndarray, y: np.ndarray, params: EnsembleParams | None = None, seed: int = 0
) -> RandomForestModel:
    """Ablation baseline: one forest over the concatenated 19-dim features."""
    params = params or EnsembleParams()
    X = _as_matrix(np.atleast_2d(X), VISUAL_DIM + PHYSIO_DIM)
    return train_random_forest(X, y, params.rf_trees, seed, params.rf_min_leaf)


def predict_proba(model, x: np.ndarray) -> ProbabilityVector:
    """Single-row probability prediction as a validated ProbabilityVector."""
    row = model.predict_proba_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0]
    total = row.sum()
    return ProbabilityVector(tuple(float(v) for v in row / total))


def predict_engagement(
    m: FusedModel, visual_x: np.ndarray, physio_x: np.ndarray
) -> tuple[EngagementLabel, ProbabilityVector]:
    """Fused prediction; argmax ties resolve to the lower class index."""
    p_ab = m.visual.predict_proba_batch(np.atleast_2d(visual_x))
    p_rf = m.physio.predict_proba_batch(np.atleast_2d(physio_x))
    fused = m.meta.predict_proba_batch(np.hstack([p_ab, p_rf]))[0]
    pv = ProbabilityVector(tuple(float(v) for v in fused / fused.sum()))
    return EngagementLabel(pv.argmax()), pv


def predict_engagement_batch(m: FusedModel, visual_X: np.ndarray, physio_X: np.ndarray) -> np.ndarray:
    p_ab = m.visual.predict_proba_batch(visual_X)
    p_rf = m.physio.predict_proba_batch(physio_X)
    return m.meta.predict(np.hstack([p_ab, p_rf]))


# ---------------------------------------------------------------------------
# Artifact serialization (plain JSON, format-versioned)
# ---------------------------------------------------------------------------


def _stump_to_dict(s: Stump) -> dict:
    return {
        "feature_index": s.feature_index,
        "threshold": s.threshold,
        "left_votes": list(s.left_votes),
        "right_votes": list(s.right_votes),
    }


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"counts": list(node.counts)}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "counts" in d:
        return TreeNode(counts=tuple(int(c) for c in d["counts"]))
    return TreeNode(
        feature=int(d["feature"]),
        threshold=float(d["threshold"]),
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
    )


def fused_model_to_json(m: FusedModel) -> str:
    doc = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "config": m.config,
        "metadata": m.metadata,
        "visual": {
            "stumps": [_stump_to_dict(s) for s in m.visual.stumps],
            "stump_weights": list(m.visual.stump_weights),
            "n_features": m.visual.n_features,
        },
        "physio": {
            "trees": [_node_to_dict(t) for t in m.physio.trees],
            "seed": m.physio.seed,
            "n_features": m.physio.n_features,
        },
        "meta": {
            "weights": m.meta.weights.tolist(),
            "bias": m.meta.bias.tolist(),
        },
    }
    return json.dumps(doc)


def fused_model_from_json(text: str) -> FusedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed model artifact: {e}") from e
    version = doc.get("format_version")
    if version != ARTIFACT_FORMAT_VERSION:
        raise DataError(f"unsupported model artifact version {version!r}")
    try:
        visual = AdaBoostModel(
            stumps=tuple(
                Stump(
                    feature_index=int(s["feature_index"]),
                    threshold=float(s["threshold"]),
                    left_votes=tuple(float(v) for v in s["left_votes"]),
                    right_votes=tuple(float(v) for v in s["right_votes"]),
                )
                for s in doc["visual"]["stumps"]
            ),
            stump_weights=tuple(float(w) for w in doc["visual"]["stump_weights"]),
            n_features=int(doc["visual"]["n_features"]),
        )
        physio = RandomForestModel(
            trees=tuple(_node_from_dict(t) for t in doc["physio"]["trees"]),
            seed=int(doc["physio"]["seed"]),
            n_features=int(doc["physio"]["n_features"]),
        )
        meta = LogisticModel(
            weights=np.array(doc["meta"]["weights"], dtype=float),
            bias=np.array(doc["meta"]["bias"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed model artifact: {e}") from e
    return FusedModel(
        visual=visual,
        physio=physio,
        meta=meta,
        config=doc.get("config", {}),
        metadata=doc.get("metadata", {}),
    )
