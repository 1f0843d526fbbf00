"""
Random forest regression built on numpy.

Trees are grown on bootstrap samples with variance-reduction splits over a
random feature subset at every node. Tree ``t`` draws only from the substream
(seed, t), so the forest is identical for any thread count.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, InputError, NonFiniteInput
from .parallel import ordered_map, substream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    min_leaf: int = 5
    max_depth: Optional[int] = None
    max_features: Optional[int] = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError('n_trees must be positive')
        if self.min_leaf < 1:
            raise InputError('min_leaf must be positive')
        if self.max_depth is not None and self.max_depth < 0:
            raise InputError('max_depth must be non-negative')

    def features_per_split(self, n_features):
        if self.max_features is not None:
            return max(1, min(int(self.max_features), n_features))
        return max(1, int(math.ceil(math.sqrt(n_features))))


@dataclass
class RegressionTree:
    """
    Flat array representation; ``feature == -1`` marks a leaf.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while np.any(active):
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass
class ForestModel:
    trees: list
    params: ForestParams
    seed: int
    n_features: int
    constant: Optional[float] = None
    flags: list = field(default_factory=list)

    def predict(self, X, threads=None):
        return forest_predict(self, X, threads=threads)

    def metadata(self):
        return {
            'n_trees': self.params.n_trees, 'min_leaf': self.params.min_leaf,
            'max_depth': self.params.max_depth,
            'max_features': self.params.features_per_split(self.n_features),
            'seed': self.seed, 'flags': list(self.flags),
        }


def _best_split(X, y, features, min_leaf):
    n = len(y)
    total_sum = y.sum()
    total_sq = float(y @ y)
    parent_sse = total_sq - total_sum ** 2 / n
    best_sse, best = parent_sse - 1e-12 * max(abs(parent_sse), 1.0), None
    sizes = np.arange(min_leaf, n - min_leaf + 1)
    for feature in features:
        order = np.argsort(X[:, feature], kind='mergesort')
        xs = X[order, feature]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        valid = xs[sizes - 1] < xs[sizes]
        if not np.any(valid):
            continue
        left_sum = csum[sizes - 1]
        left_sq = csq[sizes - 1]
        right_sum = total_sum - left_sum
        right_sq = total_sq - left_sq
        sse = left_sq - left_sum ** 2 / sizes + right_sq - right_sum ** 2 / (n - sizes)
        sse[~valid] = np.inf
        j = int(np.argmin(sse))
        if sse[j] < best_sse:
            low, high = xs[sizes[j] - 1], xs[sizes[j]]
            threshold = low + (high - low) / 2
            if threshold >= high:
                threshold = low
            best_sse, best = sse[j], (int(feature), float(threshold))
    return best


def grow_tree(X, y, params, rng):
    """
    Grow one unpruned tree on the rows of X given, depth-first.
    :param X: n x k features
    :param y: targets
    :param params: ForestParams
    :param rng: numpy Generator for feature subsampling
    :return: RegressionTree
    """
    n_features = X.shape[1]
    n_try = params.features_per_split(n_features)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(indices):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(y[indices].mean()))
        count.append(len(indices))
        return len(feature) - 1

    stack = [(np.arange(len(y)), 0, new_node(np.arange(len(y))))]
    while stack:
        indices, depth, node = stack.pop()
        targets = y[indices]
        if len(indices) < 2 * params.min_leaf or np.ptp(targets) == 0:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        candidates = rng.choice(n_features, size=n_try, replace=False)
        split = _best_split(X[indices], targets, candidates, params.min_leaf)
        if split is None:
            continue
        f, t = split
        goes_left = X[indices, f] <= t
        left_indices, right_indices = indices[goes_left], indices[~goes_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(left_indices)
        right[node] = new_node(right_indices)
        stack.append((right_indices, depth + 1, right[node]))
        stack.append((left_indices, depth + 1, left[node]))

    return RegressionTree(np.array(feature, dtype=int), np.array(threshold), np.array(left, dtype=int),
                          np.array(right, dtype=int), np.array(value), np.array(count, dtype=int))


def _check_inputs(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput('forest features must be finite')
    if y is None:
        return X
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != X.shape[0]:
        raise DimensionMismatch('features have {0} rows, targets {1}'.format(X.shape[0], len(y)))
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput('forest targets must be finite')
    return X, y


def forest_fit(X, y, params=None, seed=0, threads=None):
    """
    Fit a regression forest.
    :param X: n x k features
    :param y: targets
    :param params: ForestParams, defaults to 200 trees with leaves of at least 5
    :param seed: root seed; tree t uses substream (seed, t)
    :param threads: worker threads, defaults to settings
    :return: ForestModel
    """
    params = params or ForestParams()
    X, y = _check_inputs(X, y)
    n, n_features = X.shape
    if n < 2 * params.min_leaf:
        raise InputError('forest needs at least {0} rows for min_leaf={1}, got {2}'.format(
            2 * params.min_leaf, params.min_leaf, n))
    if np.ptp(y) == 0:
        logger.warning('forest target has zero variance; fitting a constant predictor')
        return ForestModel([], params, seed, n_features, constant=float(y[0]), flags=['degenerate_target'])

    def build(t):
        rng = substream(seed, t)
        rows = rng.integers(0, n, size=n)
        return grow_tree(X[rows], y[rows], params, rng)

    trees = ordered_map(build, range(params.n_trees), threads=threads)
    return ForestModel(trees, params, seed, n_features)


def forest_predict(model, X, threads=None):
    """
    Mean prediction over the trees of ``model``.
    """
    X = _check_inputs(X)
    if X.shape[1] != model.n_features:
        raise DimensionMismatch('forest was fitted on {0} features, got {1}'.format(model.n_features, X.shape[1]))
    if model.constant is not None:
        return np.full(X.shape[0], model.constant)
    predictions = ordered_map(lambda tree: tree.predict(X), model.trees, threads=threads)
    return np.mean(np.vstack(predictions), axis=0)
