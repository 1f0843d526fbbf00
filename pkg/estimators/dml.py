"""
Double/debiased machine learning for the partially linear model

    Y = S' theta + g(X) + e,    S = m(X) + v

with K-fold cross-fitting. l(X) = E[Y | X] and each component of
m(X) = E[S | X] are learned off-fold; theta solves the orthogonal score
sum S~ (Y~ - S~' theta) = 0 on the cross-fit residuals.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import linalg

from primitives.exceptions import DimensionMismatch, InputError, LabError, NonFiniteInput, RankDeficient
from primitives.forest import ForestParams, forest_fit, forest_predict
from primitives.linear import EstimateResult, independent_columns, linear_contrast
from primitives.parallel import ordered_map, substream

from .design import (CONTRAST, COVARIATES, FIXED_EFFECTS, GROUPS, TREATMENTS, check_two_periods, dummies,
                     present_margins, require_columns, with_treatments)
from .exceptions import FoldTooSmall, NoSwitchers, NuisanceFitFailure

logger = logging.getLogger(__name__)

LEARNERS = ('forest', 'linear', 'mean')


@dataclass(frozen=True)
class DmlSpec:
    """
    Cross-fitting setup. ``cluster`` aggregates the score by cluster in the
    variance; None treats every row as independent.
    """
    k_folds: int = 10
    learner: str = 'forest'
    forest: ForestParams = field(default_factory=lambda: ForestParams(n_trees=100, min_leaf=5))
    seed: int = 0
    cross_fit: bool = True
    outcome: str = 'ln_price'
    covariates: tuple = COVARIATES
    fixed_effects: tuple = FIXED_EFFECTS
    cluster: Optional[str] = None

    def __post_init__(self):
        if self.k_folds < 2:
            raise InputError('k_folds must be at least 2, got {0}'.format(self.k_folds))
        if self.learner not in LEARNERS:
            raise InputError('unknown learner {0!r}; choose one of {1}'.format(self.learner, ', '.join(LEARNERS)))
        object.__setattr__(self, 'covariates', tuple(self.covariates))
        object.__setattr__(self, 'fixed_effects', tuple(self.fixed_effects))


class MeanLearner:
    def fit(self, X, y):
        self.mean_ = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(X.shape[0], self.mean_)


class LinearLearner:
    """
    Least squares on the features plus a constant.
    """

    def fit(self, X, y):
        design = np.column_stack([np.ones(X.shape[0]), X])
        self.coef_ = linalg.lstsq(design, y)[0]
        return self

    def predict(self, X):
        return np.column_stack([np.ones(X.shape[0]), X]) @ self.coef_


class ForestLearner:
    def __init__(self, params, seed, threads=None):
        self.params = params
        self.seed = seed
        self.threads = threads

    def fit(self, X, y):
        self.model_ = forest_fit(X, y, self.params, seed=self.seed, threads=self.threads)
        return self

    def predict(self, X):
        return forest_predict(self.model_, X, threads=self.threads)


def make_learner(spec, seed, threads=None):
    if spec.learner == 'mean':
        return MeanLearner()
    if spec.learner == 'linear':
        return LinearLearner()
    return ForestLearner(spec.forest, seed, threads)


def fold_assignment(n, k_folds, seed=0):
    """
    Seeded permutation cut into K near-equal folds.
    :return: int array of fold labels 0..K-1
    """
    if n < 2 * k_folds:
        raise FoldTooSmall('{0} rows cannot be split into {1} folds of at least 2 rows'.format(n, k_folds))
    order = substream(seed, 0).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[order] = np.arange(n) % k_folds
    return folds


def _nuisance_seed(seed, held_out, column):
    # keyed by fold membership, not fold label
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(held_out.min()), column)).generate_state(1)[0])


def _fit_fold(targets, X, train, test, spec, fold, threads):
    held_out = np.flatnonzero(test)
    predictions = np.empty((len(held_out), targets.shape[1]))
    try:
        for column in range(targets.shape[1]):
            learner = make_learner(spec, _nuisance_seed(spec.seed, held_out, column), threads)
            learner.fit(X[train], targets[train, column])
            predictions[:, column] = learner.predict(X[test])
    except (LabError, linalg.LinAlgError, ValueError) as exc:
        raise NuisanceFitFailure(str(exc), fold) from exc
    if not np.all(np.isfinite(predictions)):
        raise NuisanceFitFailure('non-finite nuisance predictions', fold)
    return predictions


def _check_folds(folds, n, k_folds):
    folds = np.asarray(folds, dtype=int)
    if folds.shape != (n,):
        raise DimensionMismatch('fold labels have length {0}, data has {1} rows'.format(len(folds), n))
    if folds.min() < 0 or folds.max() >= k_folds or (np.bincount(folds, minlength=k_folds) < 2).any():
        raise FoldTooSmall('every one of the {0} folds needs at least 2 rows'.format(k_folds))
    return folds


def dml_plr(y, D, X, spec=None, names=None, folds=None, clusters=None, threads=None):
    """
    Cross-fitted partially linear estimator on arrays.
    :param y: outcome, length n
    :param D: n x p treatments
    :param X: n x q nuisance features
    :param spec: DmlSpec
    :param names: treatment names
    :param folds: explicit fold labels 0..K-1; drawn from ``spec.seed`` otherwise
    :param clusters: cluster ids to aggregate the score in the variance
    :param threads: worker threads; folds are fitted in parallel
    :return: EstimateResult with the sandwich covariance J^-1 Sigma J^-1 / n
    """
    spec = spec or DmlSpec()
    y = np.asarray(y, dtype=float).ravel()
    D = np.asarray(D, dtype=float)
    D = D.reshape(-1, 1) if D.ndim == 1 else D
    X = np.asarray(X, dtype=float)
    X = X.reshape(-1, 1) if X.ndim == 1 else X
    n, p = D.shape
    names = tuple(names) if names is not None else tuple('d{0}'.format(j) for j in range(p))
    if X.shape[0] != n or len(y) != n or len(names) != p:
        raise DimensionMismatch('outcome, treatments, features and names disagree in size')
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(D)) and np.all(np.isfinite(X))):
        raise NonFiniteInput('DML inputs must be finite')
    folds = fold_assignment(n, spec.k_folds, spec.seed) if folds is None else _check_folds(folds, n, spec.k_folds)

    targets = np.column_stack([y, D])
    fitted = np.empty_like(targets)
    if spec.cross_fit:
        def run(fold):
            test = folds == fold
            return _fit_fold(targets, X, ~test, test, spec, fold, threads)

        for fold, predictions in enumerate(ordered_map(run, range(spec.k_folds), threads)):
            fitted[folds == fold] = predictions
    else:
        everything = np.ones(n, dtype=bool)
        fitted[:] = _fit_fold(targets, X, everything, everything, spec, 0, threads)

    y_resid = y - fitted[:, 0]
    s_resid = D - fitted[:, 1:]
    keep = independent_columns(s_resid)
    if not keep.all():
        dropped = [names[j] for j in np.flatnonzero(~keep)]
        raise RankDeficient('residualized treatments are collinear: {0}'.format(', '.join(dropped)), dropped)

    gram = s_resid.T @ s_resid
    theta = linalg.solve(gram, s_resid.T @ y_resid, assume_a='pos')
    score_resid = y_resid - s_resid @ theta
    psi = s_resid * score_resid[:, None]
    if clusters is not None:
        codes = np.unique(np.asarray(clusters).astype(str), return_inverse=True)[1]
        psi_sum = np.zeros((codes.max() + 1, p))
        np.add.at(psi_sum, codes, psi)
        sigma = psi_sum.T @ psi_sum / n
        n_clusters = int(codes.max()) + 1
    else:
        sigma = psi.T @ psi / n
        n_clusters = None
    j_inv = linalg.inv(gram / n)
    cov = j_inv @ sigma @ j_inv / n

    sst = float(y_resid @ y_resid)
    return EstimateResult(
        names=names, coef=theta, cov=cov, n=n, dof=n - p,
        r_squared=1 - float(score_resid @ score_resid) / sst if sst > 0 else np.nan,
        n_clusters=n_clusters, cov_type='dml-cluster' if clusters is not None else 'dml',
        residuals=score_resid, fitted=s_resid @ theta,
        extra={
            'k_folds': spec.k_folds, 'learner': spec.learner, 'cross_fit': spec.cross_fit, 'seed': spec.seed,
            'folds': folds, 'fold_sizes': np.bincount(folds, minlength=spec.k_folds).tolist(),
            'y_resid': y_resid, 's_resid': s_resid, 'features': X,
        },
    )


def panel_arrays(panel, spec):
    """
    Outcome, treatment block and nuisance features of the two-period panel.
    Treatments are the group intensities and their post interactions; the
    features are the post dummy, covariates and fixed-effect dummies.
    :return: (y, treatments DataFrame, features DataFrame, frame with treatments, absent margins)
    """
    require_columns(panel, (spec.outcome, 'hcp_id', 'period', 's2', 's2c') + spec.covariates + spec.fixed_effects
                    + ((spec.cluster,) if spec.cluster else ()))
    check_two_periods(panel)
    frame = with_treatments(panel.reset_index(drop=True))
    present = present_margins(frame)
    if not present:
        raise NoSwitchers('no HCP switched to P2 or P2c; both treatment effects are undefined')
    absent = [name for name in TREATMENTS if name not in present]
    groups = [group for name, group in zip(TREATMENTS, GROUPS) if name in present]
    treatments = frame[groups + present].astype(float)
    features = pd.concat([frame[['T'] + list(spec.covariates)].astype(float),
                          dummies(frame, list(spec.fixed_effects))], axis=1)
    return frame[spec.outcome].to_numpy(dtype=float), treatments, features, frame, absent


def dml_plr_fit(panel, spec=None, folds=None, threads=None):
    """
    DML-PLR treatment effects of switching on the HCP panel.
    :param panel: two-period HCP panel
    :param spec: DmlSpec
    :param folds: optional fold labels per panel row
    :param threads: worker threads
    :return: EstimateResult over the treatment block; ``extra['contrast']`` is tau_12c - tau_12
    """
    spec = spec or DmlSpec()
    y, treatments, features, frame, absent = panel_arrays(panel, spec)
    flags = []
    for name in absent:
        flag = 'no_{0}_switchers'.format('p2' if name == 'tau_12' else 'p2c')
        logger.warning('%s: %s is reported as absent', flag, name)
        flags.append(flag)
    clusters = frame[spec.cluster].to_numpy() if spec.cluster else None
    result = dml_plr(y, treatments.to_numpy(), features.to_numpy(), spec, names=treatments.columns, folds=folds,
                     clusters=clusters, threads=threads)
    result.flags.extend(flags)
    result.extra['absent'] = absent
    result.extra['contrast'] = linear_contrast(result, CONTRAST) if not absent else None
    logger.info('DML %s with %s learner, K=%d: %s', spec.outcome, spec.learner, spec.k_folds,
                ', '.join('{0}={1:.4f}'.format(name, result.get(name)) for name in TREATMENTS if name in result))
    return result


@dataclass
class OrthogonalityProbe:
    epsilon: float
    delta_full: float
    delta_half: float

    @property
    def ratio(self):
        return self.delta_full / self.delta_half if self.delta_half > 0 else float('nan')

    def records(self):
        return {'epsilon': self.epsilon, 'delta_full': self.delta_full, 'delta_half': self.delta_half,
                'ratio': self.ratio}


def _direction(features, seed):
    spread = features.std(axis=0)
    usable = np.flatnonzero(spread > 0)
    if len(usable):
        return (features[:, usable[0]] - features[:, usable[0]].mean()) / spread[usable[0]]
    h = substream(seed, 1).standard_normal(features.shape[0])
    return (h - h.mean()) / h.std()


def _theta(y_resid, s_resid):
    return linalg.solve(s_resid.T @ s_resid, s_resid.T @ y_resid, assume_a='pos')


def orthogonality_probe(result, epsilon=0.01):
    """
    Shift both nuisance predictions by epsilon h, where h is the first
    non-constant feature standardized to unit variance, and measure how far
    theta moves at epsilon and epsilon / 2. The first-order term is
    (1 - theta) S'h + h'u, which is negligible when both residuals are orthogonal to
    the features. The movement is then second order and the ratio is close to 4;
    a score with first-order sensitivity gives a ratio near 2.
    :param result: EstimateResult from dml_plr or dml_plr_fit
    :param epsilon: perturbation size
    :return: OrthogonalityProbe
    """
    y_resid = result.extra['y_resid']
    s_resid = result.extra['s_resid']
    h = _direction(result.extra['features'], result.extra.get('seed', 0))
    base = _theta(y_resid, s_resid)

    def moved(step):
        shifted = _theta(y_resid - step * h, s_resid - step * h[:, None])
        return float(np.linalg.norm(shifted - base))

    probe = OrthogonalityProbe(epsilon, moved(epsilon), moved(epsilon / 2))
    logger.info('orthogonality probe: |dtheta| %.3g at %.3g, %.3g at half; ratio %.3f', probe.delta_full, epsilon,
                probe.delta_half, probe.ratio)
    return probe
