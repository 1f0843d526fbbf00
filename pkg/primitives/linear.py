"""
Least squares with classical, heteroskedasticity-robust and cluster-robust
covariance, plus linear contrasts of the fitted coefficients.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .exceptions import (DimensionMismatch, InputError, NonFiniteInput,
                         RankDeficient, SingleCluster)

logger = logging.getLogger(__name__)

ALIAS_TOLERANCE = 1e-10
Z_95 = stats.norm.ppf(0.975)


@dataclass
class DesignMatrix:
    """
    Numeric regressors with column names and an optional cluster id per row.
    """
    values: np.ndarray
    columns: tuple
    clusters: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        self.columns = tuple(self.columns)
        if self.values.shape[1] != len(self.columns):
            raise DimensionMismatch('design has {0} columns but {1} names'.format(
                self.values.shape[1], len(self.columns)))
        if not np.all(np.isfinite(self.values)):
            bad = [name for j, name in enumerate(self.columns) if not np.all(np.isfinite(self.values[:, j]))]
            raise NonFiniteInput('non-finite entries in design columns: {0}'.format(', '.join(bad)))
        if self.clusters is not None:
            self.clusters = np.asarray(self.clusters)
            if len(self.clusters) != self.values.shape[0]:
                raise DimensionMismatch('cluster ids do not match the number of rows')

    @classmethod
    def from_frame(cls, frame, columns, cluster=None):
        """
        Build a design from DataFrame columns.
        :param frame: pandas DataFrame
        :param columns: column names, in order
        :param cluster: name of the cluster column, optional
        :return: DesignMatrix
        """
        missing = [name for name in columns if name not in frame.columns]
        if missing:
            raise InputError('unknown columns: {0}'.format(', '.join(missing)))
        clusters = frame[cluster].to_numpy() if cluster is not None else None
        return cls(frame[list(columns)].to_numpy(dtype=float), tuple(columns), clusters)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    def with_intercept(self, name='const'):
        return DesignMatrix(np.column_stack([np.ones(self.n_rows), self.values]),
                            (name,) + self.columns, self.clusters)

    def drop(self, names):
        keep = [j for j, name in enumerate(self.columns) if name not in set(names)]
        return DesignMatrix(self.values[:, keep], tuple(self.columns[j] for j in keep), self.clusters)


@dataclass
class ContrastResult:
    estimate: float
    se: float
    weights: np.ndarray

    @property
    def z(self):
        with np.errstate(divide='ignore', invalid='ignore'):
            return self.estimate / self.se

    @property
    def p_value(self):
        return float(2 * stats.norm.sf(abs(self.z)))

    @property
    def conf_int(self):
        return self.estimate - Z_95 * self.se, self.estimate + Z_95 * self.se


@dataclass
class EstimateResult:
    """
    Output of every estimator: coefficients, covariance and fit statistics.
    p-values and intervals use the normal approximation.
    """
    names: tuple
    coef: np.ndarray
    cov: np.ndarray
    n: int
    dof: int
    r_squared: float = float('nan')
    adj_r_squared: float = float('nan')
    within_r_squared: Optional[float] = None
    n_clusters: Optional[int] = None
    cov_type: str = 'classical'
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    residuals: Optional[np.ndarray] = field(default=None, repr=False)
    fitted: Optional[np.ndarray] = field(default=None, repr=False)
    leverage: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.coef = np.asarray(self.coef, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        self.cov = (self.cov + self.cov.T) / 2

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def z(self):
        with np.errstate(divide='ignore', invalid='ignore'):
            return self.coef / self.se

    @property
    def p_values(self):
        return 2 * stats.norm.sf(np.abs(self.z))

    def conf_int(self, level=0.95):
        z = stats.norm.ppf(0.5 + level / 2)
        return np.column_stack([self.coef - z * self.se, self.coef + z * self.se])

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError('no coefficient named {0!r}'.format(name)) from None

    def __contains__(self, name):
        return name in self.names

    def get(self, name):
        return float(self.coef[self.index(name)])

    def standard_error(self, name):
        return float(self.se[self.index(name)])

    def p_value(self, name):
        return float(self.p_values[self.index(name)])

    def contrast(self, weights):
        return linear_contrast(self, weights)

    def records(self):
        """
        One dict per coefficient, for reports
        """
        bounds = self.conf_int()
        return [
            {'term': name, 'coef': float(self.coef[j]), 'se': float(self.se[j]), 'z': float(self.z[j]),
             'p_value': float(self.p_values[j]), 'ci_low': float(bounds[j, 0]), 'ci_high': float(bounds[j, 1])}
            for j, name in enumerate(self.names)
        ]


def independent_columns(values, tol=ALIAS_TOLERANCE):
    """
    Mask of columns that are not linear combinations of earlier columns.
    Earlier columns win, so dropping is deterministic in column order.
    :param values: n x k array
    :param tol: relative threshold on the QR diagonal
    :return: boolean array of length k
    """
    values = np.asarray(values, dtype=float)
    n, k = values.shape
    keep = np.zeros(k, dtype=bool)
    if n == 0 or k == 0:
        return keep
    norms = np.linalg.norm(values, axis=0)
    r = linalg.qr(values, mode='economic')[1]
    diagonal = np.abs(np.diag(r))
    m = len(diagonal)
    keep[:m] = diagonal > tol * np.maximum(norms[:m], np.finfo(float).tiny)
    keep &= norms > 0
    return keep


def _cluster_codes(clusters):
    return np.unique(np.asarray(clusters).astype(str), return_inverse=True)[1]


def ols_fit(design, y, intercept=False, cluster_robust=True):
    """
    Ordinary least squares through a pivoted QR decomposition.
    :param design: DesignMatrix
    :param y: outcome vector
    :param intercept: prepend a constant column named 'const'
    :param cluster_robust: cluster-robust covariance on design.clusters;
        every row is its own cluster when no ids are given (HC1)
    :return: EstimateResult
    """
    if intercept:
        design = design.with_intercept()
    X = design.values
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if len(y) != n:
        raise DimensionMismatch('outcome has {0} rows, design has {1}'.format(len(y), n))
    if n == 0:
        raise InputError('cannot fit a regression on zero rows')
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput('outcome has non-finite entries')

    keep = independent_columns(X)
    if not keep.all():
        dropped = [design.columns[j] for j in np.flatnonzero(~keep)]
        raise RankDeficient('design is rank deficient; aliased columns: {0}'.format(', '.join(dropped)), dropped)

    q, r, perm = linalg.qr(X, mode='economic', pivoting=True)
    coef = np.empty(k)
    coef[perm] = linalg.solve_triangular(r, q.T @ y)
    r_inv = linalg.solve_triangular(r, np.eye(k))
    bread = np.empty((k, k))
    bread[np.ix_(perm, perm)] = r_inv @ r_inv.T

    fitted = X @ coef
    resid = y - fitted
    dof = n - k
    flags = []
    n_clusters = None

    if cluster_robust:
        clusters = design.clusters if design.clusters is not None else np.arange(n)
        codes = _cluster_codes(clusters)
        n_clusters = int(codes.max()) + 1
        if n_clusters < 2:
            raise SingleCluster('cluster-robust covariance needs at least two clusters')
        summed = np.zeros((n_clusters, k))
        np.add.at(summed, codes, X * resid[:, None])
        meat = summed.T @ summed
        factor = n_clusters / (n_clusters - 1) * (n - 1) / dof if dof > 0 else np.nan
        cov = factor * bread @ meat @ bread
        cov_type = 'cluster' if design.clusters is not None else 'hc1'
    else:
        sigma2 = resid @ resid / dof if dof > 0 else np.nan
        cov = sigma2 * bread
        cov_type = 'classical'

    if dof <= 0:
        cov = np.full((k, k), np.nan)
        flags.append('no_residual_dof')
        logger.warning('regression with %d rows and %d columns has no residual degrees of freedom', n, k)

    ssr = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1 - ssr / sst if sst > 0 else np.nan
    adj = 1 - (1 - r_squared) * (n - 1) / dof if dof > 0 else np.nan

    return EstimateResult(
        names=design.columns, coef=coef, cov=cov, n=n, dof=dof, r_squared=r_squared, adj_r_squared=adj,
        n_clusters=n_clusters, cov_type=cov_type, flags=flags, residuals=resid, fitted=fitted,
        leverage=np.sum(q ** 2, axis=1),
    )


def linear_contrast(result, weights):
    """
    Estimate and standard error of w'beta.
    :param result: EstimateResult
    :param weights: vector of length k, or a mapping from coefficient name to weight
    :return: ContrastResult
    """
    if isinstance(weights, dict):
        vector = np.zeros(len(result.names))
        for name, weight in weights.items():
            vector[result.index(name)] = weight
    else:
        vector = np.asarray(weights, dtype=float).ravel()
        if len(vector) != len(result.names):
            raise DimensionMismatch('contrast has {0} weights for {1} coefficients'.format(
                len(vector), len(result.names)))
    variance = float(vector @ result.cov @ vector)
    return ContrastResult(float(vector @ result.coef), float(np.sqrt(max(variance, 0.0))) if np.isfinite(variance)
                          else float('nan'), vector)


def demean_by_group(values, groups):
    """
    Subtract group means from each column (the within transformation).
    :param values: n x k array or length-n vector
    :param groups: length-n group ids
    :return: demeaned array of the same shape
    """
    frame = pd.DataFrame(np.asarray(values, dtype=float))
    means = frame.groupby(np.asarray(groups)).transform('mean')
    out = (frame - means).to_numpy()
    return out.ravel() if np.ndim(values) == 1 else out
