"""
LOESS: tricube-weighted local polynomial regression on nearest neighbours.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import DimensionMismatch, InputError, NonFiniteInput, SpanTooSmall
from .linear import independent_columns

logger = logging.getLogger(__name__)

DEFAULT_SPAN = 0.75
MIN_POINTS = 10


@dataclass
class LoessCurve:
    """
    A fitted LOESS smoother. Evaluate it on any grid with ``predict``.
    """
    x: np.ndarray
    y: np.ndarray
    span: float
    degree: int
    sigma: float = float('nan')
    equivalent_parameters: float = float('nan')
    fitted: np.ndarray = field(default=None, repr=False)

    @property
    def neighbours(self):
        return max(self.degree + 1, int(math.ceil(self.span * len(self.x))))

    def operator_row(self, x0):
        """
        Weights l such that the fit at x0 equals l @ y.
        """
        distance = np.abs(self.x - x0)
        q = min(self.neighbours, len(self.x))
        radius = np.partition(distance, q - 1)[q - 1]
        if radius <= 0:
            raise SpanTooSmall('no spread in x among the {0} nearest neighbours of {1}'.format(q, x0))
        weights = np.clip(1 - (distance / radius) ** 3, 0, None) ** 3
        root = np.sqrt(weights)
        local = np.vander(self.x - x0, self.degree + 1, increasing=True) * root[:, None]
        if not independent_columns(local, tol=1e-8).all():
            raise SpanTooSmall('local design at {0} is rank deficient; increase the span'.format(x0))
        return np.linalg.pinv(local)[0] * root

    def predict(self, grid):
        """
        Fitted values and pointwise standard errors on ``grid``.
        :return: tuple (fit, se)
        """
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        fit = np.empty(len(grid))
        se = np.empty(len(grid))
        for i, x0 in enumerate(grid):
            row = self.operator_row(x0)
            fit[i] = row @ self.y
            se[i] = self.sigma * np.sqrt(row @ row)
        return fit, se

    def band(self, grid, level=0.95):
        """
        :return: tuple (fit, lower, upper) of the pointwise confidence band
        """
        fit, se = self.predict(grid)
        z = stats.norm.ppf(0.5 + level / 2)
        return fit, fit - z * se, fit + z * se


def loess_fit(x, y, span=DEFAULT_SPAN, degree=1):
    """
    Fit a LOESS curve.
    :param x: predictor
    :param y: response
    :param span: fraction of points in each local neighbourhood, in (0, 1]
    :param degree: local polynomial degree, 1 or 2
    :return: LoessCurve with residual scale estimated from the fit at the data points
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise DimensionMismatch('x and y differ in length')
    if len(x) < MIN_POINTS:
        raise InputError('loess needs at least {0} points, got {1}'.format(MIN_POINTS, len(x)))
    if not (0 < span <= 1):
        raise InputError('span must lie in (0, 1], got {0}'.format(span))
    if degree not in (1, 2):
        raise InputError('degree must be 1 or 2')
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteInput('loess inputs must be finite')

    curve = LoessCurve(x=x, y=y, span=float(span), degree=int(degree))
    fitted = np.empty(len(x))
    trace = 0.0
    for i, x0 in enumerate(x):
        row = curve.operator_row(x0)
        fitted[i] = row @ y
        trace += row[i]
    rss = float(np.sum((y - fitted) ** 2))
    residual_dof = len(x) - trace
    curve.fitted = fitted
    curve.equivalent_parameters = trace
    curve.sigma = math.sqrt(rss / residual_dof) if residual_dof > 0 else float('nan')
    return curve
