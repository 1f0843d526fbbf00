"""
Binary logit by Newton-Raphson.
"""
import logging

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from .exceptions import DimensionMismatch, InputError, NoVariation, RankDeficient, Separation
from .linear import EstimateResult, independent_columns

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-8
# beyond this linear predictor the fitted probabilities are 0 or 1 in double precision
SATURATION = 30.0


def _log_likelihood(y, eta):
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))


def logit_fit(design, y, max_iter=100, tol=GRADIENT_TOLERANCE):
    """
    Maximum likelihood logit.
    :param design: DesignMatrix; include a 'const' column for an intercept
    :param y: 0/1 outcome
    :param max_iter: Newton iterations before giving up
    :param tol: sup-norm of the score at convergence
    :return: EstimateResult with extra keys 'pseudo_r2', 'log_likelihood', 'null_log_likelihood', 'iterations'
    """
    X = design.values
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if len(y) != n:
        raise DimensionMismatch('outcome has {0} rows, design has {1}'.format(len(y), n))
    if not np.all((y == 0) | (y == 1)):
        raise InputError('logit outcome must be 0/1')
    share = y.mean() if n else np.nan
    if n == 0 or share in (0.0, 1.0):
        raise NoVariation('logit outcome has a single class')
    keep = independent_columns(X)
    if not keep.all():
        dropped = [design.columns[j] for j in np.flatnonzero(~keep)]
        raise RankDeficient('logit design is rank deficient; aliased columns: {0}'.format(', '.join(dropped)), dropped)

    beta = np.zeros(k)
    loglik = _log_likelihood(y, X @ beta)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        eta = X @ beta
        prob = expit(eta)
        gradient = X.T @ (y - prob)
        if np.max(np.abs(gradient)) < tol:
            converged = True
            break
        weights = prob * (1 - prob)
        information = X.T @ (X * weights[:, None])
        try:
            step = linalg.solve(information, gradient, assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            raise Separation('information matrix became singular; the outcome is separated by the regressors')
        # step halving keeps the likelihood non-decreasing
        for _ in range(30):
            candidate = beta + step
            candidate_loglik = _log_likelihood(y, X @ candidate)
            if candidate_loglik >= loglik - 1e-12:
                break
            step /= 2
        beta, loglik = candidate, candidate_loglik
        if np.max(np.abs(X @ beta)) > SATURATION and np.max(np.abs(step)) > 1e-3:
            raise Separation('logit coefficients diverge (|x\'b| > {0}); outcome is (quasi-)separated'.format(
                SATURATION))

    if not converged:
        raise Separation('logit did not converge in {0} iterations'.format(max_iter))

    prob = expit(X @ beta)
    if np.all(np.abs(y - prob) < 1e-6):
        raise Separation('regressors predict the outcome perfectly; the logit MLE does not exist')
    information = X.T @ (X * (prob * (1 - prob))[:, None])
    cov = linalg.inv(information)
    null_loglik = n * (share * np.log(share) + (1 - share) * np.log(1 - share))
    result = EstimateResult(names=design.columns, coef=beta, cov=cov, n=n, dof=n - k, cov_type='mle',
                            fitted=prob, residuals=y - prob)
    result.extra.update({
        'pseudo_r2': 1 - loglik / null_loglik,
        'log_likelihood': loglik,
        'null_log_likelihood': null_loglik,
        'iterations': iteration,
        'gradient_norm': float(np.max(np.abs(X.T @ (y - prob)))),
    })
    logger.debug('logit converged in %d iterations, pseudo R2 %.4f', iteration, result.extra['pseudo_r2'])
    return result
