"""
One-dimensional search helpers on top of scipy.optimize.
"""
import logging

import numpy as np
from scipy import optimize

from .exceptions import NoBracket

logger = logging.getLogger(__name__)

GRID_POINTS = 65


def bracket_maximum(func, lower, upper, points=GRID_POINTS):
    """
    Scan [lower, upper] on an even grid and return a triple (a, b, c) with
    f(b) >= f(a) and f(b) >= f(c).
    :param func: scalar function to maximize
    :param lower: lower end of the search interval
    :param upper: upper end of the search interval
    :param points: number of grid points
    :return: tuple (a, b, c), or (x, x, x) when the maximum sits on an endpoint
    """
    if not np.isfinite(lower) or not np.isfinite(upper) or upper <= lower:
        raise NoBracket('invalid search interval [{0}, {1}]'.format(lower, upper))
    grid = np.linspace(lower, upper, points)
    values = np.array([func(x) for x in grid], dtype=float)
    if not np.any(np.isfinite(values)):
        raise NoBracket('objective is not finite anywhere on [{0}, {1}]'.format(lower, upper))
    values[~np.isfinite(values)] = -np.inf
    i = int(np.argmax(values))
    if i == 0 or i == points - 1:
        return grid[i], grid[i], grid[i]
    return grid[i - 1], grid[i], grid[i + 1]


def golden_section_maximize(func, lower, upper, tol=1e-10, allow_boundary=False):
    """
    Maximize a single-peaked function on [lower, upper] by golden-section search
    inside a grid bracket.
    :param func: scalar function
    :param lower: lower end
    :param upper: upper end
    :param tol: relative tolerance on the argument
    :param allow_boundary: return an endpoint maximizer instead of raising NoBracket
    :return: the maximizer
    """
    a, b, c = bracket_maximum(func, lower, upper)
    if a == b == c:
        if allow_boundary:
            return float(b)
        raise NoBracket('maximum of the objective lies on the boundary of [{0}, {1}]'.format(lower, upper))
    if func(b) == func(a) == func(c):
        return float(b)
    return float(optimize.golden(lambda x: -func(x), brack=(a, b, c), tol=tol))


def bisect_root(func, lower, upper, tol=1e-10):
    """
    Root of a monotone function by bisection.
    :param func: scalar function with a sign change on [lower, upper]
    :param lower: lower end
    :param upper: upper end
    :param tol: absolute tolerance on the argument
    :return: the root
    """
    f_lower, f_upper = func(lower), func(upper)
    if f_lower == 0:
        return float(lower)
    if f_upper == 0:
        return float(upper)
    if np.sign(f_lower) == np.sign(f_upper):
        raise NoBracket('no sign change on [{0}, {1}]'.format(lower, upper))
    return float(optimize.bisect(func, lower, upper, xtol=tol, maxiter=500))


def polish_root(func, lower, upper, guess):
    """
    Refine ``guess`` to a root of ``func`` with Brent's method when the
    interval brackets a sign change, otherwise return ``guess`` unchanged.
    """
    try:
        f_lower, f_upper = func(lower), func(upper)
    except (ArithmeticError, ValueError):
        return guess
    if not (np.isfinite(f_lower) and np.isfinite(f_upper)) or np.sign(f_lower) == np.sign(f_upper):
        return guess
    return float(optimize.brentq(func, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
