"""
Residualized LOESS of eligible prices on the ineligible fraction of a consortium.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy import linalg

from estimators.design import drop_aliased, dummies, require_columns
from primitives.exceptions import InputError
from primitives.linear import DesignMatrix, ols_fit
from primitives.loess import DEFAULT_SPAN, loess_fit

logger = logging.getLogger(__name__)

MIN_ROWS = 50
HUMP_CONTROLS = ('mean_bidders', 'ln_mean_speed', 'ln_total_speed')
HUMP_FIXED_EFFECTS = ('year', 'consortium_id')
GRID_POINTS = 101


class HumpVerdict(str, Enum):
    INVERTED_U = 'InvertedU'
    MONOTONE = 'Monotone'
    FLAT = 'Flat'


@dataclass
class HumpReport:
    x: np.ndarray
    y: np.ndarray
    grid: np.ndarray
    fit: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    peak_location: float
    peak_value: float
    verdict: HumpVerdict
    fwl_slope: float = float('nan')
    fwl_coefficient: float = float('nan')
    dropped: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def summary(self):
        return {'verdict': self.verdict.value, 'peak_location': self.peak_location, 'peak_value': self.peak_value,
                'fwl_slope': self.fwl_slope, 'fwl_coefficient': self.fwl_coefficient, 'n': len(self.x),
                'dropped': list(self.dropped), 'flags': list(self.flags)}

    def plot_data(self):
        return [(float(x), float(f), float(lo), float(hi))
                for x, f, lo, hi in zip(self.grid, self.fit, self.lower, self.upper)]


def residualize(values, controls):
    """
    Residuals of least squares on ``controls``, shifted back to the mean of ``values``.
    """
    coef = linalg.lstsq(controls, values)[0]
    return values - controls @ coef + values.mean()


def classify(fit, lower, upper):
    """
    InvertedU when the curve peaks strictly inside the grid and both the rise
    to the peak and the fall after it exceed the band half-width at the peak;
    Monotone when the curve still moves by more than that; Flat otherwise.
    """
    peak = int(np.argmax(fit))
    half_width = (upper[peak] - lower[peak]) / 2
    rise = fit[peak] - fit[:peak + 1].min()
    fall = fit[peak] - fit[peak:].min()
    if 0 < peak < len(fit) - 1 and rise > half_width and fall > half_width:
        return HumpVerdict.INVERTED_U
    if np.ptp(fit) > half_width:
        return HumpVerdict.MONOTONE
    return HumpVerdict.FLAT


def fwl_hump(rows, outcome='ln_price', fraction='ineligible_fraction', controls=HUMP_CONTROLS,
             fixed_effects=HUMP_FIXED_EFFECTS, span=DEFAULT_SPAN):
    """
    Partial the controls and fixed-effect dummies out of ln price and the
    ineligible fraction, re-center both at their means, then smooth one on the
    other and classify the shape.
    :param rows: consortium-year DataFrame
    :return: HumpReport
    """
    require_columns(rows, (outcome, fraction) + tuple(controls) + tuple(fixed_effects))
    if len(rows) < MIN_ROWS:
        raise InputError('hump test needs at least {0} consortium rows, got {1}'.format(MIN_ROWS, len(rows)))
    rows = rows.reset_index(drop=True)
    block = pd.concat([pd.DataFrame({'const': np.ones(len(rows))}), rows[list(controls)].astype(float),
                       dummies(rows, list(fixed_effects))], axis=1)
    block, dropped = drop_aliased(block)
    y = rows[outcome].to_numpy(dtype=float)
    f = rows[fraction].to_numpy(dtype=float)
    y_res = residualize(y, block.to_numpy())
    f_res = residualize(f, block.to_numpy())

    centered = f_res - f_res.mean()
    if np.sqrt(np.mean(centered ** 2)) <= 1e-10 * max(np.abs(f).max(), 1.0):
        logger.warning('ineligible fraction has no variation left after the controls; shape is Flat')
        return HumpReport(x=f_res, y=y_res, grid=np.array([f_res.mean()]), fit=np.array([y_res.mean()]),
                          lower=np.array([y_res.mean()]), upper=np.array([y_res.mean()]),
                          peak_location=float(f_res.mean()), peak_value=float(y_res.mean()),
                          verdict=HumpVerdict.FLAT, dropped=dropped, flags=['degenerate_fraction'])

    slope = float(centered @ (y_res - y_res.mean()) / (centered @ centered))
    full = ols_fit(DesignMatrix(np.column_stack([f, block.to_numpy()]), (fraction,) + tuple(block.columns)), y,
                   cluster_robust=False)
    curve = loess_fit(f_res, y_res, span=span)
    grid = np.linspace(f_res.min(), f_res.max(), GRID_POINTS)
    fit, lower, upper = curve.band(grid)
    verdict = classify(fit, lower, upper)
    peak = int(np.argmax(fit))
    logger.info('hump test on %d rows: %s, peak %.3f at fraction %.3f', len(rows), verdict.value, fit[peak],
                grid[peak])
    return HumpReport(x=f_res, y=y_res, grid=grid, fit=fit, lower=lower, upper=upper,
                      peak_location=float(grid[peak]), peak_value=float(fit[peak]), verdict=verdict,
                      fwl_slope=slope, fwl_coefficient=full.get(fraction), dropped=dropped)
