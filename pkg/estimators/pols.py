"""
Pooled OLS of log outcomes on program indicators.
"""
import logging

import numpy as np
import pandas as pd

from primitives.exceptions import InputError
from primitives.linear import DesignMatrix, linear_contrast, ols_fit

from .design import COVARIATES, FIXED_EFFECTS, drop_aliased, dummies, require_columns

logger = logging.getLogger(__name__)

PROGRAMS = ('p1', 'p2', 'p2c')
POLS_CONTRAST = {'p2c': 1.0, 'p2': -1.0}
PARTITION_TOLERANCE = 1e-9


def program_columns(rows, shares=False):
    """
    The three program regressors: 0/1 indicators on request rows, or bandwidth
    shares (P1 = 1 - S2 - S2c) on an HCP panel.
    """
    if shares:
        require_columns(rows, ('s2', 's2c'))
        s2 = rows['s2'].astype(float)
        s2c = rows['s2c'].astype(float)
        programs = pd.DataFrame({'p1': 1.0 - s2 - s2c, 'p2': s2, 'p2c': s2c}, index=rows.index)
    else:
        require_columns(rows, PROGRAMS)
        programs = rows[list(PROGRAMS)].astype(float)
        if not programs.isin([0.0, 1.0]).all().all():
            raise InputError('program indicators must be 0 or 1')
    values = programs.to_numpy()
    if (values < -PARTITION_TOLERANCE).any() or (np.abs(values.sum(axis=1) - 1) > PARTITION_TOLERANCE).any():
        raise InputError('program columns must partition every row')
    return programs


def pols_fit(rows, outcome='ln_price', covariates=COVARIATES, fixed_effects=('period',) + FIXED_EFFECTS,
             cluster='hcp_id', shares=False):
    """
    ln Y = b1 P1 + b2 P2 + b3 P2c + covariates + fixed-effect dummies, with no
    global intercept.
    :param rows: facility-year request rows, or an HCP panel when ``shares`` is True
    :param outcome: log outcome column
    :param covariates: continuous controls
    :param fixed_effects: categorical columns entered as dummies, first level dropped
    :param cluster: cluster column for the covariance, or None for HC1
    :param shares: use S2/S2c shares instead of indicators
    :return: EstimateResult; ``extra['contrast']`` is b3 - b2
    """
    require_columns(rows, (outcome,) + tuple(covariates) + tuple(fixed_effects) + ((cluster,) if cluster else ()))
    rows = rows.reset_index(drop=True)
    programs = program_columns(rows, shares)
    present = [name for name in PROGRAMS if (programs[name] != 0).any()]
    flags = ['no_{0}_rows'.format(name) for name in PROGRAMS if name not in present]
    for flag in flags:
        logger.warning('pooled OLS: %s', flag)
    block = pd.concat([programs[present], rows[list(covariates)].astype(float), dummies(rows, list(fixed_effects))],
                      axis=1)
    block, dropped = drop_aliased(block, protected=present)
    design = DesignMatrix(block.to_numpy(), block.columns, rows[cluster].to_numpy() if cluster else None)
    result = ols_fit(design, rows[outcome].to_numpy(dtype=float))
    result.flags.extend(flags)
    result.extra.update({
        'aliased': dropped, 'shares': shares,
        'contrast': linear_contrast(result, POLS_CONTRAST) if {'p2', 'p2c'} <= set(present) else None,
    })
    return result
