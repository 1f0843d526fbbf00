"""
Shared design construction for the panel estimators.
"""
import logging

import numpy as np
import pandas as pd

from primitives.exceptions import InputError, RankDeficient
from primitives.linear import independent_columns

logger = logging.getLogger(__name__)

FIXED_EFFECTS = ('state', 'hcp_type', 'service_type')
COVARIATES = ('ln_speed',)
OUTCOME_COLUMNS = ('ln_price', 'ln_subsidy', 'ln_netcost')
TREATMENTS = ('tau_12', 'tau_12c')
GROUPS = ('g2', 'g2c')
CONTRAST = {'tau_12c': 1.0, 'tau_12': -1.0}


def require_columns(frame, columns):
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise InputError('unknown columns: {0}'.format(', '.join(missing)))


def dummies(frame, columns):
    """
    Indicator columns for each categorical, first level dropped.
    """
    if not columns:
        return pd.DataFrame(index=frame.index)
    require_columns(frame, columns)
    blocks = [pd.get_dummies(frame[name].astype(str), prefix=name, drop_first=True, dtype=float) for name in columns]
    return pd.concat(blocks, axis=1)


def check_two_periods(panel):
    """
    Panel must have periods 0 and 1 with nobody treated in period 0.
    """
    require_columns(panel, ('hcp_id', 'period', 's2', 's2c'))
    periods = set(panel['period'].unique())
    if periods != {0, 1}:
        raise InputError('panel must contain exactly periods 0 and 1, got {0}'.format(sorted(periods)))
    pre = panel[panel['period'] == 0]
    if (pre['s2'] != 0).any() or (pre['s2c'] != 0).any():
        raise InputError('treatment shares must be zero in period 0')
    shares = panel['s2'] + panel['s2c']
    if ((panel['s2'] < 0) | (panel['s2c'] < 0) | (shares > 1 + 1e-12)).any():
        raise InputError('treatment shares must lie in [0, 1] and sum to at most 1')


def with_treatments(panel):
    """
    Add the post dummy T, the period-1 intensities g2 and g2c of each HCP, and
    the treatment terms tau_12 = g2 T and tau_12c = g2c T.
    """
    out = panel.copy()
    post = out[out['period'] == 1].set_index('hcp_id')
    out['T'] = (out['period'] == 1).astype(float)
    out['g2'] = out['hcp_id'].map(post['s2']).fillna(0.0).astype(float)
    out['g2c'] = out['hcp_id'].map(post['s2c']).fillna(0.0).astype(float)
    out['tau_12'] = out['g2'] * out['T']
    out['tau_12c'] = out['g2c'] * out['T']
    return out


def present_margins(frame):
    """
    Treatment terms with at least one treated HCP.
    """
    return [name for name, group in zip(TREATMENTS, GROUPS) if (frame[group] > 0).any()]


def drop_aliased(block, protected=()):
    """
    Drop columns that are linear combinations of earlier ones, keeping the first listed.
    :param block: DataFrame of numeric regressors, protected columns first
    :param protected: names that must survive
    :return: (reduced DataFrame, list of dropped names)
    """
    if block.shape[1] == 0:
        return block, []
    keep = independent_columns(block.to_numpy(dtype=float))
    dropped = [name for name, kept in zip(block.columns, keep) if not kept]
    lost = [name for name in dropped if name in protected]
    if lost:
        raise RankDeficient('treatment columns are aliased: {0}'.format(', '.join(lost)), lost)
    if dropped:
        logger.warning('dropping aliased columns: %s', ', '.join(dropped))
    return block.loc[:, list(keep)], dropped


def contrast_record(contrast):
    low, high = contrast.conf_int
    return {'estimate': contrast.estimate, 'se': contrast.se, 'z': float(contrast.z), 'p_value': contrast.p_value,
            'ci_low': low, 'ci_high': high}


def centered(values):
    values = np.asarray(values, dtype=float)
    return values - values.mean(axis=0)


def pure_membership(panel, tol=1e-12):
    """
    Flag HCP-years whose bandwidth sits entirely on one program.
    :param panel: HCP-year panel with s2 and s2c
    :param tol: distance from 0 or 1 still counted as pure
    :return: copy of ``panel`` with a boolean ``pure`` column and 0/1 indicators ``d2`` and ``d2c``
    """
    require_columns(panel, ('s2', 's2c'))
    out = panel.copy()
    pure = pd.Series(True, index=out.index)
    for share, indicator in (('s2', 'd2'), ('s2c', 'd2c')):
        values = out[share].astype(float)
        on_edge = (values.abs() <= tol) | ((values - 1).abs() <= tol)
        pure &= on_edge
        out[indicator] = values.round().astype(int)
    out['pure'] = pure
    return out
