"""
Two-period difference-in-differences with two treatment margins.

The treatment terms are the period-1 program shares interacted with the post
dummy, tau_12 = S2 T and tau_12c = S2c T. The pooled regression carries the
group intensities, the post dummy, covariates and fixed-effect dummies; the
within regression absorbs one effect per HCP; the first-difference regression
differences out the HCP level.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from primitives.linear import DesignMatrix, demean_by_group, linear_contrast, ols_fit

from .design import (CONTRAST, COVARIATES, FIXED_EFFECTS, GROUPS, TREATMENTS, check_two_periods, drop_aliased,
                     dummies, present_margins, pure_membership, require_columns, with_treatments)
from .exceptions import NoSwitchers, UnbalancedPanelForFD

logger = logging.getLogger(__name__)

MARGIN_LABELS = {'tau_12': 'p2', 'tau_12c': 'p2c'}
# demeaned columns below this share of their scale are time-invariant
WITHIN_ZERO = 1e-12


class TreatmentMode(str, Enum):
    CONTINUOUS = 'continuous'
    BINARY = 'binary'


@dataclass(frozen=True)
class TwfeSpec:
    """
    Regression specification for twfe_fit and first_difference_fit.
    Binary mode keeps only HCPs whose period-1 bandwidth sits on a single program.
    """
    outcome: str = 'ln_price'
    mode: TreatmentMode = TreatmentMode.CONTINUOUS
    covariates: tuple = COVARIATES
    fixed_effects: tuple = FIXED_EFFECTS
    cluster: str = 'hcp_id'
    absorb_hcp: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'mode', TreatmentMode(self.mode))
        object.__setattr__(self, 'covariates', tuple(self.covariates))
        object.__setattr__(self, 'fixed_effects', tuple(self.fixed_effects))

    @property
    def columns(self):
        return (self.outcome, self.cluster, 'hcp_id', 'period', 's2', 's2c') + self.covariates + self.fixed_effects


def _prepare(panel, spec):
    require_columns(panel, spec.columns)
    check_two_periods(panel)
    flags = []
    extra = {'mode': spec.mode.value, 'dropped_mixed': 0}
    frame = panel
    if spec.mode is TreatmentMode.BINARY:
        marked = pure_membership(panel)
        mixed = set(marked.loc[~marked['pure'], 'hcp_id'])
        if mixed:
            logger.warning('binary treatment: dropping %d HCPs with mixed program participation', len(mixed))
            flags.append('dropped_mixed_hcps')
        frame = marked[~marked['hcp_id'].isin(mixed)].copy()
        frame['s2'] = frame['d2'].astype(float)
        frame['s2c'] = frame['d2c'].astype(float)
        frame = frame.drop(columns=['pure', 'd2', 'd2c'])
        extra['dropped_mixed'] = len(mixed)
    frame = with_treatments(frame.reset_index(drop=True))

    present = present_margins(frame)
    absent = [name for name in TREATMENTS if name not in present]
    if not present:
        raise NoSwitchers('no HCP switched to P2 or P2c; both treatment effects are undefined')
    for name in absent:
        flag = 'no_{0}_switchers'.format(MARGIN_LABELS[name])
        logger.warning('%s: %s is reported as absent', flag, name)
        flags.append(flag)
    extra['absent'] = absent
    return frame, present, flags, extra


def _finish(result, present, flags, extra, dropped):
    result.flags.extend(flags)
    extra['aliased'] = dropped
    extra['contrast'] = linear_contrast(result, CONTRAST) if len(present) == 2 else None
    result.extra.update(extra)
    return result


def _within(frame, spec, present):
    columns = ['T'] + present + list(spec.covariates)
    groups = frame['hcp_id'].to_numpy()
    values = demean_by_group(frame[columns].to_numpy(dtype=float), groups)
    scale = np.maximum(np.abs(frame[columns].to_numpy(dtype=float)).max(axis=0), 1.0)
    values[np.abs(values) < WITHIN_ZERO * scale] = 0.0
    block, dropped = drop_aliased(pd.DataFrame(values, columns=columns), protected=present)

    y = frame[spec.outcome].to_numpy(dtype=float)
    result = ols_fit(DesignMatrix(block.to_numpy(), block.columns, frame[spec.cluster].to_numpy()),
                     demean_by_group(y, groups))
    n_groups = len(np.unique(groups.astype(str)))
    ssr = float(result.residuals @ result.residuals)
    sst = float(np.sum((y - y.mean()) ** 2))
    result.within_r_squared = result.r_squared
    result.r_squared = 1 - ssr / sst if sst > 0 else np.nan
    result.dof = result.n - len(result.names) - n_groups
    result.adj_r_squared = (1 - (1 - result.r_squared) * (result.n - 1) / result.dof if result.dof > 0
                            else np.nan)
    result.extra['absorbed_groups'] = n_groups
    return result, dropped


def _pooled(frame, spec, present):
    groups = [group for name, group in zip(TREATMENTS, GROUPS) if name in present]
    block = pd.concat([
        pd.DataFrame({'const': np.ones(len(frame)), 'T': frame['T']}),
        frame[present + groups + list(spec.covariates)].astype(float),
        dummies(frame, list(spec.fixed_effects)),
    ], axis=1)
    block, dropped = drop_aliased(block, protected=present)
    result = ols_fit(DesignMatrix(block.to_numpy(), block.columns, frame[spec.cluster].to_numpy()),
                     frame[spec.outcome].to_numpy(dtype=float))
    return result, dropped


def twfe_fit(panel, spec=None):
    """
    Difference-in-differences with continuous (or binary) program shares.
    :param panel: two-period HCP panel
    :param spec: TwfeSpec, defaults to ln price in continuous mode
    :return: EstimateResult with tau_12 and/or tau_12c, cluster-robust at ``spec.cluster``;
        ``extra['contrast']`` holds tau_12c - tau_12 when both margins are present
    """
    spec = spec or TwfeSpec()
    frame, present, flags, extra = _prepare(panel, spec)
    if spec.absorb_hcp:
        result, dropped = _within(frame, spec, present)
    else:
        result, dropped = _pooled(frame, spec, present)
        result.within_r_squared = _within(frame, spec, present)[0].within_r_squared
    extra['estimator'] = 'within' if spec.absorb_hcp else 'pooled'
    result = _finish(result, present, flags, extra, dropped)
    logger.info('TWFE %s (%s, %s): %s on %d rows', spec.outcome, spec.mode.value, extra['estimator'],
                ', '.join('{0}={1:.4f}'.format(name, result.get(name)) for name in present), result.n)
    return result


def first_difference_fit(panel, spec=None):
    """
    Regress the within-HCP change of the outcome on a constant (named T), the
    period-1 treatment shares and the covariate changes (named as the covariates).
    Requires every HCP in both periods exactly once.
    """
    spec = spec or TwfeSpec()
    frame, present, flags, extra = _prepare(panel, spec)
    counts = frame.groupby('hcp_id')['period'].agg(['size', 'nunique'])
    unbalanced = counts.index[(counts['size'] != 2) | (counts['nunique'] != 2)]
    if len(unbalanced):
        raise UnbalancedPanelForFD('{0} HCPs are not observed exactly once in each period, e.g. {1}'.format(
            len(unbalanced), unbalanced[0]))

    pre = frame[frame['period'] == 0].set_index('hcp_id').sort_index()
    post = frame[frame['period'] == 1].set_index('hcp_id').sort_index()
    block = pd.DataFrame({'T': np.ones(len(post))}, index=post.index)
    for name in present:
        block[name] = post[name].astype(float)
    for name in spec.covariates:
        block[name] = post[name].astype(float) - pre[name].astype(float)
    block, dropped = drop_aliased(block, protected=present)
    change = post[spec.outcome].astype(float) - pre[spec.outcome].astype(float)
    clusters = post[spec.cluster].to_numpy() if spec.cluster != 'hcp_id' else post.index.to_numpy()
    result = ols_fit(DesignMatrix(block.to_numpy(), block.columns, clusters), change.to_numpy())
    extra['estimator'] = 'first_difference'
    return _finish(result, present, flags, extra, dropped)
