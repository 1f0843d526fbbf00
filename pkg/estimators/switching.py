"""
Who switches out of the price cap: nested logits of the period-1 switch
indicator on period-0 characteristics.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from primitives.linear import DesignMatrix
from primitives.logit import logit_fit
from simulation.panel import SWITCH_THRESHOLD

from .design import check_two_periods, require_columns

logger = logging.getLogger(__name__)

SWITCHING_SPECS = (
    ('H', ('H',)),
    ('+ln_speed', ('H', 'ln_speed')),
    ('+ln_price', ('H', 'ln_speed', 'ln_price')),
    ('+ln_requests', ('H', 'ln_speed', 'ln_price', 'ln_requests')),
)


def switching_frame(panel):
    """
    One row per HCP: switched (any period-1 bandwidth on P2 or P2c), the
    benefit indicator H = 1[p / p_u > 1 / 0.35] and period-0 covariates.
    """
    require_columns(panel, ('hcp_id', 'period', 's2', 's2c', 'urban_ratio', 'ln_speed', 'ln_price', 'n_requests'))
    check_two_periods(panel)
    pre = panel[panel['period'] == 0].set_index('hcp_id').sort_index()
    post = panel[panel['period'] == 1].set_index('hcp_id')
    switched = (post['s2'] + post['s2c'] > 0).reindex(pre.index, fill_value=False)
    return pd.DataFrame({
        'switched': switched.astype(int),
        'H': (pre['urban_ratio'].astype(float) > SWITCH_THRESHOLD).astype(float),
        'ln_speed': pre['ln_speed'].astype(float),
        'ln_price': pre['ln_price'].astype(float),
        'ln_requests': np.log(pre['n_requests'].astype(float)),
    }, index=pre.index)


@dataclass
class SwitchingPath:
    """
    The nested logits in order, with the pseudo-R2 gained by each added covariate.
    """
    labels: tuple
    models: list
    flags: list = field(default_factory=list)

    @property
    def pseudo_r2(self):
        return [model.extra['pseudo_r2'] for model in self.models]

    @property
    def increments(self):
        values = self.pseudo_r2
        return [values[0]] + [later - earlier for earlier, later in zip(values, values[1:])]

    @property
    def final(self):
        return self.models[-1]

    def coefficient_path(self, name):
        return [model.get(name) if name in model else None for model in self.models]

    def records(self):
        rows = []
        for label, model, increment in zip(self.labels, self.models, self.increments):
            for record in model.records():
                record.update({'model': label, 'pseudo_r2': model.extra['pseudo_r2'], 'increment': increment,
                               'n': model.n})
                rows.append(record)
        return rows


def switching_logit(frame):
    """
    Fit the four nested switching logits: H only, then adding ln speed, ln
    price and ln requests, each with an intercept.
    :param frame: output of switching_frame, or any frame with the same columns
    :return: SwitchingPath
    """
    require_columns(frame, ('switched',) + SWITCHING_SPECS[-1][1])
    y = frame['switched'].to_numpy(dtype=float)
    models = []
    for label, columns in SWITCHING_SPECS:
        design = DesignMatrix.from_frame(frame, columns).with_intercept()
        models.append(logit_fit(design, y))
    path = SwitchingPath(tuple(label for label, _ in SWITCHING_SPECS), models)
    logger.info('switching logit on %d HCPs: pseudo R2 %s', len(frame),
                ', '.join('{0:.4f}'.format(value) for value in path.pseudo_r2))
    return path
