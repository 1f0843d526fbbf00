"""
Common-support restriction on pre-period speed.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from estimators.design import require_columns
from estimators.twfe import TwfeSpec, twfe_fit

from .cooks import percent_change
from .exceptions import EmptyAfterRestriction

logger = logging.getLogger(__name__)

# P2c pre-period speed range in the administrative data, Mbps
OBSERVED_P2C_SPEED_RANGE = (1.5, 139.6)
ANCHOR_SHARES = {'P2': 's2', 'P2c': 's2c'}


@dataclass
class SupportReport:
    anchor_program: str
    speed_range: tuple
    n_hcps_before: int
    n_hcps_after: int
    dropped_hcps: list
    baseline: object
    restricted: object
    flags: list = field(default_factory=list)

    def delta_table(self):
        rows = []
        for j, term in enumerate(self.baseline.names):
            after = self.restricted.get(term) if term in self.restricted else np.nan
            rows.append({'term': term, 'baseline': float(self.baseline.coef[j]), 'restricted': after,
                         'delta_pct': percent_change(float(self.baseline.coef[j]), after)})
        return rows


def anchor_speed_range(panel, anchor_program='P2c'):
    """
    Min and max period-0 speed (Mbps) over HCPs with period-1 bandwidth on the anchor program.
    """
    share = ANCHOR_SHARES[anchor_program]
    post = panel[panel['period'] == 1]
    anchors = set(post.loc[post[share] > 0, 'hcp_id'])
    pre = panel[(panel['period'] == 0) & panel['hcp_id'].isin(anchors)]
    if pre.empty:
        raise EmptyAfterRestriction('no HCP switched to {0}; cannot anchor a speed range'.format(anchor_program))
    return float(pre['speed_mbps'].min()), float(pre['speed_mbps'].max())


def restrict_to_support(panel, speed_range):
    low, high = speed_range
    pre = panel[panel['period'] == 0]
    inside = set(pre.loc[(pre['speed_mbps'] >= low) & (pre['speed_mbps'] <= high), 'hcp_id'])
    return panel[panel['hcp_id'].isin(inside)]


def common_support(panel, anchor_program='P2c', spec=None, speed_range=None):
    """
    Keep HCPs whose pre-period speed lies within the anchor program's range and refit.
    :param panel: two-period HCP panel with speed_mbps
    :param anchor_program: 'P2' or 'P2c'
    :param spec: TwfeSpec for both fits
    :param speed_range: explicit (low, high) in Mbps, e.g. OBSERVED_P2C_SPEED_RANGE
    :return: SupportReport
    """
    require_columns(panel, ('hcp_id', 'period', 'speed_mbps', 's2', 's2c'))
    spec = spec or TwfeSpec()
    speed_range = tuple(speed_range) if speed_range is not None else anchor_speed_range(panel, anchor_program)
    restricted = restrict_to_support(panel, speed_range)
    if restricted.empty:
        raise EmptyAfterRestriction('no HCP has pre-period speed within [{0:g}, {1:g}] Mbps'.format(*speed_range))
    before = set(panel['hcp_id'])
    after = set(restricted['hcp_id'])
    logger.info('common support [%g, %g] Mbps keeps %d of %d HCPs', speed_range[0], speed_range[1], len(after),
                len(before))
    return SupportReport(
        anchor_program=anchor_program, speed_range=speed_range, n_hcps_before=len(before), n_hcps_after=len(after),
        dropped_hcps=sorted(before - after), baseline=twfe_fit(panel, spec), restricted=twfe_fit(restricted, spec),
    )
