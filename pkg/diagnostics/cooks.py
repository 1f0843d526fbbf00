"""
Influence diagnostics on the HCP-demeaned regression and the trimmed refit.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from estimators.design import OUTCOME_COLUMNS
from estimators.twfe import TreatmentMode, TwfeSpec, twfe_fit

logger = logging.getLogger(__name__)


def cooks_threshold(n):
    return 4.0 / n


def cooks_distance(result):
    """
    D_i = e_i^2 / (k s^2) * h_i / (1 - h_i)^2 with s^2 = SSR / (n - k) of the fitted regression.
    """
    resid = result.residuals
    leverage = result.leverage
    n, k = len(resid), len(result.names)
    s2 = float(resid @ resid) / (n - k) if n > k else np.nan
    with np.errstate(divide='ignore', invalid='ignore'):
        return resid ** 2 / (k * s2) * leverage / (1 - leverage) ** 2


def percent_change(baseline, trimmed):
    return 100.0 * (trimmed - baseline) / abs(baseline) if baseline != 0 else np.nan


@dataclass
class CooksReport:
    threshold: float
    distances: pd.DataFrame
    flagged_hcps: list
    baseline: dict
    trimmed: dict
    flags: list = field(default_factory=list)

    def delta_table(self):
        """
        Baseline and trimmed coefficients per outcome and term, with the percentage change.
        """
        rows = []
        for outcome, base in self.baseline.items():
            trimmed = self.trimmed.get(outcome)
            for j, term in enumerate(base.names):
                after = trimmed.get(term) if trimmed is not None and term in trimmed else np.nan
                rows.append({
                    'outcome': outcome, 'term': term, 'baseline': float(base.coef[j]),
                    'baseline_se': float(base.se[j]), 'trimmed': after,
                    'trimmed_se': trimmed.standard_error(term) if trimmed is not None and term in trimmed else np.nan,
                    'delta_pct': percent_change(float(base.coef[j]), after),
                    'n_baseline': base.n, 'n_trimmed': trimmed.n if trimmed is not None else 0,
                })
        return pd.DataFrame(rows)


def cooks_trim(panel, spec=None, outcomes=OUTCOME_COLUMNS):
    """
    Flag rows with Cook's distance above 4/N in any outcome equation, drop
    every HCP with a flagged row and refit.
    :param panel: balanced two-period HCP panel
    :param spec: TwfeSpec; always fitted as the continuous-share within estimator
    :param outcomes: outcome columns to screen
    :return: CooksReport
    """
    spec = replace(spec or TwfeSpec(), absorb_hcp=True, mode=TreatmentMode.CONTINUOUS)
    frame = panel.reset_index(drop=True)
    distances = frame[['hcp_id', 'period']].copy()
    baseline = {}
    flagged = set()
    threshold = cooks_threshold(len(frame))
    for outcome in outcomes:
        fit = twfe_fit(frame, replace(spec, outcome=outcome))
        baseline[outcome] = fit
        distances['d_' + outcome] = cooks_distance(fit)
        flagged |= set(frame.loc[distances['d_' + outcome] > threshold, 'hcp_id'])

    flags = []
    trimmed = {}
    kept = frame[~frame['hcp_id'].isin(flagged)]
    if not flagged:
        trimmed = dict(baseline)
    elif kept.empty:
        flags.append('all_hcps_flagged')
        logger.warning('every HCP has an influential row; no trimmed refit')
    else:
        for outcome in outcomes:
            trimmed[outcome] = twfe_fit(kept, replace(spec, outcome=outcome))
    logger.info("Cook's distance: %d of %d HCPs flagged at 4/N = %.6f", len(flagged), frame['hcp_id'].nunique(),
                threshold)
    return CooksReport(threshold=threshold, distances=distances, flagged_hcps=sorted(flagged), baseline=baseline,
                       trimmed=trimmed, flags=flags)
