"""
Scenario settings for the synthetic provider panel.
"""
import math
from dataclasses import asdict, dataclass, fields, replace

from .exceptions import InvalidScenario

MAX_ATTEMPTS = 10 ** 6
SWITCH_PRICE_SHARE = 0.35


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything needed to draw one replication of the panel.

    Facilities per HCP are 1 + Poisson(facilities_mean - 1). Each facility gets
    linear demand a - b p with a drawn uniformly from ``demand_intercept``
    (scaled by speed ** speed_elasticity), cost c from ``cost_range`` and a cap
    equal to ``cap_fraction`` times its own monopoly price. Penalty curvature
    is log-normal around ``gamma_median``. In period 1 each facility's log speed
    moves by ``speed_growth`` plus normal noise of scale ``speed_upgrade_sd``,
    and by ``switch_speed_gain`` more when it leaves P1.
    """
    seed: int
    n_hcps: int = 970
    facilities_mean: float = 2.0
    demand_intercept: tuple = (90.0, 110.0)
    demand_slope: float = 1.0
    cost_range: tuple = (18.0, 22.0)
    cap_fraction: tuple = (0.92, 0.96)
    speed_log_mean: float = 3.0
    speed_log_sd: float = 1.2
    speed_elasticity: float = 0.05
    speed_growth: float = 0.0
    speed_upgrade_sd: float = 0.25
    switch_speed_gain: float = 0.15
    tau: float = 0.65
    alpha: float = 0.5
    gamma_median: float = 0.85
    gamma_dispersion: float = 0.15
    urban_price_ratio: float = 1.0
    switching_noise: float = 0.25
    require_benefit: bool = True
    consortium_share: float = 0.3
    consortium_enforcement: float = 1.0
    consortium_ratio_span: float = 4.0
    trend: float = 0.05
    trend_violation: float = 1.0
    outcome_noise: float = 0.3
    n_states: int = 10
    n_hcp_types: int = 4
    n_service_types: int = 3
    replication: int = 0
    max_attempts: int = MAX_ATTEMPTS

    def __post_init__(self):
        problems = []
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            problems.append('seed must be a non-negative integer')
        if self.n_hcps < 0:
            problems.append('n_hcps must be >= 0')
        if self.facilities_mean < 1:
            problems.append('facilities_mean must be >= 1')
        for name in ('demand_intercept', 'cost_range', 'cap_fraction'):
            low, high = getattr(self, name)
            if not (math.isfinite(low) and math.isfinite(high) and low <= high):
                problems.append('{0} must be an interval (low, high)'.format(name))
        if self.demand_intercept[0] <= 0 or self.demand_slope <= 0:
            problems.append('demand intercept and slope must be positive')
        if self.cost_range[0] < 0:
            problems.append('cost_range must be non-negative')
        if not (0 < self.cap_fraction[0] and self.cap_fraction[1] < 1):
            problems.append('cap_fraction must lie inside (0, 1)')
        if not 0 < self.tau < 1:
            problems.append('tau must lie in (0, 1)')
        if not 0 < self.alpha <= 1:
            problems.append('alpha must lie in (0, 1]')
        if self.gamma_median <= 0 or self.gamma_dispersion < 0:
            problems.append('gamma_median must be > 0 and gamma_dispersion >= 0')
        if self.urban_price_ratio <= 0:
            problems.append('urban_price_ratio must be > 0')
        if min(self.switching_noise, self.outcome_noise, self.speed_log_sd, self.speed_upgrade_sd) < 0:
            problems.append('noise scales must be >= 0')
        if not 0 <= self.consortium_share <= 1:
            problems.append('consortium_share must lie in [0, 1]')
        if self.consortium_enforcement <= 0 or self.consortium_ratio_span < 1:
            problems.append('consortium_enforcement must be > 0 and consortium_ratio_span >= 1')
        if min(self.n_states, self.n_hcp_types, self.n_service_types) < 1:
            problems.append('category counts must be >= 1')
        if self.replication < 0 or self.max_attempts < 1:
            problems.append('replication must be >= 0 and max_attempts >= 1')
        if problems:
            raise InvalidScenario(problems)

    @property
    def peak_ratio(self):
        """
        Revenue ratio at which consortium distortion peaks.
        """
        return 1 / math.sqrt(self.consortium_enforcement)

    def as_dict(self):
        out = asdict(self)
        return {name: list(value) if isinstance(value, tuple) else value for name, value in out.items()}

    def for_replication(self, replication):
        return replace(self, replication=int(replication))

    def update(self, **changes):
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in fields(cls))
