from django import forms
from django.core.exceptions import ValidationError

from simulation.config import ScenarioConfig
from simulation.exceptions import InvalidScenario


class IntervalField(forms.Field):
    """
    'low, high' pair of floats
    """

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if isinstance(value, (tuple, list)):
            parts = list(value)
        else:
            parts = [part.strip() for part in str(value).split(',')]
        if len(parts) != 2:
            raise ValidationError('expected two comma-separated numbers', code='interval')
        try:
            return tuple(float(part) for part in parts)
        except ValueError as exc:
            raise ValidationError('expected two comma-separated numbers', code='interval') from exc


class ScenarioConfigForm(forms.Form):
    """
    Form that validates the keys of a scenario config file. Every key is
    optional; omitted keys keep the ScenarioConfig default.
    """

    # [population]
    n_hcps = forms.IntegerField(required=False, min_value=0)
    facilities_mean = forms.FloatField(required=False)
    speed_log_mean = forms.FloatField(required=False)
    speed_log_sd = forms.FloatField(required=False)
    speed_elasticity = forms.FloatField(required=False)
    speed_growth = forms.FloatField(required=False)
    speed_upgrade_sd = forms.FloatField(required=False, min_value=0)
    switch_speed_gain = forms.FloatField(required=False)
    n_states = forms.IntegerField(required=False, min_value=1)
    n_hcp_types = forms.IntegerField(required=False, min_value=1)
    n_service_types = forms.IntegerField(required=False, min_value=1)
    # [demand]
    demand_intercept = IntervalField(required=False)
    demand_slope = forms.FloatField(required=False)
    cost_range = IntervalField(required=False)
    urban_price_ratio = forms.FloatField(required=False)
    # [mechanism]
    cap_fraction = IntervalField(required=False)
    tau = forms.FloatField(required=False)
    alpha = forms.FloatField(required=False)
    gamma_median = forms.FloatField(required=False)
    gamma_dispersion = forms.FloatField(required=False)
    # [switching]
    switching_noise = forms.FloatField(required=False)
    require_benefit = forms.NullBooleanField(required=False)
    # [consortium]
    consortium_share = forms.FloatField(required=False)
    consortium_enforcement = forms.FloatField(required=False)
    consortium_ratio_span = forms.FloatField(required=False)
    # [panel]
    trend = forms.FloatField(required=False)
    trend_violation = forms.FloatField(required=False)
    outcome_noise = forms.FloatField(required=False)
    # [run]
    seed = forms.IntegerField(required=False, min_value=0)
    replication = forms.IntegerField(required=False, min_value=0)
    max_attempts = forms.IntegerField(required=False, min_value=1)

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        values = {name: value for name, value in cleaned_data.items() if value is not None}
        values.setdefault('seed', 0)
        try:
            self.scenario = ScenarioConfig(**values)
        except InvalidScenario as exc:
            for problem in exc.problems:
                name = problem.split()[0]
                self.add_error(name if name in self.fields else None, problem)
        return cleaned_data
