"""
Scenario config files.

A config is INI text. Sections group the ScenarioConfig fields; every key is
optional and defaults to the ScenarioConfig value::

    [population]
    n_hcps = 970
    facilities_mean = 2.0
    speed_log_mean = 3.0
    speed_log_sd = 1.2
    speed_elasticity = 0.05
    speed_growth = 0.0
    speed_upgrade_sd = 0.25
    switch_speed_gain = 0.15
    n_states = 10
    n_hcp_types = 4
    n_service_types = 3

    [demand]
    demand_intercept = 90, 110
    demand_slope = 1.0
    cost_range = 18, 22
    urban_price_ratio = 1.0

    [mechanism]
    cap_fraction = 0.92, 0.96
    tau = 0.65
    alpha = 0.5
    gamma_median = 0.85
    gamma_dispersion = 0.15

    [switching]
    switching_noise = 0.25
    require_benefit = true

    [consortium]
    consortium_share = 0.3
    consortium_enforcement = 1.0
    consortium_ratio_span = 4.0

    [panel]
    trend = 0.05
    trend_violation = 1.0
    outcome_noise = 0.3

    [run]
    seed = 0
    replication = 0
    max_attempts = 1000000
"""
import configparser
import logging
import re

from simulation.config import ScenarioConfig

from .exceptions import ConfigParse, IoFailure
from .forms import ScenarioConfigForm

logger = logging.getLogger(__name__)

SECTIONS = {
    'population': ('n_hcps', 'facilities_mean', 'speed_log_mean', 'speed_log_sd', 'speed_elasticity', 'speed_growth',
                   'speed_upgrade_sd', 'switch_speed_gain',
                   'n_states', 'n_hcp_types', 'n_service_types'),
    'demand': ('demand_intercept', 'demand_slope', 'cost_range', 'urban_price_ratio'),
    'mechanism': ('cap_fraction', 'tau', 'alpha', 'gamma_median', 'gamma_dispersion'),
    'switching': ('switching_noise', 'require_benefit'),
    'consortium': ('consortium_share', 'consortium_enforcement', 'consortium_ratio_span'),
    'panel': ('trend', 'trend_violation', 'outcome_noise'),
    'run': ('seed', 'replication', 'max_attempts'),
}
BOOLEAN_KEYS = ('require_benefit',)

_SECTION_LINE = re.compile(r'^\s*\[([^\]]+)\]')
_KEY_LINE = re.compile(r'^\s*([^=:#;\s][^=:]*?)\s*[=:]')


def locate_keys(text):
    """
    Map (section, key) to the 1-based line where the key is set.
    """
    where = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_LINE.match(line)
        if header:
            section = header.group(1).strip()
            where.setdefault((section, None), number)
            continue
        key = _KEY_LINE.match(line)
        if key and section is not None:
            where[(section, key.group(1).strip().lower())] = number
    return where


def _section_of(key):
    return next((section for section, keys in SECTIONS.items() if key in keys), None)


def parse_config(text, source='<config>'):
    """
    Parse and validate config text.
    :param text: INI text
    :param source: name used in log messages
    :return: ScenarioConfig
    """
    lines = locate_keys(text)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigParse(str(exc).replace('\n', ' '), line=getattr(exc, 'lineno', None)) from exc

    data = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigParse('unknown section', field=section, line=lines.get((section, None)))
        for key in parser[section]:
            if key not in SECTIONS[section]:
                raise ConfigParse('unknown key', field='{0}.{1}'.format(section, key), line=lines.get((section, key)))
            if key in BOOLEAN_KEYS:
                try:
                    data[key] = 'true' if parser.getboolean(section, key) else 'false'
                except ValueError as exc:
                    raise ConfigParse('expected a boolean', field='{0}.{1}'.format(section, key),
                                      line=lines.get((section, key))) from exc
            else:
                data[key] = parser[section][key]

    form = ScenarioConfigForm(data=data)
    if not form.is_valid():
        name, messages = next(iter(form.errors.items()))
        section = _section_of(name)
        raise ConfigParse(' '.join(messages), field='{0}.{1}'.format(section, name) if section else None,
                          line=lines.get((section, name)))
    logger.debug('parsed config %s: %s', source, form.scenario)
    return form.scenario


def load_config(path):
    """
    Read and validate a config file.
    :param path: INI file
    :return: ScenarioConfig
    """
    try:
        with open(path, encoding='utf-8') as handle:
            text = handle.read()
    except OSError as exc:
        raise IoFailure('cannot read config {0}: {1}'.format(path, exc)) from exc
    return parse_config(text, source=str(path))


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (tuple, list)):
        return ', '.join(repr(float(part)) for part in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_text(config):
    """
    INI text that parses back to ``config``.
    """
    lines = []
    for section, keys in SECTIONS.items():
        lines.append('[{0}]'.format(section))
        lines.extend('{0} = {1}'.format(key, _format(getattr(config, key))) for key in keys)
        lines.append('')
    return '\n'.join(lines)


def default_config():
    return ScenarioConfig(seed=0)
