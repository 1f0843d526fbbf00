"""
Human-readable tables and machine-readable records for command output.
"""
import math

import numpy as np
import pandas as pd

TERM_LABELS = {
    'tau_12': 'tau_12 (P1 -> P2)',
    'tau_12c': 'tau_12c (P1 -> P2c)',
    'contrast': 'tau_12c - tau_12',
    'p1': 'beta_1 (P1)',
    'p2': 'beta_2 (P2)',
    'p2c': 'beta_3 (P2c)',
    'pols_contrast': 'beta_3 - beta_2',
}
REPORTED_TERMS = {
    'pols': ('p1', 'p2', 'p2c'),
    'twfe-cont': ('tau_12', 'tau_12c'),
    'twfe-bin': ('tau_12', 'tau_12c'),
    'dml': ('tau_12', 'tau_12c'),
}
RECORD_COLUMNS = ('method', 'outcome', 'term', 'label', 'estimate', 'se', 'p_value', 'ci_low', 'ci_high', 'n',
                  'r_squared', 'within_r_squared')


def clean(value):
    """
    JSON-safe scalar: numpy types unwrapped, non-finite floats as None.
    """
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, dict):
        return {str(key): clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [clean(item) for item in value]
    return value


def stars(p_value):
    if p_value is None or not np.isfinite(p_value):
        return ''
    return '***' if p_value < 0.01 else '**' if p_value < 0.05 else '*' if p_value < 0.1 else ''


def _term_row(method, outcome, result, term, label):
    return {'method': method, 'outcome': outcome, 'term': term, 'label': label,
            'estimate': result.get(term), 'se': result.standard_error(term), 'p_value': result.p_value(term),
            'ci_low': float(result.conf_int()[result.index(term), 0]),
            'ci_high': float(result.conf_int()[result.index(term), 1]),
            'n': result.n, 'r_squared': result.r_squared, 'within_r_squared': result.within_r_squared}


def estimate_rows(result, method, outcome):
    """
    Reported terms of one estimate plus the program contrast, one row each.
    Absent margins are reported with empty numbers.
    """
    rows = []
    for term in REPORTED_TERMS[method]:
        if term in result:
            rows.append(_term_row(method, outcome, result, term, TERM_LABELS[term]))
        else:
            rows.append({'method': method, 'outcome': outcome, 'term': term, 'label': TERM_LABELS[term],
                         'estimate': np.nan, 'se': np.nan, 'p_value': np.nan, 'ci_low': np.nan, 'ci_high': np.nan,
                         'n': result.n, 'r_squared': result.r_squared, 'within_r_squared': result.within_r_squared})
    contrast = result.extra.get('contrast')
    name = 'pols_contrast' if method == 'pols' else 'contrast'
    low, high = contrast.conf_int if contrast is not None else (np.nan, np.nan)
    rows.append({'method': method, 'outcome': outcome, 'term': name, 'label': TERM_LABELS[name],
                 'estimate': contrast.estimate if contrast is not None else np.nan,
                 'se': contrast.se if contrast is not None else np.nan,
                 'p_value': contrast.p_value if contrast is not None else np.nan, 'ci_low': low, 'ci_high': high,
                 'n': result.n, 'r_squared': result.r_squared, 'within_r_squared': result.within_r_squared})
    return rows


def estimate_record(result, method, outcome):
    """
    Structured record of one estimate, for the JSON output.
    """
    return clean({
        'method': method, 'outcome': outcome, 'n': result.n, 'dof': result.dof, 'n_clusters': result.n_clusters,
        'cov_type': result.cov_type, 'r_squared': result.r_squared, 'within_r_squared': result.within_r_squared,
        'flags': list(result.flags), 'absent': list(result.extra.get('absent', [])),
        'terms': [{key: row[key] for key in ('term', 'estimate', 'se', 'p_value', 'ci_low', 'ci_high')}
                  for row in estimate_rows(result, method, outcome)],
        'coefficients': result.records(),
    })


def _cell(value, fmt='{0:.4f}'):
    return '' if value is None or not np.isfinite(value) else fmt.format(value)


def render_estimates(rows):
    """
    One panel per outcome: each term with its standard error in parentheses
    beneath, then N and R-squared.
    """
    frame = pd.DataFrame(rows, columns=list(RECORD_COLUMNS))
    blocks = []
    for panel_index, ((method, outcome), group) in enumerate(frame.groupby(['method', 'outcome'], sort=False)):
        lines = []
        for _, row in group.iterrows():
            lines.append((row['label'], _cell(row['estimate']) + stars(row['p_value'])))
            lines.append(('', _cell(row['se'], '({0:.4f})')))
        first = group.iloc[0]
        lines.append(('N', str(int(first['n']))))
        lines.append(('R2', _cell(first['r_squared'])))
        if first['within_r_squared'] is not None and np.isfinite(first['within_r_squared']):
            lines.append(('Within R2', _cell(first['within_r_squared'])))
        width = max(len(label) for label, _ in lines)
        title = 'Panel {0}: {1} ({2})'.format(chr(ord('A') + panel_index), outcome, method)
        blocks.append('\n'.join([title] + ['{0:<{1}}  {2:>14}'.format(label, width, value) for label, value in lines]))
    return '\n\n'.join(blocks) + '\n'


def render_records(records, title=None, float_format='{0:.6g}'):
    """
    Plain text table of a list of flat dicts.
    """
    frame = pd.DataFrame(list(records))
    text = frame.to_string(index=False, float_format=float_format.format) if not frame.empty else '(no rows)'
    return '{0}\n{1}\n'.format(title, text) if title else text + '\n'


def render_summary(summary):
    """
    Pass/fail table of a replicate summary.
    """
    lines = ['scenario: {0}'.format(summary['scenario'])]
    for check in summary['criteria']:
        lines.append('[{0}] {1}: {2}'.format('PASS' if check['passed'] else 'FAIL', check['name'], check['detail']))
    lines.append('overall: {0}'.format('PASS' if summary['passed'] else 'FAIL'))
    return '\n'.join(lines) + '\n'
