"""
Panel CSV reading and writing.

Files are UTF-8 with a header row and '.' decimals. Floats are written with 17
significant digits, so reading a file this module wrote and writing it again
reproduces the same bytes.
"""
import hashlib
import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from simulation.panel import CATEGORICAL_COLUMNS, LEVEL_COLUMNS, PANEL_COLUMNS

from .exceptions import IoFailure, SchemaViolation

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
SHARE_TOLERANCE = 1e-9
OUTCOME_COLUMNS = ('ln_price', 'ln_subsidy', 'ln_netcost')
SHARE_COLUMNS = ('s2', 's2c')
FLOAT_COLUMNS = OUTCOME_COLUMNS + SHARE_COLUMNS + ('ln_speed', 'speed_mbps') + LEVEL_COLUMNS
INTEGER_COLUMNS = ('period', 'n_requests')
STRING_COLUMNS = ('hcp_id',) + CATEGORICAL_COLUMNS


def file_digest(path):
    """
    SHA-256 of the file contents, hex encoded.
    """
    sha = hashlib.sha256()
    try:
        with open(path, 'rb') as handle:
            for block in iter(lambda: handle.read(1 << 16), b''):
                sha.update(block)
    except OSError as exc:
        raise IoFailure('cannot read {0}: {1}'.format(path, exc)) from exc
    return sha.hexdigest()


def atomic_write(path, text):
    """
    Write ``text`` to a temporary file next to ``path`` and rename it into place.
    """
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        handle, temporary = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
        try:
            with os.fdopen(handle, 'w', encoding='utf-8', newline='') as out:
                out.write(text)
            os.replace(temporary, path)
        except BaseException:
            if os.path.exists(temporary):
                os.unlink(temporary)
            raise
    except OSError as exc:
        raise IoFailure('cannot write {0}: {1}'.format(path, exc)) from exc
    return path


def frame_to_text(frame):
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def write_frame(frame, path):
    """
    Write any DataFrame as delimited text with 17-digit floats.
    """
    return atomic_write(path, frame_to_text(frame))


def write_json(payload, path):
    return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + '\n')


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'value'):
        return value.value
    raise TypeError('{0!r} is not JSON serializable'.format(value))


def canonical_panel(panel):
    """
    Panel columns in schema order, optional level columns last.
    """
    unknown = [name for name in panel.columns if name not in PANEL_COLUMNS + LEVEL_COLUMNS]
    if unknown:
        raise SchemaViolation('unknown column', column=unknown[0])
    missing = [name for name in PANEL_COLUMNS if name not in panel.columns]
    if missing:
        raise SchemaViolation('required column is missing', column=missing[0])
    ordered = list(PANEL_COLUMNS) + [name for name in LEVEL_COLUMNS if name in panel.columns]
    out = panel[ordered].copy()
    for name in INTEGER_COLUMNS:
        out[name] = out[name].astype(np.int64)
    for name in STRING_COLUMNS:
        out[name] = out[name].astype(str)
    return out.sort_values(['hcp_id', 'period'], kind='mergesort').reset_index(drop=True)


def write_panel(panel, path):
    """
    Write an HCP panel in the schema layout, sorted by (hcp_id, period).
    :param panel: DataFrame with PANEL_COLUMNS and optionally LEVEL_COLUMNS
    :param path: destination file
    :return: SHA-256 of the written file
    """
    atomic_write(path, frame_to_text(canonical_panel(panel)))
    return file_digest(path)


def _first_bad(mask):
    return int(np.flatnonzero(mask)[0]) + 1


def _numeric(raw, name, required):
    text = raw[name].str.strip()
    blank = text.eq('') | text.str.lower().eq('nan')
    if required and blank.any():
        raise SchemaViolation('missing value', row=_first_bad(blank.to_numpy()), column=name)
    values = pd.to_numeric(text.where(~blank), errors='coerce')
    bad = (values.isna() & ~blank) | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        row = _first_bad(bad.to_numpy())
        raise SchemaViolation("'{0}' is not a finite number".format(raw[name].iloc[row - 1]), row=row, column=name)
    return values.astype(float)


def validate_panel(raw):
    """
    Validate and type a panel read as strings.
    :param raw: DataFrame of str with a header
    :return: typed DataFrame in canonical column order
    """
    for name in raw.columns:
        if name not in PANEL_COLUMNS + LEVEL_COLUMNS:
            raise SchemaViolation('unknown column', column=name)
    for name in PANEL_COLUMNS:
        if name not in raw.columns:
            raise SchemaViolation('required column is missing', column=name)
    if raw.empty:
        raise SchemaViolation('panel has no rows')

    panel = pd.DataFrame(index=raw.index)
    for name in STRING_COLUMNS:
        text = raw[name].str.strip()
        if text.eq('').any():
            raise SchemaViolation('missing value', row=_first_bad(text.eq('').to_numpy()), column=name)
        panel[name] = text
    for name in FLOAT_COLUMNS:
        if name in raw.columns:
            panel[name] = _numeric(raw, name, required=name in PANEL_COLUMNS)
    for name in INTEGER_COLUMNS:
        values = _numeric(raw, name, required=True)
        fractional = values != np.round(values)
        if fractional.any():
            raise SchemaViolation('expected an integer', row=_first_bad(fractional.to_numpy()), column=name)
        panel[name] = values.astype(np.int64)

    checks = (
        ('period', ~panel['period'].isin((0, 1)), 'period must be 0 or 1'),
        ('n_requests', panel['n_requests'] <= 0, 'n_requests must be a positive integer'),
        ('s2', (panel['s2'] < 0) | (panel['s2'] > 1), 'share must lie in [0, 1]'),
        ('s2c', (panel['s2c'] < 0) | (panel['s2c'] > 1), 'share must lie in [0, 1]'),
        ('s2c', panel['s2'] + panel['s2c'] > 1 + SHARE_TOLERANCE, 's2 + s2c exceeds 1'),
        ('speed_mbps', panel['speed_mbps'] <= 0, 'speed must be positive'),
    )
    for name, mask, message in checks:
        if mask.any():
            raise SchemaViolation(message, row=_first_bad(mask.to_numpy()), column=name)
    duplicated = panel.duplicated(['hcp_id', 'period'])
    if duplicated.any():
        raise SchemaViolation('duplicate (hcp_id, period)', row=_first_bad(duplicated.to_numpy()), column='hcp_id')

    ordered = list(PANEL_COLUMNS) + [name for name in LEVEL_COLUMNS if name in panel.columns]
    return panel[ordered]


def read_panel(path):
    """
    Read and validate a panel CSV.
    :param path: CSV file
    :return: DataFrame with typed columns
    """
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding='utf-8')
    except FileNotFoundError as exc:
        raise IoFailure('panel file {0} does not exist'.format(path)) from exc
    except UnicodeDecodeError as exc:
        raise SchemaViolation('file is not UTF-8: {0}'.format(exc)) from exc
    except pd.errors.EmptyDataError as exc:
        raise SchemaViolation('file is empty; a header row is required') from exc
    except pd.errors.ParserError as exc:
        raise SchemaViolation('malformed CSV: {0}'.format(exc)) from exc
    except OSError as exc:
        raise IoFailure('cannot read {0}: {1}'.format(path, exc)) from exc
    panel = validate_panel(raw)
    logger.info('read %d panel rows for %d HCPs from %s', len(panel), panel['hcp_id'].nunique(), path)
    return panel


def write_plot_data(rows, path, columns=('x', 'fit', 'lo', 'hi')):
    """
    Plot data as delimited (x, fit, lo, hi) text.
    """
    return write_frame(pd.DataFrame(list(rows), columns=list(columns)), path)
