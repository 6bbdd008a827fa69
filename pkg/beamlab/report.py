"""
Report files: CSV tables, JSON summaries and log-log SVG plots.

Nothing time- or host-dependent goes into a report, so the same
configuration and seed give byte-identical files.
"""
import csv
import json
import logging
import math
import os

import numpy as np

logger = logging.getLogger(__name__)


def versions():
    import scipy

    from beamlab import __version__

    return {'beamlab': __version__, 'numpy': np.__version__, 'scipy': scipy.__version__}


def _plain(value):
    """
    JSON-friendly copy: numpy scalars and arrays to Python, non-finite
    floats to strings.
    """
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, complex):
        return {'re': _plain(value.real), 'im': _plain(value.imag)}
    return value


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return '{0:.12g}'.format(float(value))
    if isinstance(value, (list, tuple)):
        return ' '.join(_cell(v) for v in value)
    return str(value)


def write_csv(file_name, columns, rows):
    """
    rows are dicts keyed by column name.
    """
    with open(file_name, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, '')) for c in columns])


def write_json(file_name, payload):
    with open(file_name, 'w') as f:
        json.dump(_plain(payload), f, sort_keys=True, indent=2)
        f.write('\n')


def check(name, passed, value=None, tolerance=None):
    return {'name': name, 'passed': bool(passed), 'value': value, 'tolerance': tolerance}


def _ticks(lo, hi):
    first, last = int(math.floor(math.log10(lo))), int(math.ceil(math.log10(hi)))
    return [10.0 ** k for k in range(first, last + 1)]


def loglog_svg(series, title, xlabel, ylabel, annotation=None, width=640, height=480):
    """
    SVG text of a log-log plot; series is a list of (label, xs, ys).
    """
    colors = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd']
    margin = 70
    xs = [x for _, sx, sy in series for x, y in zip(sx, sy) if x > 0 and y > 0]
    ys = [y for _, sx, sy in series for x, y in zip(sx, sy) if x > 0 and y > 0]
    s = []
    s.append('<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}">'.format(width, height))
    s.append('<rect width="100%" height="100%" fill="white"/>')
    s.append('<text x="{0}" y="24" text-anchor="middle" font-size="16">{1}</text>'.format(width // 2, title))
    if not xs:
        s.append('<text x="{0}" y="{1}" text-anchor="middle">no positive data</text>'.format(width // 2, height // 2))
        s.append('</svg>')
        return '\n'.join(s) + '\n'
    x_lo, x_hi = _ticks(min(xs), max(xs))[0], _ticks(min(xs), max(xs))[-1]
    y_lo, y_hi = _ticks(min(ys), max(ys))[0], _ticks(min(ys), max(ys))[-1]
    if x_hi == x_lo:
        x_hi = 10.0 * x_lo
    if y_hi == y_lo:
        y_hi = 10.0 * y_lo

    def px(x):
        return margin + (width - 2 * margin) * math.log10(x / x_lo) / math.log10(x_hi / x_lo)

    def py(y):
        return height - margin - (height - 2 * margin) * math.log10(y / y_lo) / math.log10(y_hi / y_lo)

    s.append('<g stroke="black" fill="none">')
    s.append('<rect x="{0}" y="{0}" width="{1}" height="{2}"/>'.format(margin, width - 2 * margin, height - 2 * margin))
    s.append('</g>')
    for t in _ticks(x_lo, x_hi):
        s.append('<line x1="{0:.2f}" y1="{1}" x2="{0:.2f}" y2="{2}" stroke="#dddddd"/>'.format(px(t), margin, height - margin))
        s.append('<text x="{0:.2f}" y="{1}" text-anchor="middle" font-size="12">{2:g}</text>'.format(px(t), height - margin + 18, t))
    for t in _ticks(y_lo, y_hi):
        s.append('<line x1="{0}" y1="{1:.2f}" x2="{2}" y2="{1:.2f}" stroke="#dddddd"/>'.format(margin, py(t), width - margin))
        s.append('<text x="{0}" y="{1:.2f}" text-anchor="end" font-size="12">{2:g}</text>'.format(margin - 6, py(t) + 4, t))
    s.append('<text x="{0}" y="{1}" text-anchor="middle" font-size="14">{2}</text>'.format(width // 2, height - 20, xlabel))
    s.append('<text x="20" y="{0}" text-anchor="middle" font-size="14" transform="rotate(-90 20 {0})">{1}</text>'.format(height // 2, ylabel))
    for i, (label, sx, sy) in enumerate(series):
        color = colors[i % len(colors)]
        pts = [(px(x), py(y)) for x, y in zip(sx, sy) if x > 0 and y > 0]
        if not pts:
            continue
        s.append('<polyline fill="none" stroke="{0}" stroke-width="2" points="{1}"/>'.format(
            color, ' '.join('{0:.2f},{1:.2f}'.format(a, b) for a, b in pts)))
        for a, b in pts:
            s.append('<circle cx="{0:.2f}" cy="{1:.2f}" r="4" fill="{2}"/>'.format(a, b, color))
        s.append('<text x="{0}" y="{1}" font-size="12" fill="{2}">{3}</text>'.format(width - margin - 150, margin + 18 * (i + 1), color, label))
    if annotation:
        s.append('<text x="{0}" y="{1}" font-size="12">{2}</text>'.format(margin + 10, height - margin - 10, annotation))
    s.append('</svg>')
    return '\n'.join(s) + '\n'


def write_svg(file_name, text):
    with open(file_name, 'w') as f:
        f.write(text)


def emit(out_dir, name, config, columns, rows, summary, checks, plot=None):
    """
    Write <name>.csv, <name>.json and (for ladder runs) <name>.svg into
    out_dir; returns True when every check passed.
    """
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, name)
    write_csv(base + '.csv', columns, rows)
    passed = all(c['passed'] for c in checks)
    write_json(base + '.json', {'config': config.echo, 'seed': config.seed, 'versions': versions(),
                                'summary': summary, 'checks': checks, 'passed': passed})
    if plot is not None:
        write_svg(base + '.svg', plot)
    logger.info('wrote %s.csv, %s.json%s', base, base, ', {0}.svg'.format(base) if plot is not None else '')
    return passed


def test_plain_handles_numpy_and_infinity():
    assert _plain({'a': np.float64(1.5), 'b': np.arange(2), 'c': math.inf}) == {'a': 1.5, 'b': [0, 1], 'c': 'inf'}


def test_loglog_svg_has_markers():
    text = loglog_svg([('remainder', [1.0, 10.0, 100.0], [1.0, 0.1, 0.01])], 'decay', 'lam', 'r')
    assert text.startswith('<svg')
    assert text.count('<circle') == 3
