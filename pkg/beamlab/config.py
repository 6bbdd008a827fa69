"""
Experiment configuration: YAML/JSON files with %(name) interpolation,
command-line values and subcommand defaults folded into one frozen
ExperimentConfig.
"""
import logging
import math
import os
import re
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field

from beamlab.errors import UsageError

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('resolvent', 'weyl', 'beam', 'stationary-phase', 'recover', 'h1-check', 'conjugate', 'boundary')
MODEL_TAGS = ('torus2', 'torus3', 'sphere2', 'sphere3', 'cylinder', 'disc', 'sphere-patch', 'halfplane')
OUTPUT_ENV = 'BEAMLAB_OUTPUT_DIR'

DEFAULTS = {
    'resolvent': {'model': 'torus2', 'delta': 0.5, 'eps': 0.5, 'range': '1:50', 'samples': 200},
    'weyl': {'model': 'torus2', 'h': 0.125},
    'beam': {'model': 'cylinder', 'a': 1.0, 'ladder': '40:320:4'},
    'stationary-phase': {'model': 'torus2', 'alpha': 0.5, 'ladder': '100:10000:4'},
    'recover': {'model': 'cylinder', 'a': 1.0, 'ladder': '40:320:4', 'alpha': 0.9},
    'h1-check': {'model': 'cylinder', 'a': 1.0, 'samples': 100},
    'conjugate': {'model': 'sphere2', 'samples': 64},
    'boundary': {'model': 'halfplane', 'alpha': 1.0 / 3.0, 'ladder': '10:1000:5'},
}

VARIABLE = re.compile(r"%\(([A-Za-z0-9_]*)\)")


def replace(s, d):
    """
    Substitute %(name) references in s from d. A string that is exactly one
    reference takes the referenced value with its type.
    """
    if not isinstance(s, str):
        return s
    names = VARIABLE.findall(s)
    for name in names:
        if name not in d:
            raise UsageError('unknown reference %({0}) in configuration'.format(name))
    if len(names) == 1 and s == '%({0})'.format(names[0]):
        return d[names[0]]
    for name in names:
        s = s.replace('%({0})'.format(name), str(d[name]))
    return s


def interpolate(d, d_map):
    for k, v in d.items():
        if isinstance(v, Mapping):
            d[k] = interpolate(dict(v), d_map)
        elif isinstance(v, list):
            d[k] = [interpolate(dict(x), d_map) if isinstance(x, Mapping) else replace(x, d_map) for x in v]
        else:
            d[k] = replace(v, d_map)
    return d


def parse_yaml(stream, overrides=None):
    """
    Mapping from a YAML (or JSON) document with references resolved;
    overrides replace top-level keys before interpolation.
    """
    import yaml

    try:
        config = yaml.load(stream, yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise UsageError('cannot parse configuration: {0}'.format(exc))
    if config is None:
        config = {}
    if not isinstance(config, Mapping):
        raise UsageError('configuration must be a mapping')
    config = dict(config)
    for k, v in (overrides or {}).items():
        config[k] = v
    return interpolate(config, config)


def parse_range(text, what='range'):
    """
    'lo:hi' as a closed interval (lo, hi) with lo < hi.
    """
    parts = str(text).split(':')
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        raise UsageError('{0}: expected lo:hi, got {1!r}'.format(what, text))
    if not lo < hi:
        raise UsageError('{0}: lo must be below hi in {1!r}'.format(what, text))
    return lo, hi


def parse_ladder(text, what='ladder'):
    """
    'start:stop:count' geometric, or a list of values; strictly increasing.
    """
    import numpy as np

    if isinstance(text, (list, tuple)):
        values = [float(v) for v in text]
    else:
        parts = str(text).split(':')
        try:
            if len(parts) != 3:
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError('{0}: expected start:stop:count, got {1!r}'.format(what, text))
        if not (start > 0 and stop > 0 and count >= 2):
            raise UsageError('{0}: start and stop must be positive and count at least 2'.format(what))
        values = [float(v) for v in np.geomspace(start, stop, count)]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError('{0}: values must be strictly increasing'.format(what))
    return tuple(values)


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    model: str
    a: float = 1.0
    delta: float = None
    eps: float = None
    lam_range: tuple = None
    h: float = None
    alpha: float = None
    ladder: tuple = None
    samples: int = None
    potential: object = None
    seed: int = 0
    out: str = '.'
    workers: int = 1
    verbose: bool = False
    echo: dict = field(default_factory=dict, compare=False)

    def describe(self):
        out = asdict(self)
        out.pop('echo')
        return out


def _positive(name, value):
    if value is not None and not value > 0:
        raise UsageError('{0} must be positive, got {1}'.format(name, value))


def _number(name, value, kind=float):
    if value is None:
        return None
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise UsageError('{0}: expected a number, got {1!r}'.format(name, value))


def make_config(subcommand, flags=None, file_values=None, overrides=None):
    """
    Fold defaults < flags < configuration file < overrides into a
    validated ExperimentConfig.
    """
    if subcommand not in SUBCOMMANDS:
        raise UsageError('unknown subcommand {0!r}'.format(subcommand))
    merged = dict(DEFAULTS[subcommand])
    for layer in (flags, file_values, overrides):
        for k, v in (layer or {}).items():
            if v is not None:
                merged[k.replace('-', '_')] = v
    merged.pop('subcommand', None)

    model = str(merged.get('model'))
    if model not in MODEL_TAGS and not model.endswith('.json'):
        raise UsageError('model: unknown tag {0!r}'.format(model))
    values = {
        'subcommand': subcommand,
        'model': model,
        'a': _number('a', merged.get('a', 1.0)),
        'delta': _number('delta', merged.get('delta')),
        'eps': _number('eps', merged.get('eps')),
        'h': _number('h', merged.get('h')),
        'alpha': _number('alpha', merged.get('alpha')),
        'samples': _number('samples', merged.get('samples'), int),
        'seed': _number('seed', merged.get('seed', 0), int),
        'workers': _number('workers', merged.get('workers', 1), int),
        'potential': merged.get('potential'),
        'out': os.environ.get(OUTPUT_ENV, merged.get('out', '.')),
        'verbose': bool(merged.get('verbose', False)),
    }
    for name in ('a', 'delta', 'eps', 'h', 'alpha', 'samples', 'workers'):
        _positive(name, values[name])
    if values['alpha'] is not None and not values['alpha'] < 1.0:
        raise UsageError('alpha must lie in (0, 1), got {0}'.format(values['alpha']))
    if merged.get('range') is not None:
        values['lam_range'] = parse_range(merged['range'])
        if values['lam_range'][0] < 1.0:
            raise UsageError('range: frequencies start at 1')
    if merged.get('ladder') is not None:
        values['ladder'] = parse_ladder(merged['ladder'])
        if subcommand in ('stationary-phase', 'recover') and len(values['ladder']) < 4:
            raise UsageError('ladder: {0} needs at least 4 rungs'.format(subcommand))
    echo = {'subcommand': subcommand}
    echo.update({k: v for k, v in merged.items() if not isinstance(v, float) or math.isfinite(v)})
    return ExperimentConfig(echo=echo, **values)


def load_config(file_name, subcommand=None, flags=None, overrides=None):
    """
    ExperimentConfig from a configuration file; the file may name its
    subcommand.
    """
    if not os.path.isfile(file_name):
        raise UsageError('configuration file {0} not found'.format(file_name))
    with open(file_name, 'r') as f:
        values = parse_yaml(f)
    subcommand = values.get('subcommand', subcommand)
    if subcommand is None:
        raise UsageError('configuration names no subcommand')
    return make_config(subcommand, flags, values, overrides)


def test_replace():
    assert replace('hey %(foo) ho %(bar)', {'foo': 'hey', 'bar': 'ho'}) == 'hey hey ho ho'
    assert replace('%(lam)', {'lam': 40.0}) == 40.0


def test_interpolate_nested():
    d = {'center': 0.5, 'potential': {'kind': 'bump', 'center': ['%(center)', 0.5]}}
    assert interpolate(d, d)['potential']['center'] == [0.5, 0.5]


def test_parse_ladder():
    import numpy as np

    assert np.allclose(parse_ladder('40:320:4'), [40.0, 80.0, 160.0, 320.0])
    assert parse_ladder([1, 2, 3]) == (1.0, 2.0, 3.0)
