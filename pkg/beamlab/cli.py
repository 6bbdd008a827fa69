"""
Command line of lab.py: one subcommand per experiment.
"""
import logging
import sys

from beamlab import __version__
from beamlab.config import SUBCOMMANDS, load_config, make_config
from beamlab.errors import BeamlabError, UsageError

logger = logging.getLogger(__name__)

FLAGS = ('model', 'a', 'delta', 'eps', 'range', 'h', 'alpha', 'ladder', 'samples', 'potential',
         'seed', 'out', 'workers')


def align_options(options):
    """
    Indents flags and aligns help texts.
    """
    width = max(len(flag) for flag, _ in options)
    return '\n'.join('  {0}{1}  {2}'.format(flag, ' ' * (width - len(flag)), text) for flag, text in options)


def usage(script='lab.py'):
    options = [
        ['<subcommand>', 'One of: {0}.'.format(', '.join(SUBCOMMANDS))],
        ['--config=<FILE>', 'YAML or JSON experiment file; its values override flags.'],
        ['--model=<MODEL>', 'Model tag (torus2, torus3, sphere2, sphere3, cylinder, disc, sphere-patch, halfplane) or custom JSON.'],
        ['--a=<A>', 'Cylinder height.'],
        ['--delta=<D>', 'Bad-set measure budget.'],
        ['--eps=<E>', 'Resolvent exponent slack.'],
        ['--range=<LO:HI>', 'Frequency range.'],
        ['--h=<H>', 'Semiclassical parameter for the eigenvalue count.'],
        ['--alpha=<ALPHA>', 'Hoelder exponent in (0, 1).'],
        ['--ladder=<LADDER>', 'Geometric ladder start:stop:count.'],
        ['--samples=<N>', 'Number of samples.'],
        ['--potential=<FILE>', 'Potential description (JSON).'],
        ['--seed=<SEED>', 'Random seed [default: 0].'],
        ['--out=<DIR>', 'Output directory.'],
        ['--workers=<N>', 'Worker threads.'],
        ['--verbose', 'Debug output.'],
        ['--version', 'Show version and exit.'],
        ['-h --help', 'Show this screen.'],
    ]
    s = []
    s.append('Usage:')
    s.append('  {0} <subcommand> [options]'.format(script))
    s.append('  {0} --config=<FILE> [options]'.format(script))
    s.append('  {0} (-h | --help)'.format(script))
    s.append('  {0} --version'.format(script))
    s.append('\nOptions:')
    s.append(align_options(options))
    return '\n'.join(s) + '\n'


def config_from_arguments(arguments):
    flags = {name: arguments.get('--{0}'.format(name)) for name in FLAGS}
    flags['verbose'] = True if arguments.get('--verbose') else None
    subcommand = arguments.get('<subcommand>')
    if arguments.get('--config'):
        return load_config(arguments['--config'], subcommand, flags)
    if subcommand is None:
        raise UsageError('no subcommand given')
    return make_config(subcommand, flags)


def run(config):
    """
    Run the experiment named by config and write its reports; returns the
    exit status (0 when every check passed, 1 otherwise).
    """
    from beamlab.experiments import EXPERIMENTS
    from beamlab.report import emit

    logging.basicConfig(format='- %(message)s', level=logging.DEBUG if config.verbose else logging.INFO)
    logger.info('running %s on %s', config.subcommand, config.model)
    outcome = EXPERIMENTS[config.subcommand](config)
    passed = emit(config.out, config.subcommand, config, outcome.columns, outcome.rows,
                  outcome.summary, outcome.checks, outcome.plot)
    for c in outcome.checks:
        logger.info('%s: %s', c['name'], 'passed' if c['passed'] else 'FAILED')
    return 0 if passed else 1


def main(argv=None, script='lab.py'):
    from docopt import DocoptExit, docopt

    options = usage(script)
    try:
        arguments = docopt(options, argv=argv, version=__version__)
    except DocoptExit:
        sys.stderr.write('ERROR: bad input to {0}\n'.format(script))
        sys.stderr.write(options)
        return -1
    try:
        return run(config_from_arguments(arguments))
    except BeamlabError as exc:
        sys.stderr.write('ERROR: {0}\n'.format(exc))
        return -1


def test_align_options():
    s = align_options([['--a=<A>', 'one'], ['--workers=<N>', 'two']])
    assert s == '  --a=<A>        one\n  --workers=<N>  two'
