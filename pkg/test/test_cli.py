import os
import shlex
import subprocess
import sys

from beamlab.cli import main, usage

HERE = os.path.abspath(os.path.dirname(__file__))
LAB = os.path.join(HERE, '..', 'lab.py')


def exe(command):
    """
    Executes command and returns stdout and stderr captured from the console
    as strings.
    """
    env = dict(os.environ)
    env.pop('BEAMLAB_OUTPUT_DIR', None)
    stdout, stderr = subprocess.Popen(
        shlex.split(command),
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        env=env,
        universal_newlines=True).communicate()

    return stdout, stderr


def lab(arguments):
    return exe('{0} {1} {2}'.format(shlex.quote(sys.executable), shlex.quote(LAB), arguments))


def test_usage_lists_subcommands():
    text = usage('lab.py')
    assert text.startswith('Usage:\n  lab.py <subcommand> [options]')
    assert 'stationary-phase' in text
    assert '[default: 0]' in text


def test_weyl_run(tmp_path):
    stdout, stderr = lab('weyl --model=torus2 --h=0.125 --out={0}'.format(shlex.quote(str(tmp_path))))
    assert 'ERROR' not in stderr
    assert (tmp_path / 'weyl.csv').exists()
    assert (tmp_path / 'weyl.json').exists()


def test_config_without_subcommand(tmp_path):
    f = tmp_path / 'empty.yml'
    f.write_text('')
    stdout, stderr = lab('--config={0}'.format(shlex.quote(str(f))))
    assert stderr.startswith('ERROR:')


def test_bad_flag(capsys):
    assert main(['weyl', '--bogus'], script='lab.py') == -1
    assert capsys.readouterr().err.startswith('ERROR: bad input to lab.py')


def test_unknown_model(capsys):
    assert main(['weyl', '--model=klein-bottle']) == -1
    assert 'unknown tag' in capsys.readouterr().err


def test_weyl_passes_in_process(tmp_path, monkeypatch):
    monkeypatch.delenv('BEAMLAB_OUTPUT_DIR', raising=False)
    assert main(['weyl', '--out={0}'.format(tmp_path)]) == 0
