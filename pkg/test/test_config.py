import pytest

from beamlab.config import OUTPUT_ENV, load_config, make_config, parse_range, parse_yaml
from beamlab.errors import UsageError


def test_subcommand_defaults():
    config = make_config('weyl')
    assert config.model == 'torus2'
    assert config.h == 0.125
    assert config.seed == 0
    assert config.workers == 1


def test_later_layers_win():
    config = make_config('resolvent', flags={'delta': '0.25', 'samples': None},
                         file_values={'delta': 0.1}, overrides={'seed': 7})
    assert config.delta == 0.1
    assert config.samples == 200
    assert config.seed == 7
    assert config.lam_range == (1.0, 50.0)


@pytest.mark.parametrize('subcommand,flags', [
    ('nonsense', {}),
    ('weyl', {'model': 'klein-bottle'}),
    ('stationary-phase', {'alpha': 1.5}),
    ('resolvent', {'delta': -1}),
    ('resolvent', {'range': '5:1'}),
    ('resolvent', {'range': '0.5:10'}),
    ('recover', {'ladder': '40:80:2'}),
    ('resolvent', {'samples': 'many'}),
])
def test_invalid_values(subcommand, flags):
    with pytest.raises(UsageError):
        make_config(subcommand, flags)


def test_load_config_with_references(tmp_path):
    f = tmp_path / 'recover.yml'
    f.write_text('subcommand: recover\n'
                 'width: 0.3\n'
                 'potential:\n'
                 '  kind: bump\n'
                 '  center: [3.14, 0.5]\n'
                 '  width: "%(width)"\n')
    config = load_config(str(f))
    assert config.subcommand == 'recover'
    assert config.potential['width'] == 0.3
    assert config.ladder == (40.0, 80.0, 160.0, 320.0)


def test_load_config_needs_subcommand(tmp_path):
    f = tmp_path / 'empty.yml'
    f.write_text('')
    with pytest.raises(UsageError):
        load_config(str(f))
    assert load_config(str(f), 'weyl').subcommand == 'weyl'


def test_missing_file_and_bad_documents(tmp_path):
    with pytest.raises(UsageError):
        load_config(str(tmp_path / 'missing.yml'))
    with pytest.raises(UsageError):
        parse_yaml('- 1\n- 2\n')
    with pytest.raises(UsageError):
        parse_yaml('a: "%(b)"\n')


def test_output_directory_from_environment(monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, '/tmp/beamlab-out')
    assert make_config('weyl', {'out': 'elsewhere'}).out == '/tmp/beamlab-out'


def test_parse_range():
    assert parse_range('1:50') == (1.0, 50.0)
    with pytest.raises(UsageError):
        parse_range('1:2:3')
