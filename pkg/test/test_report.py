import json

from beamlab.config import make_config
from beamlab.report import check, emit, write_csv


def test_write_csv_cells(tmp_path):
    f = tmp_path / 'table.csv'
    write_csv(str(f), ['lam', 'grid', 'note'], [{'lam': 0.1, 'grid': [3, 5]}])
    assert f.read_text() == 'lam,grid,note\n0.1,3 5,\n'


def test_emit_writes_reports(tmp_path, monkeypatch):
    monkeypatch.delenv('BEAMLAB_OUTPUT_DIR', raising=False)
    config = make_config('weyl', {'out': str(tmp_path)})
    checks = [check('band', True, 1.2, 4.0), check('scaling', False)]
    passed = emit(str(tmp_path), 'weyl', config, ['h', 'count'], [{'h': 0.5, 'count': 13}],
                  {'rows': 1}, checks, plot='<svg/>')
    assert not passed
    summary = json.loads((tmp_path / 'weyl.json').read_text())
    assert summary['passed'] is False
    assert summary['config']['subcommand'] == 'weyl'
    assert [c['name'] for c in summary['checks']] == ['band', 'scaling']
    assert (tmp_path / 'weyl.svg').read_text() == '<svg/>'


def test_emit_is_reproducible(tmp_path):
    config = make_config('weyl')
    texts = []
    for name in ('first', 'second'):
        out = tmp_path / name
        emit(str(out), 'weyl', config, ['h'], [{'h': 0.25}], {'value': 1.0 / 3.0}, [check('ok', True)])
        texts.append(((out / 'weyl.csv').read_bytes(), (out / 'weyl.json').read_bytes()))
    assert texts[0] == texts[1]
    assert not (tmp_path / 'first' / 'weyl.svg').exists()
