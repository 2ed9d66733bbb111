"""
Tests for the command-line surface and the key = value config reader.
"""
import json

import pytest

from cli import run
from services.errors import ConfigError
from utils.config_file import load_config, parse_config_text
from utils.output import read_coefficients

COSINE_CONFIG = 'f = "cos(s)"\nmu = 1\nN = 24\n'


def _write(path, text):
    path.write_text(text, encoding='utf-8')
    return path


def test_parse_config_text():
    data = parse_config_text(
        '# problem\n'
        'f = "tanh(s) - 0.3"   # shifted\n'
        'k = 0\n'
        'tol = 1e-10\n'
        'override_solvability = false\n'
        'x0 = [0.1, 0, -2.5e-3]\n'
        '\n'
        "label = 'a # b'\n")
    assert data == {'f': 'tanh(s) - 0.3', 'k': 0, 'tol': 1e-10, 'override_solvability': False,
                    'x0': [0.1, 0, -2.5e-3], 'label': 'a # b'}
    assert isinstance(data['k'], int)


@pytest.mark.parametrize('text,key', [
    ('mu = 1\nmu = 2\n', 'mu'),
    ('f = tanh(s)\n', 'f'),
    ('tol = nan\n', 'tol'),
    ('x0 = [1, 2\n', 'x0'),
    ('N =\n', 'N'),
    ('2bad = 1\n', '2bad'),
])
def test_parse_config_text_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as excinfo:
        parse_config_text(text)
    assert excinfo.value.key == key


def test_parse_config_text_requires_assignment():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text('just words\n')


def test_check_resonant_mu(tmp_path):
    assert run(['check', '--mu', '6', '--output-dir', str(tmp_path)]) == 0
    report = json.loads((tmp_path / 'check.json').read_text())
    assert report['resonant'] is True
    assert report['k'] == 2
    assert report['norm_bound'] is None


def test_check_nonresonant_mu(tmp_path):
    assert run(['check', '--mu', '3.5', '--output-dir', str(tmp_path)]) == 0
    report = json.loads((tmp_path / 'check.json').read_text())
    assert report['resonant'] is False
    assert report['norm_bound'] > 0


def test_check_with_nonlinearity(tmp_path):
    assert run(['check', '--k', '1', '--f', 'atan(s)', '--output-dir', str(tmp_path)]) == 0
    report = json.loads((tmp_path / 'check.json').read_text())
    assert report['verdict'] == 'k_ge1_distinct_limits'
    assert report['box']['alpha0'] > report['box']['r']
    assert report['J1'] > 0 > report['J2']
    assert report['sublinearity'] == 'consistent with sublinear'


def test_solve_writes_outputs(tmp_path):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG)
    out = tmp_path / 'out'
    assert run(['solve', '--config', str(config), '--output-dir', str(out)]) == 0
    solution = json.loads((out / 'solution.json').read_text())
    assert solution['converged'] is True
    assert solution['N'] == 24
    assert solution['f'] == 'cos(s)'
    coeffs = read_coefficients(out / 'coefficients.csv')
    assert len(coeffs) == 25
    assert coeffs[0] == pytest.approx(0.7390851332151607, abs=1e-10)
    lines = (out / 'solution.csv').read_text().splitlines()
    assert lines[0] == 't,x(t)'
    assert len(lines) == 402
    record = json.loads((out / 'run.json').read_text())
    assert record['subcommand'] == 'solve'
    assert record['exit_code'] == 0
    assert record['config']['quad_order'] == 64


def test_solve_is_deterministic(tmp_path):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG)
    assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'a')]) == 0
    assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'b')]) == 0
    for name in ('solution.json', 'solution.csv', 'coefficients.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    assert b'\r\n' not in (tmp_path / 'a' / 'solution.csv').read_bytes()


def test_replay_reproduces_outputs(tmp_path):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG)
    assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'a')]) == 0
    assert run(['replay', '--run', str(tmp_path / 'a' / 'run.json'), '--output-dir', str(tmp_path / 'b')]) == 0
    for name in ('solution.json', 'coefficients.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    assert load_config(tmp_path / 'a' / 'run.json')['f'] == 'cos(s)'


def test_solve_refusal_exits_2(tmp_path):
    config = _write(tmp_path / 'problem.txt', 'f = "1/(1 + s^2) + 1"\nk = 0\nN = 8\n')
    out = tmp_path / 'out'
    assert run(['solve', '--config', str(config), '--output-dir', str(out)]) == 2
    refusal = json.loads((out / 'solution.json').read_text())
    assert 'refused' in refusal['error']
    assert refusal['verdict']['verdict'] == 'not_established'


def test_solve_nonconvergence_exits_2(tmp_path):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG + 'mode = "picard"\nmax_iters = 1\n')
    assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'out')]) == 2
    assert json.loads((tmp_path / 'out' / 'run.json').read_text())['exit_code'] == 2


def test_unknown_key_exits_1(tmp_path, caplog):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG + 'dampng = 0.3\n')
    with caplog.at_level('ERROR'):
        assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'out')]) == 1
    assert "dampng" in caplog.text
    assert not (tmp_path / 'out').exists()


def test_malformed_value_exits_1(tmp_path, caplog):
    config = _write(tmp_path / 'problem.txt', 'f = "cos(s)"\nmu = 1\nN = "many"\n')
    with caplog.at_level('ERROR'):
        assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'out')]) == 1
    assert "'N'" in caplog.text


def test_syntax_error_exits_1(tmp_path, caplog):
    config = _write(tmp_path / 'problem.txt', 'f = "cos(s"\nmu = 1\n')
    with caplog.at_level('ERROR'):
        assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'out')]) == 1
    assert "offset" in caplog.text


def test_usage_errors(tmp_path):
    assert run([]) == 1
    assert run(['frobnicate']) == 1
    assert run(['basis', '--poly', '2', '--rule', '3', '--output-dir', str(tmp_path)]) == 1
    assert run(['--help']) == 0


def test_basis_poly(tmp_path):
    assert run(['basis', '--poly', '3', '--samples', '5', '--output-dir', str(tmp_path)]) == 0
    lines = (tmp_path / 'basis_poly.csv').read_text().splitlines()
    assert lines == ['t,P_3(t)', '-1,-1', '-0.5,0.4375', '0,0', '0.5,-0.4375', '1,1']


def test_basis_rule(tmp_path):
    assert run(['basis', '--rule', '2', '--output-dir', str(tmp_path)]) == 0
    lines = (tmp_path / 'basis_rule.csv').read_text().splitlines()
    assert lines[0] == 'node,weight'
    node, weight = (float(v) for v in lines[1].split(','))
    assert node == pytest.approx(-3 ** -0.5, abs=1e-15)
    assert weight == pytest.approx(1.0, abs=1e-15)


def test_verify_round_trip(tmp_path):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG)
    assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'a')]) == 0
    assert run(['verify', '--solution', str(tmp_path / 'a' / 'coefficients.csv'), '--config', str(config),
                '--output-dir', str(tmp_path / 'v')]) == 0
    report = json.loads((tmp_path / 'v' / 'verify.json').read_text())
    assert report['verdict'] == 'pass'
    assert report['refined_N'] == 48
    assert report['well_resolved'] is True


def test_verify_rejects_wrong_truncation(tmp_path):
    config = _write(tmp_path / 'problem.txt', COSINE_CONFIG)
    assert run(['solve', '--config', str(config), '--output-dir', str(tmp_path / 'a')]) == 0
    other = _write(tmp_path / 'other.txt', 'f = "cos(s)"\nmu = 1\nN = 30\n')
    assert run(['verify', '--solution', str(tmp_path / 'a' / 'coefficients.csv'), '--config', str(other),
                '--output-dir', str(tmp_path / 'v')]) == 1


def test_branch_writes_outputs(tmp_path):
    config = _write(tmp_path / 'branch.txt',
                    'f = "s^3 - s"\nk = 1\nN = 24\nalpha_interval = [0.5, 5]\neps_points = 4\n')
    out = tmp_path / 'out'
    assert run(['branch', '--config', str(config), '--output-dir', str(out)]) == 0
    report = json.loads((out / 'branch.json').read_text())
    assert len(report['roots']) == 1
    assert report['roots'][0]['alpha0'] == pytest.approx((5 / 3) ** 0.5, abs=1e-10)
    assert len(report['branches'][0]['points']) == 5
    assert (out / 'branch.csv').exists()
    assert (out / 'branch_eps_0.0.csv').exists()
    assert (out / 'branch_eps_0.1.csv').exists()


def _data_files(directory):
    return sorted(p.name for p in directory.iterdir() if p.name != 'run.json')


def test_check_is_deterministic(tmp_path):
    for name in ('a', 'b'):
        assert run(['check', '--k', '1', '--f', 'atan(s)', '--output-dir', str(tmp_path / name)]) == 0
    assert (tmp_path / 'a' / 'check.json').read_bytes() == (tmp_path / 'b' / 'check.json').read_bytes()


def test_branch_is_deterministic(tmp_path):
    config = _write(tmp_path / 'branch.txt',
                    'f = "s^3 - s"\nk = 1\nN = 24\nalpha_interval = [-5, 5]\neps_points = 4\n')
    for name in ('a', 'b'):
        assert run(['branch', '--config', str(config), '--output-dir', str(tmp_path / name)]) == 0
    names = _data_files(tmp_path / 'a')
    assert names == _data_files(tmp_path / 'b')
    assert 'branch.json' in names and 'branch.csv' in names
    assert sorted((tmp_path / 'a').glob('branch_eps_*.csv'))
    for name in names:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_solution_json_coefficients_match_csv_exactly(tmp_path):
    config = _write(tmp_path / 'problem.txt', 'f = "tanh(s) - 0.3"\nk = 0\nN = 16\n')
    out = tmp_path / 'out'
    assert run(['solve', '--config', str(config), '--output-dir', str(out)]) == 0
    from_json = json.loads((out / 'solution.json').read_text())['coefficients']
    from_csv = read_coefficients(out / 'coefficients.csv')
    assert list(from_csv) == from_json


def test_replay_rejects_non_record(tmp_path):
    bogus = _write(tmp_path / 'run.json', '{"subcommand": "launch", "config": {}}')
    assert run(['replay', '--run', str(bogus), '--output-dir', str(tmp_path / 'out')]) == 1
    missing = _write(tmp_path / 'other.json', '{"config": {}}')
    assert run(['replay', '--run', str(missing), '--output-dir', str(tmp_path / 'out')]) == 1
