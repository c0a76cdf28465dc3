"""
Tests for the command line front end.
"""

import pytest

from cdlab_cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main


def _summary(text: str) -> dict[str, str]:
    return dict(line.split(' = ', 1) for line in text.splitlines() if ' = ' in line)


def test_constants(tmp_path, capsys):
    assert main(['constants', '--N', '3', '--out', str(tmp_path)]) == EXIT_PASS
    output = capsys.readouterr().out
    assert 'thm_beta_const = 8\n' in output
    summary = _summary(output)
    assert summary['status'] == 'pass'
    run_dir = tmp_path / summary['run_id']
    assert (run_dir / 'summary.txt').read_text(encoding='utf-8') == output
    assert (run_dir / 'constants.txt').exists()


def test_negative_dimension_constants(tmp_path, capsys):
    assert main(['constants', '--N=-3', '--out', str(tmp_path)]) == EXIT_PASS
    summary = _summary(capsys.readouterr().out)
    assert float(summary['K_N']) == pytest.approx(5.5)


def test_gap(tmp_path, capsys):
    assert main(['gap', '--model', 'jacobi', '--N', '3', '--n', '1000', '--out', str(tmp_path)]) == EXIT_PASS
    summary = _summary(capsys.readouterr().out)
    assert float(summary['lambda1']) == pytest.approx(3.0, abs=1e-3)
    assert float(summary['lambda1_refined']) == pytest.approx(3.0, rel=1e-6)
    assert summary['lichnerowicz'] == 'pass'
    assert (tmp_path / summary['run_id'] / 'spectrum.csv').exists()


def test_counterexample(tmp_path, capsys):
    assert main(['counterexample', '--r', '4', '--out', str(tmp_path)]) == EXIT_PASS
    assert 'r[4] = l1_f=' in capsys.readouterr().out


def test_counterexample_sweep(tmp_path, capsys):
    assert main(['counterexample', '--out', str(tmp_path)]) == EXIT_PASS
    summary = _summary(capsys.readouterr().out)
    assert summary['increasing'] == 'pass'
    assert summary['divergence'] == 'pass'


@pytest.mark.parametrize('argv', [
    ['gap', '--bogus', '1'],
    ['rotate'],
    [],
    ['model-info', '--model', 'jacobi', '--N', '0.5'],
    ['stability'],
    ['counterexample', '--r', '-1'],
    ['constants'],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + ['--out', str(tmp_path)]) == EXIT_USAGE


def test_cd_check_detects_a_violation(tmp_path, capsys):
    argv = ['cd-check', '--model', 'phi_perturbed', '--N', '3', '--delta', '0.3', '--psi', 'sin', '--out',
            str(tmp_path)]
    assert main(argv) == EXIT_FAIL
    summary = _summary(capsys.readouterr().out)
    assert summary['cd'] == 'fail'
    assert summary['status'] == 'fail'


def test_cd_check_certifies_cauchy(tmp_path, capsys):
    assert main(['cd-check', '--model', 'cauchy', '--N=-3', '--out', str(tmp_path)]) == EXIT_PASS
    assert _summary(capsys.readouterr().out)['cd'] == 'pass'


def test_model_info(tmp_path, capsys):
    assert main(['model-info', '--model', 'jacobi', '--N', '3', '--out', str(tmp_path)]) == EXIT_PASS
    summary = _summary(capsys.readouterr().out)
    assert float(summary['variance']) == pytest.approx(0.25)


def test_tail_audit(tmp_path):
    assert main(['tail-audit', '--N=-3', '--out', str(tmp_path)]) == EXIT_PASS


def test_stein_audit(tmp_path, capsys):
    assert main(['stein-audit', '--N=-3', '--samples', '12', '--seed', '5', '--out', str(tmp_path)]) == EXIT_PASS
    summary = _summary(capsys.readouterr().out)
    assert summary['violations'] == '0'
    assert summary['identity_source'] == 'pass'


def test_flags_override_the_config_file(tmp_path, capsys):
    config = tmp_path / 'run.conf'
    config.write_text('# gap run\ncommand = gap\nmodel = jacobi\nN = 5\nn = 400\n', encoding='utf-8')
    out = tmp_path / 'runs'
    assert main(['gap', '--config', str(config), '--N', '3', '--out', str(out)]) == EXIT_PASS
    summary = _summary(capsys.readouterr().out)
    assert float(summary['lambda1']) == pytest.approx(3.0, abs=1e-2)
    [written] = list(out.glob('*/config.txt'))
    text = written.read_text(encoding='utf-8')
    assert 'N = 3.0\n' in text
    assert 'n = 400\n' in text


def test_unknown_config_key(tmp_path):
    config = tmp_path / 'run.conf'
    config.write_text('command = gap\ncolour = blue\n', encoding='utf-8')
    assert main(['gap', '--config', str(config), '--out', str(tmp_path)]) == EXIT_USAGE


def test_stability_is_deterministic(tmp_path, capsys):
    argv = ['stability', '--family', 'gauss_stiff', '--deltas', '1e-2,1e-1', '--n', '200', '--out', str(tmp_path)]
    first_code = main(argv)
    first = capsys.readouterr().out
    run_dir = tmp_path / _summary(first)['run_id']
    table = (run_dir / 'gauss_stiff.csv').read_bytes()
    assert main(argv) == first_code
    assert capsys.readouterr().out == first
    assert (run_dir / 'gauss_stiff.csv').read_bytes() == table
    assert 'fit' in _summary(first)
