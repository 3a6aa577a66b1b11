import csv
import io
import json
import subprocess
import sys

import pytest

from bilinet import cli, greedy_min, new_digraph, rho, ring_digraph
from bilinet.errors import Diverged
from bilinet.graphmodel import graph_spec_dict
from bilinet.robustness import PropertyReport, Violation


def write_spec(path, digraph):
    path.write_text(json.dumps(graph_spec_dict(digraph), indent=1))
    return str(path)


@pytest.fixture
def ring_file(tmp_path):
    return write_spec(tmp_path / 'ring.json', ring_digraph())


@pytest.fixture
def scalar_file(tmp_path):
    return write_spec(tmp_path / 'scalar.json', new_digraph(1, {(1, 1): -1.0}, [1]))


def run(*argv):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def field(text, name):
    for line in text.splitlines():
        if line.strip().startswith(name + ':'):
            return line.split(':', 1)[1].strip()
    raise KeyError(name)


def test_analyze_scalar(scalar_file):
    code, out = run('analyze', scalar_file)
    assert code == 0
    assert field(out, 'rho') == '0.5'
    assert field(out, 'h2_norm') == '0.707107'
    assert field(out, 'assumption1') == 'holds'


def test_analyze_ring_matches_library(ring_file):
    code, out = run('analyze', ring_file, '--attack', '1->2,2->3')
    assert code == 0
    assert field(out, 'rho') == f"{rho(ring_digraph(), ['1->2', '2->3']):.6g}"
    assert field(out, 'assumption1') == 'fails'


def test_analyze_malformed_file(tmp_path, capsys):
    bad = tmp_path / 'bad.json'
    bad.write_text('{\n "nodes": 2,\n "edges": [}\n')
    code, _ = run('analyze', bad)
    assert code == 2 and 'line 3' in capsys.readouterr().err


def test_analyze_schema_error_names_field(tmp_path, capsys):
    doc = graph_spec_dict(ring_digraph())
    doc['edges'][1]['weight'] = 'heavy'
    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps(doc))
    assert run('analyze', bad)[0] == 2
    assert 'edges[1].weight' in capsys.readouterr().err


def test_analyze_missing_file(tmp_path):
    assert run('analyze', tmp_path / 'nope.json')[0] == 2


def test_analyze_bad_attack_edge(ring_file):
    assert run('analyze', ring_file, '--attack', '1->3')[0] == 2
    assert run('analyze', ring_file, '--attack', '1-3')[0] == 2


def test_analyze_unsolvable(ring_file, capsys):
    code, _ = run('analyze', ring_file, '--attack', '1->2,2->3,3->4,4->5,5->1')
    assert code == 3 and 'unsolvable' in capsys.readouterr().err


def test_lattice_outputs(ring_file, tmp_path):
    out_csv = tmp_path / 'lattice.csv'
    code, out = run('lattice', ring_file, '--out', out_csv)
    assert code == 0 and field(out, 'rows') == '32' and field(out, 'unsolvable') == '1'
    rows = list(csv.DictReader(out_csv.open()))
    assert len(rows) == 32 and sum(r['solvable'] == '0' for r in rows) == 1
    heat = (tmp_path / 'lattice.heatmap.txt').read_text().splitlines()
    assert len(heat) == 6
    first = out_csv.read_bytes(), (tmp_path / 'lattice.heatmap.txt').read_bytes()
    run('lattice', ring_file, '--out', out_csv)
    assert (out_csv.read_bytes(), (tmp_path / 'lattice.heatmap.txt').read_bytes()) == first


def test_lattice_empty_ground_set(scalar_file, tmp_path):
    out_csv = tmp_path / 'l.csv'
    assert run('lattice', scalar_file, '--out', out_csv, '--heatmap', tmp_path / 'h.txt')[0] == 0
    assert len(out_csv.read_text().splitlines()) == 2


def test_protect_greedy_matches_library(ring_file, tmp_path):
    out_json = tmp_path / 'p.json'
    code, out = run('protect', ring_file, '-k', 4, '--out', out_json)
    expected = greedy_min(ring_digraph(), 1)
    assert code == 0
    assert field(out, 'rho') == f'{expected.value:.6g}'
    doc = json.loads(out_json.read_text())
    assert doc['attack_set'] == ['4->5'] and doc['value'] == pytest.approx(expected.value)
    assert doc['ratio'] == pytest.approx(1.0)


def test_protect_zero_budget(ring_file):
    assert run('protect', ring_file, '-k', 0)[0] == 2


def test_protect_both(ring_file):
    code, out = run('protect', ring_file, '-k', 2, '--method', 'both')
    assert code == 0
    assert float(field(out, 'ratio')) >= 1
    assert field(out, 'greedy').startswith('3.36275')


def test_protect_randomized_reproducible(ring_file):
    a = run('protect', ring_file, '-k', 3, '--method', 'randomized', '--seed', 4, '--repeats', 4)
    b = run('protect', ring_file, '-k', 3, '--method', 'randomized', '--seed', 4, '--repeats', 4)
    assert a == b and a[0] == 0


def test_gap_command(ring_file, tmp_path):
    out_csv = tmp_path / 'gap.csv'
    code, out = run('gap', ring_file, '--m', '1,2,3,4', '--out', out_csv, '--fast')
    assert code == 0 and len(out.splitlines()) == 5
    assert len(out_csv.read_text().splitlines()) == 5


def test_verify_supermodular(ring_file):
    code, out = run('verify', ring_file, '--property', 'supermodular')
    assert code == 0 and field(out, 'violations') == '0'


def test_verify_sampled_reproducible(ring_file):
    a = run('verify', ring_file, '--property', 'monotone', '--mode', 'sampled', '--seed', 7)
    assert a == run('verify', ring_file, '--property', 'monotone', '--mode', 'sampled', '--seed', 7)
    assert a[0] == 0


def test_verify_too_large(tmp_path):
    path = write_spec(tmp_path / 'r13.json', ring_digraph(13))
    assert run('verify', path, '--property', 'supermodular')[0] == 2


def test_verify_violation_exit_code(ring_file, monkeypatch):
    def fake(*args, **kwargs):
        report = PropertyReport('monotone', 'exhaustive', tol=1e-9)
        report.tested = 1
        report.violations.append(Violation(((), None), 2.0, 1.0, 1.0))
        return report

    monkeypatch.setattr(cli, 'verify_monotonicity', fake)
    assert run('verify', ring_file, '--property', 'monotone')[0] == 4


def test_numerical_failure_exit_code(ring_file, monkeypatch):
    def boom(*args, **kwargs):
        raise Diverged('every Monte-Carlo sample diverged')

    monkeypatch.setattr(cli, 'monte_carlo_energy', boom)
    assert run('simulate', ring_file)[0] == 5


def test_simulate_zero_noise(ring_file):
    code, out = run('simulate', ring_file, '--noise', 0, '--samples', 3)
    assert code == 0 and field(out, 'energy').startswith('0 +/- 0')


def test_simulate_linear_case(scalar_file, tmp_path):
    traj = tmp_path / 'traj.csv'
    code, out = run('simulate', scalar_file, '--samples', 300, '--dt', 0.01,
                    '--seed', 2, '--trajectory', traj)
    assert code == 0 and abs(float(field(out, 'z'))) <= 3
    assert traj.read_text().startswith('t,x_1\n')


def test_simulate_bad_attack(ring_file):
    assert run('simulate', ring_file, '--attack', '2->1')[0] == 2


def test_argparse_errors_exit_2(ring_file):
    with pytest.raises(SystemExit) as exc:
        cli.main(['protect', ring_file, '-k', 'two'])
    assert exc.value.code == 2


def test_module_entry_point(scalar_file):
    proc = subprocess.run([sys.executable, '-m', 'bilinet', 'analyze', scalar_file],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and 'rho: 0.5' in proc.stdout


@pytest.mark.parametrize('method', ['fixed_point', 'series'])
def test_analyze_iterative_methods(ring_file, method):
    code, out = run('analyze', ring_file, '--attack', '1->2', '--method', method, '--tol', 1e-12)
    assert code == 0 and field(out, 'solver') == method
    assert field(out, 'rho') == f"{rho(ring_digraph(), ['1->2']):.6g}"
