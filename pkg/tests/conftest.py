import pytest

from bilinet import new_digraph, ring_digraph

ACCEPTANCE_MODULE = 'test_acceptance.py'
_outcomes = {}


@pytest.fixture
def ring():
    return ring_digraph()


@pytest.fixture
def scalar_digraph():
    return new_digraph(1, {(1, 1): -1.0}, [1], [(1, 1)])


@pytest.fixture
def two_node_digraph():
    return new_digraph(2, {(1, 1): -1.0, (2, 2): -1.0, (1, 2): 1.0}, [1], [(1, 2)],
                       orientation='head_tail')


def pytest_runtest_logreport(report):
    if ACCEPTANCE_MODULE not in report.nodeid:
        return
    if report.when == 'call' or (report.when == 'setup' and report.outcome != 'passed'):
        _outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section('acceptance criteria')
    for number, (func, title) in sorted(CRITERIA.items()):
        matches = [o for nid, o in _outcomes.items() if nid.endswith('::' + func)]
        status = 'PASS' if matches and all(o == 'passed' for o in matches) else \
            'FAIL' if matches else 'NOT RUN'
        terminalreporter.write_line(f'criterion {number}: {status}  {title}')
