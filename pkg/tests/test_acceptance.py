"""Acceptance suite.

Each test covers one numbered criterion and prints a one-line verdict with
the measured quantities; ``conftest.py`` repeats the verdicts in the
terminal summary.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from bilinet import (assemble_system, brute_force_min, gap_table,
                     randomized_greedy_max, ring_digraph, rho,
                     verify_monotonicity, verify_supermodularity)
from bilinet.errors import NotPSD, Unsolvable
from bilinet.gramian import (assumption1_check, solve_generalized_direct,
                             solve_generalized_fixed_point,
                             spectral_solvability_check,
                             volterra_series_gramian)
from bilinet.simulate import kernel_energy_truncated, monte_carlo_energy

from factories import (brute_max, coverage_instance, random_digraph,
                       random_solvable_system, random_system, scalar_system,
                       two_node_system)

CRITERIA = {
    1: ('test_solver_oracle_equivalence', 'three Gramian solvers agree on 100 random systems'),
    2: ('test_closed_forms', 'scalar and two-node closed forms; negative Gramian flagged'),
    3: ('test_monotone_supermodular', 'monotonicity and supermodularity of rho'),
    4: ('test_ring_protection_phenomena', '5-ring: full attack unsolvable, greedy gap, 10x drop'),
    5: ('test_randomized_greedy_guarantee', 'randomized greedy mean >= 0.356 x optimum'),
    6: ('test_assumption1_consistency', 'sufficient condition implies solvability'),
    7: ('test_monte_carlo_validation', 'simulated energy matches rho and ranks attack sets'),
    8: ('test_kernel_energy_oracle', 'kernel quadrature matches series terms'),
}


def verdict(number, ok, detail):
    print(f'\ncriterion {number}: {"PASS" if ok else "FAIL"}  {detail}')


def test_solver_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_gap = worst_residual = 0.0
    for _ in range(100):
        s = random_solvable_system(rng, n=int(rng.integers(1, 7)), m=int(rng.integers(0, 5)))
        reports = [solve_generalized_direct(s), solve_generalized_fixed_point(s),
                   volterra_series_gramian(s)[0]]
        traces = [r.trace for r in reports]
        for a, b in itertools.combinations(traces, 2):
            worst_gap = max(worst_gap, abs(a - b) / max(abs(a), abs(b)))
        worst_residual = max(worst_residual, *(r.residual for r in reports))
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-6 and worst_residual <= 1e-10 and elapsed <= 60
    verdict(1, ok, f'max relative gap {worst_gap:.2e}, max residual '
                   f'{worst_residual:.2e}, {elapsed:.1f} s')
    assert worst_gap <= 1e-6
    assert worst_residual <= 1e-10
    assert elapsed <= 60


def test_closed_forms():
    scalar = solve_generalized_direct(scalar_system()).trace
    two = solve_generalized_direct(two_node_system()).trace
    with pytest.raises(NotPSD):
        solve_generalized_direct(scalar_system(-0.4))
    assert not spectral_solvability_check(scalar_system(-0.4))[0]
    ok = abs(scalar - 1.0) <= 1e-12 and abs(two - 0.75) <= 1e-12
    verdict(2, ok, f'scalar {scalar!r}, two-node {two!r}, N0=-0.4 rejected')
    assert abs(scalar - 1.0) <= 1e-12
    assert abs(two - 0.75) <= 1e-12


def test_monotone_supermodular():
    start = time.perf_counter()
    ring = ring_digraph()
    reports = [verify_monotonicity(ring), verify_supermodularity(ring)]
    rng = np.random.default_rng(77)
    for _ in range(50):
        g = random_digraph(rng)
        assert spectral_solvability_check(assemble_system(g))[0]
        reports += [verify_monotonicity(g), verify_supermodularity(g)]
    elapsed = time.perf_counter() - start
    violations = sum(len(r.violations) for r in reports)
    tested = sum(r.tested for r in reports)
    verdict(3, violations == 0 and elapsed <= 300,
            f'{tested} comparisons, {violations} violations, {elapsed:.1f} s')
    assert violations == 0
    assert elapsed <= 300


def test_ring_protection_phenomena():
    ring = ring_digraph()
    # (a) attacking every ring edge leaves no finite Gramian
    full = assemble_system(ring, ring.vulnerable_edges)
    solvable, abscissa = spectral_solvability_check(full)
    with pytest.raises(Unsolvable):
        rho(ring, ring.vulnerable_edges)
    # (b) greedy never beats the exact minimum and is exact for one edge
    rows = gap_table(ring, [1, 2, 3, 4])
    ordered = all(r.greedy_value >= r.brute_value for r in rows)
    # (c) protecting down to two attacked edges
    m4 = brute_force_min(ring, 4).value
    m2 = brute_force_min(ring, 2).value
    drop = m4 / m2
    ok = (not solvable) and ordered and rows[0].ratio == 1 and drop >= 10
    verdict(4, ok, f'full-set abscissa {abscissa:+.4f}; ratios '
                   + ' '.join(f'{r.ratio:.4f}' for r in rows)
                   + f'; rho m=4 {m4:.4f} -> m=2 {m2:.4f} ({drop:.1f}x)')
    assert not solvable
    assert ordered and rows[0].ratio == 1
    assert m4 == pytest.approx(111.72297297297266, rel=1e-9)
    assert m2 == pytest.approx(1.8454088952654233, rel=1e-9)
    assert drop >= 10


def test_randomized_greedy_guarantee():
    start = time.perf_counter()
    rng = np.random.default_rng(356)
    worst = np.inf
    for i in range(30):
        ground, oracle = coverage_instance(rng, n_ground=int(rng.integers(3, 9)))
        k = int(rng.integers(1, min(4, len(ground)) + 1))
        _, mean = randomized_greedy_max(oracle, ground, k, seed=i, repeats=200)
        worst = min(worst, mean / brute_max(oracle, ground, k))
    elapsed = time.perf_counter() - start
    verdict(5, worst >= 0.356 and elapsed <= 120,
            f'worst mean/optimum {worst:.3f} over 30 instances, {elapsed:.1f} s')
    assert worst >= 0.356
    assert elapsed <= 120


def test_assumption1_consistency():
    rng = np.random.default_rng(6)
    holds = counterexamples = 0
    for i in range(200):
        s = random_system(rng, coupling_scale=rng.uniform(0.05, 1.5))
        if not assumption1_check(s).holds:
            continue
        holds += 1
        if not spectral_solvability_check(s)[0]:
            counterexamples += 1
            continue
        try:
            solve_generalized_fixed_point(s)
        except Unsolvable:
            counterexamples += 1
    verdict(6, counterexamples == 0 and holds > 0,
            f'condition held on {holds}/200 systems, {counterexamples} counterexamples')
    assert holds >= 20
    assert counterexamples == 0


@pytest.mark.slow
def test_monte_carlo_validation():
    start = time.perf_counter()
    ring = ring_digraph()
    dt = 2e-3
    base = monte_carlo_energy(assemble_system(ring), 1.0, samples=500, dt=dt, seed=0)
    z = (base.mean - rho(ring)) / base.stderr
    rhos, energies = [], []
    for pair in itertools.combinations(ring.vulnerable_edges, 2):
        rhos.append(rho(ring, pair))
        energies.append(monte_carlo_energy(assemble_system(ring, pair), 1.0, samples=1000,
                                           dt=dt, seed=1, batch=1000).mean)
    corr = spearmanr(rhos, energies).statistic
    elapsed = time.perf_counter() - start
    ok = abs(z) <= 3 and corr >= 0.9 and elapsed <= 600
    verdict(7, ok, f'empty attack {base.mean:.4f} +/- {base.stderr:.4f} vs 1.25 '
                   f'(z={z:+.2f}); Spearman {corr:.3f}; {elapsed:.0f} s')
    assert abs(z) <= 3
    assert corr >= 0.9
    assert elapsed <= 600


def test_kernel_energy_oracle():
    worst = 0.0
    for s in (scalar_system(), two_node_system()):
        _, traces = volterra_series_gramian(s)
        expected = sum(traces[:3])
        worst = max(worst, abs(kernel_energy_truncated(s, q_max=3) - expected) / expected)
    verdict(8, worst <= 1e-4, f'max relative error {worst:.2e}')
    assert worst <= 1e-4
