import io
import math

import numpy as np
import pytest
import scipy.linalg as spla

from bilinet import BilinearSystem, assemble_system, ring_digraph
from bilinet.errors import Diverged, InvalidInput, TooLarge
from bilinet.gramian import solve_linear_lyapunov, volterra_series_gramian
from bilinet.simulate import (DisturbanceSpec, EnergyEstimate, default_horizon,
                              impulse_energy, integrate, kernel_energy_truncated,
                              monte_carlo_energy)

from factories import scalar_system, two_node_system


def test_scalar_free_decay():
    s = BilinearSystem.from_matrices([[-1.0]], [], [[1.0]])
    traj = integrate(s, x0=[1.0], horizon=5.0, dt=1e-3)
    assert abs(traj.states[-1, 0] - math.exp(-5.0)) <= 1e-8
    assert traj.times[-1] == pytest.approx(5.0)


def test_table_impulse_energy_matches_gramian():
    s = assemble_system(ring_digraph())
    dt = 1e-3
    v = DisturbanceSpec.from_table([[1.0 / dt]], dt_hold=dt)
    energy = integrate(s, v_spec=v, horizon=default_horizon(s), dt=dt).energy()
    assert energy == pytest.approx(1.25, rel=0.02)


def test_impulse_energy_is_linear_h2():
    s = assemble_system(ring_digraph())
    expected = np.trace(solve_linear_lyapunov(s.N0, s.B @ s.B.T))
    assert impulse_energy(s, dt=1e-2) == pytest.approx(expected, rel=1e-6)


def test_constant_coupling_matches_matrix_exponential():
    s = two_node_system()
    eta_bar = 0.7
    steps = 2000
    eta = DisturbanceSpec.from_table(np.full((steps, 1), eta_bar), dt_hold=1e-3)
    x0 = np.array([1.0, -0.5])
    traj = integrate(s, eta_spec=eta, x0=x0, horizon=2.0, dt=1e-3)
    A = s.N0 + eta_bar * s.coupling_matrices[0]
    expected = np.array([spla.expm(A * t) @ x0 for t in traj.times[::100]])
    assert np.max(np.abs(traj.states[::100] - expected)) <= 1e-6


def test_divergence_is_reported():
    s = BilinearSystem.from_matrices([[1.0]], [], [[1.0]])
    with pytest.raises(Diverged):
        integrate(s, x0=[1.0], horizon=40.0, dt=1e-2)


def test_white_noise_statistics():
    spec = DisturbanceSpec.white(2.0, dt_hold=0.01, seed=3)
    u = spec.samples(100_000, 1e-3, 1)
    held = u[::10, 0]
    assert np.all(u[:10, 0] == u[0, 0])
    assert held.var() * 0.01 == pytest.approx(4.0, rel=0.03)


def test_disturbance_validation():
    with pytest.raises(InvalidInput):
        DisturbanceSpec.white(-1.0)
    with pytest.raises(InvalidInput):
        DisturbanceSpec('pink')


def test_trajectory_csv():
    s = two_node_system()
    fh = io.StringIO()
    integrate(s, x0=[1.0, 0.0], horizon=0.01, dt=1e-3).write_csv(fh)
    lines = fh.getvalue().splitlines()
    assert lines[0] == 't,x_1,x_2' and len(lines) == 12
    assert lines[1] == '0,1,0'


def test_monte_carlo_zero_noise():
    est = monte_carlo_energy(assemble_system(ring_digraph()), noise_level=0.0)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_monte_carlo_linear_within_three_stderr():
    s = BilinearSystem.from_matrices([[-1.0, 0.0], [1.0, -2.0]], [], np.eye(2))
    expected = np.trace(solve_linear_lyapunov(s.N0, np.eye(2)))
    est = monte_carlo_energy(s, 1.0, samples=400, dt=1e-2, seed=3)
    assert abs(est.mean - expected) <= 3 * est.stderr
    assert est.stderr < 0.05 * expected


def test_monte_carlo_bilinear_scalar_within_three_stderr():
    s = scalar_system(-1.0, 0.5)
    expected = 0.5 / (1 - 0.125)  # -2P + P/4 + 1 = 0
    est = monte_carlo_energy(s, 1.0, samples=400, dt=1e-2, seed=4)
    assert abs(est.mean - expected) <= 3 * est.stderr


def test_monte_carlo_noise_level_normalization():
    s = BilinearSystem.from_matrices([[-1.0]], [], [[1.0]])
    a = monte_carlo_energy(s, 1.0, samples=50, dt=1e-2, seed=1)
    b = monte_carlo_energy(s, 3.0, samples=50, dt=1e-2, seed=1)
    assert b.mean == pytest.approx(a.mean, rel=1e-12)


def test_monte_carlo_independent_of_batching():
    s = assemble_system(ring_digraph(), ['1->2'])
    a = monte_carlo_energy(s, samples=12, horizon=5.0, dt=1e-2, seed=9, batch=5)
    b = monte_carlo_energy(s, samples=12, horizon=5.0, dt=1e-2, seed=9, batch=12)
    assert a.mean == pytest.approx(b.mean, rel=1e-12)
    mean, stderr = a
    assert isinstance(a, EnergyEstimate) and stderr > 0


def test_monte_carlo_argument_checks():
    s = scalar_system()
    with pytest.raises(InvalidInput):
        monte_carlo_energy(s, samples=0)
    with pytest.raises(InvalidInput):
        monte_carlo_energy(s, noise_level=-1.0)


def test_kernel_energy_scalar_partial_sums():
    s = scalar_system()
    assert kernel_energy_truncated(s, q_max=1) == pytest.approx(0.5, rel=1e-6)
    assert kernel_energy_truncated(s, q_max=3) == pytest.approx(0.875, rel=1e-6)


def test_kernel_energy_two_node_matches_series():
    s = two_node_system()
    _, traces = volterra_series_gramian(s)
    for q in (1, 2, 3):
        assert kernel_energy_truncated(s, q_max=q) == pytest.approx(sum(traces[:q]), rel=1e-4)


def test_kernel_energy_random_two_state():
    rng = np.random.default_rng(5)
    N0 = np.array([[-1.2, 0.4], [-0.3, -0.9]])
    couplings = [0.4 * rng.standard_normal((2, 2)) for _ in range(2)]
    s = BilinearSystem.from_matrices(N0, couplings, [[1.0], [0.5]])
    _, traces = volterra_series_gramian(s)
    assert kernel_energy_truncated(s, q_max=3) == pytest.approx(sum(traces[:3]), rel=1e-6)


def test_kernel_energy_size_guard():
    with pytest.raises(TooLarge):
        kernel_energy_truncated(assemble_system(ring_digraph()))
    with pytest.raises(TooLarge):
        kernel_energy_truncated(scalar_system(), q_max=4)


def test_impulse_energy_converges_fourth_order():
    s = assemble_system(ring_digraph())
    errors = [abs(impulse_energy(s, dt=dt) - 1.25) for dt in (0.2, 0.1, 0.05, 0.025)]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    rates = [np.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(rates) > 3.5


def test_kernel_energy_nondecreasing_in_order():
    for s in (scalar_system(), two_node_system()):
        values = [kernel_energy_truncated(s, q_max=q) for q in (1, 2, 3)]
        assert values == sorted(values)


def test_monte_carlo_bit_reproducible():
    s = assemble_system(ring_digraph(), ['2->3'])
    runs = [monte_carlo_energy(s, samples=8, horizon=4.0, dt=1e-2, seed=5) for _ in range(2)]
    assert runs[0] == runs[1]
    assert monte_carlo_energy(s, samples=8, horizon=4.0, dt=1e-2, seed=6) != runs[0]
