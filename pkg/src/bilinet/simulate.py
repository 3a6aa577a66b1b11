"""Time-domain validation of Gramian-based H2 values.

Two independent routes back the algebraic solvers:

* fixed-step RK4 integration of the bilinear dynamics, used for impulse
  responses and for Monte-Carlo estimates of the stationary output power
  under white-noise disturbances on every attacked node and link;
* nested tensor-product quadrature of the Volterra kernels, truncated at
  order three.

White noise is approximated by piecewise-constant draws held for
``dt_hold`` with variance ``level**2 / dt_hold``.  Such smooth
approximations converge to the Stratonovich solution, whereas the
generalized Lyapunov equation describes the Ito one; the Monte-Carlo drift
is therefore shifted by ``-level**2/2 * sum_k N_k @ N_k`` (zero for
elementary couplings between distinct nodes).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.linalg as spla
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson

from .errors import Diverged, InvalidInput, TooLarge
from .gramian import spectral_abscissa
from .graphmodel import BilinearSystem

__all__ = ['DisturbanceSpec', 'Trajectory', 'EnergyEstimate', 'integrate',
           'impulse_energy', 'monte_carlo_energy', 'kernel_energy_truncated',
           'default_horizon']

DIVERGENCE_LIMIT = 1e12
_CHUNK = 1024


def default_horizon(system: BilinearSystem) -> float:
    """``20 / alpha`` with ``alpha`` the decay rate of the drift."""
    a = spectral_abscissa(system.N0)
    if not a < 0:
        raise InvalidInput('drift matrix is not Hurwitz; give an explicit horizon')
    return 20.0 / -a


@dataclass(frozen=True)
class DisturbanceSpec:
    """Disturbance signal model.

    kind : {'zero', 'white', 'table'}
        ``'white'`` draws i.i.d. Gaussian values with variance
        ``level**2 / dt_hold`` per hold interval (intensity ``level**2``);
        ``'table'`` replays ``table[j]`` over the ``j``-th hold interval and
        is zero afterwards.
    """

    kind: str = 'zero'
    level: float = 0.0
    dt_hold: float | None = None
    table: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ('zero', 'white', 'table'):
            raise InvalidInput(f'unknown disturbance kind {self.kind!r}')
        if self.level < 0:
            raise InvalidInput('noise level must be nonnegative')
        if self.dt_hold is not None and not self.dt_hold > 0:
            raise InvalidInput('dt_hold must be positive')

    @classmethod
    def zero(cls):
        return cls('zero')

    @classmethod
    def white(cls, level, dt_hold=None, seed=0):
        return cls('white', float(level), dt_hold, None, seed)

    @classmethod
    def from_table(cls, values, dt_hold):
        values = np.array(values, dtype=float, ndmin=2)
        return cls('table', 0.0, dt_hold, tuple(map(tuple, values)))

    def _hold_steps(self, dt):
        if self.dt_hold is None:
            return 1
        return max(1, int(round(self.dt_hold / dt)))

    def samples(self, steps, dt, channels, rng=None) -> np.ndarray:
        """Per-step input values, shape ``(steps, channels)``."""
        out = np.zeros((steps, channels))
        if channels == 0 or self.kind == 'zero':
            return out
        hold = self._hold_steps(dt)
        if self.kind == 'table':
            table = np.array(self.table, dtype=float)
            if table.shape[1] != channels:
                raise InvalidInput(f'table has {table.shape[1]} channels, expected {channels}')
            rows = np.repeat(table, hold, axis=0)[:steps]
            out[:len(rows)] = rows
            return out
        rng = np.random.default_rng(self.seed) if rng is None else rng
        holds = -(-steps // hold)
        sigma = self.level / np.sqrt(hold * dt)
        draws = sigma * rng.standard_normal((holds, channels))
        return np.repeat(draws, hold, axis=0)[:steps]


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray

    def energy(self) -> float:
        """``int ||y||^2 dt`` by Simpson's rule."""
        power = np.sum(self.outputs ** 2, axis=1)
        return float(simpson(power, x=self.times))

    def write_csv(self, fh):
        writer = csv.writer(fh, lineterminator='\n')
        n = self.states.shape[1]
        writer.writerow(['t'] + [f'x_{i}' for i in range(1, n + 1)])
        for t, x in zip(self.times, self.states):
            writer.writerow([f'{t:.17g}'] + [f'{v:.17g}' for v in x])


def _rhs(N0T, NT, BT, X, eta, v):
    """Batched ``dx/dt`` for states ``X`` of shape ``(S, n)``."""
    dX = X @ N0T
    if NT.shape[0]:
        dX += np.einsum('sk,ski->si', eta, np.einsum('sj,kji->ski', X, NT))
    if BT.shape[0]:
        dX += v @ BT
    return dX


def _rk4_step(N0T, NT, BT, X, eta, v, dt):
    k1 = _rhs(N0T, NT, BT, X, eta, v)
    k2 = _rhs(N0T, NT, BT, X + 0.5 * dt * k1, eta, v)
    k3 = _rhs(N0T, NT, BT, X + 0.5 * dt * k2, eta, v)
    k4 = _rhs(N0T, NT, BT, X + dt * k3, eta, v)
    return X + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _batched_rk4(W, n, X, eta, forcing, dt):
    """RK4 step of ``dx/dt = x (N0^T + sum_k eta_k N_k^T) + forcing``.

    ``W`` stacks ``[N0^T | N_1^T | ... | N_m^T]`` column-wise so every stage
    costs a single matrix product.
    """
    S, m = eta.shape

    def f(Z):
        Y = Z @ W
        out = Y[:, :n] + forcing
        if m:
            out += np.einsum('sk,skn->sn', eta, Y[:, n:].reshape(S, m, n))
        return out

    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _operators(system, drift=None):
    N0 = system.N0 if drift is None else drift
    NT = np.array([N.T for N in system.coupling_matrices]).reshape(-1, system.n, system.n)
    return N0.T.copy(), NT, system.B.T.copy()


def _steps(horizon, dt):
    if not dt > 0:
        raise InvalidInput('dt must be positive')
    if not horizon >= dt:
        raise InvalidInput('horizon must be at least dt')
    return int(round(horizon / dt))


def integrate(system: BilinearSystem, eta_spec=None, v_spec=None, x0=None,
              horizon=10.0, dt=1e-3) -> Trajectory:
    """Integrate ``dx/dt = (N0 + sum eta_k N_k) x + B v`` with fixed-step RK4.

    Inputs are held constant over each step.  Raises :class:`Diverged` if
    the state norm exceeds 1e12.
    """
    eta_spec = eta_spec or DisturbanceSpec.zero()
    v_spec = v_spec or DisturbanceSpec.zero()
    n = system.n
    steps = _steps(horizon, dt)
    eta = eta_spec.samples(steps, dt, len(system.couplings))
    v = v_spec.samples(steps, dt, system.B.shape[1])
    N0T, NT, BT = _operators(system)
    X = np.zeros((1, n)) if x0 is None else np.array(x0, dtype=float).reshape(1, n)
    states = np.empty((steps + 1, n))
    states[0] = X[0]
    for j in range(steps):
        X = _rk4_step(N0T, NT, BT, X, eta[j:j + 1], v[j:j + 1], dt)
        if not np.all(np.abs(X) <= DIVERGENCE_LIMIT):
            raise Diverged(f'state norm exceeded {DIVERGENCE_LIMIT:g} at t={(j + 1) * dt:.6g}')
        states[j + 1] = X[0]
    times = dt * np.arange(steps + 1)
    return Trajectory(times, states, states @ system.C.T)


def impulse_energy(system: BilinearSystem, horizon=None, dt=1e-3) -> float:
    """Output energy of the unforced response from each column of ``B``.

    For a system without attacked links this is the squared H2 norm.
    """
    horizon = default_horizon(system) if horizon is None else horizon
    total = 0.0
    for j in range(system.B.shape[1]):
        traj = integrate(system.with_couplings([]), x0=system.B[:, j],
                         horizon=horizon, dt=dt)
        total += traj.energy()
    return total


@dataclass(frozen=True)
class EnergyEstimate:
    """Monte-Carlo estimate; unpacks as ``mean, stderr``."""

    mean: float
    stderr: float
    samples: int
    diverged: int = 0

    def __iter__(self) -> Iterator[float]:
        return iter((self.mean, self.stderr))


def monte_carlo_energy(system: BilinearSystem, noise_level=1.0, samples=500,
                       horizon=None, dt=1e-3, seed=0, dt_hold=None,
                       burn_in=0.5, batch=500) -> EnergyEstimate:
    """Normalized stationary output power under white-noise attacks.

    Every attacked link and node receives independent white noise of
    intensity ``noise_level**2``, starting from ``x(0) = 0``.  Each sample's
    energy is ``int ||y||^2 dt`` over ``[burn_in * horizon, horizon]``
    divided by the window length and by ``noise_level**2``; for unit noise
    its expectation tends to ``trace(P)``.  Sample ``i`` draws from its own
    stream seeded by ``(seed, i)``, so results do not depend on ``batch``.

    Samples whose state exceeds 1e12 are dropped and counted in
    ``diverged``; :class:`Diverged` is raised if all of them diverge.
    """
    if samples < 1:
        raise InvalidInput('samples must be >= 1')
    if noise_level < 0:
        raise InvalidInput('noise level must be nonnegative')
    if noise_level == 0:
        return EnergyEstimate(0.0, 0.0, samples, 0)
    horizon = default_horizon(system) if horizon is None else float(horizon)
    steps = _steps(horizon, dt)
    start = int(round(burn_in * steps))
    if start >= steps:
        raise InvalidInput('burn_in leaves no averaging window')
    hold = DisturbanceSpec.white(noise_level, dt_hold)._hold_steps(dt)
    sigma = noise_level / np.sqrt(hold * dt)
    n, m, p = system.n, len(system.couplings), system.B.shape[1]
    correction = sum((N @ N for N in system.coupling_matrices), np.zeros((n, n)))
    N0T, NT, BT = _operators(system, system.N0 - 0.5 * noise_level ** 2 * correction)
    W = np.hstack([N0T, *NT])
    CT = system.C.T
    # Simpson weights on the averaging window (trapezoid for an odd count).
    count = steps - start + 1
    if count % 2 == 1 and count >= 3:
        w = np.ones(count)
        w[1:-1:2], w[2:-1:2] = 4, 2
        w *= dt / 3
    else:
        w = np.full(count, dt)
        w[[0, -1]] = dt / 2
    window = dt * (steps - start)

    energies, diverged = [], 0
    for lo in range(0, samples, batch):
        ids = range(lo, min(lo + batch, samples))
        rngs = [np.random.default_rng([seed, i]) for i in ids]
        S = len(rngs)
        X = np.zeros((S, n))
        acc = np.zeros(S)
        alive = np.ones(S, dtype=bool)
        draws = None
        for j in range(steps):
            if j % (_CHUNK * hold) == 0:
                chunk = np.stack([r.standard_normal((_CHUNK, m + p)) for r in rngs])
                draws = sigma * chunk
            u = draws[:, (j // hold) % _CHUNK]
            if j >= start:
                Y = X @ CT
                acc += w[j - start] * np.einsum('si,si->s', Y, Y)
            X = _batched_rk4(W, n, X, u[:, :m], u[:, m:] @ BT, dt)
            bad = ~np.all(np.abs(X) <= DIVERGENCE_LIMIT, axis=1)
            if bad.any():
                alive &= ~bad
                X[bad] = 0.0
        Y = X @ CT
        acc += w[-1] * np.einsum('si,si->s', Y, Y)
        diverged += int((~alive).sum())
        energies.extend(acc[alive] / (window * noise_level ** 2))
    if not energies:
        raise Diverged('every Monte-Carlo sample diverged')
    e = np.array(energies)
    stderr = float(e.std(ddof=1) / np.sqrt(e.size)) if e.size > 1 else float('inf')
    return EnergyEstimate(float(e.mean()), stderr, samples, diverged)


def _gauss_nodes(T, points, order=8):
    panels = max(1, points // order)
    x, w = leggauss(order)
    edges = np.linspace(0.0, T, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


def kernel_energy_truncated(system: BilinearSystem, q_max=3,
                            quadrature_points=160, horizon=None) -> float:
    """Sum of Volterra-kernel energies up to order ``q_max``.

    The order-``q`` kernels are
    ``C exp(N0 s_q) N_{k_1} exp(N0 s_{q-1}) ... N_{k_{q-1}} exp(N0 s_1) b_j``
    over all coupling words ``k_1..k_{q-1}`` and input columns ``b_j``;
    their squared norms are integrated over ``[0, horizon]^q`` with a
    tensor-product composite Gauss-Legendre rule (``quadrature_points``
    nodes per axis; ``horizon`` defaults to ``20/alpha``).

    Limited to ``n <= 3``, at most two couplings and ``q_max <= 3``.
    """
    n, m = system.n, len(system.couplings)
    if n > 3 or m > 2 or not 1 <= q_max <= 3:
        raise TooLarge('kernel quadrature supports n <= 3, at most 2 couplings '
                       'and 1 <= q_max <= 3')
    horizon = default_horizon(system) if horizon is None else horizon
    s, w = _gauss_nodes(horizon, quadrature_points)
    expo = np.array([spla.expm(system.N0 * t) for t in s])       # (P, n, n)
    C = system.C
    # Inner kernels: vectors (count, n) with quadrature weights (count,).
    vecs = np.einsum('pij,jb->pbi', expo, system.B).reshape(-1, n)
    wts = np.repeat(w, system.B.shape[1])
    total = float(np.sum(wts * np.sum((vecs @ C.T) ** 2, axis=1)))
    for q in range(2, q_max + 1):
        if m == 0:
            break
        last = q == q_max
        coupled = np.concatenate([vecs @ N.T for N in system.coupling_matrices])
        cw = np.tile(wts, m)
        new_vecs, new_wts = [], []
        level = 0.0
        for t_idx in range(len(s)):
            out = coupled @ expo[t_idx].T
            level += w[t_idx] * float(np.sum(cw * np.sum((out @ C.T) ** 2, axis=1)))
            if not last:
                new_vecs.append(out)
                new_wts.append(w[t_idx] * cw)
        total += level
        if not last:
            vecs = np.concatenate(new_vecs)
            wts = np.concatenate(new_wts)
    return total
