"""Reachability Gramians of bilinear systems.

The Gramian ``P`` solves the generalized Lyapunov equation

    N0 P + P N0^T + sum_k N_k P N_k^T + B B^T = 0

and equals the sum of the Volterra-series terms ``X_1 = Lyap(N0, BB^T)``,
``X_q = Lyap(N0, sum_k N_k X_{q-1} N_k^T)``.  Three solvers are provided so
they can cross-check each other:

* :func:`solve_generalized_direct` -- dense Kronecker (vectorized) solve;
* :func:`solve_generalized_fixed_point` -- Picard iteration on the
  linear Lyapunov operator;
* :func:`volterra_series_gramian` -- explicit series summation.

All matrices are vectorized column-major, so that
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.linalg import lapack
from scipy.optimize import minimize_scalar

from .errors import (InvalidInput, MaxIterations, NonConvergent, NotHurwitz,
                     NotPSD, SingularOperator)
from .graphmodel import BilinearSystem

__all__ = ['GramianReport', 'Assumption1Report', 'LyapunovSolver',
           'solve_linear_lyapunov', 'generalized_operator',
           'generalized_residual', 'solve_generalized_direct',
           'solve_generalized_fixed_point', 'volterra_series_gramian',
           'spectral_solvability_check', 'assumption1_check',
           'spectral_abscissa', 'DIRECT_MAX_N']

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DEFAULT_Q_MAX = 200
PSD_TOL = 1e-8
# Above this state dimension the n^2 x n^2 dense solve is too costly.
DIRECT_MAX_N = 40
# Iterates beyond this norm are treated as divergent (Frobenius norms
# overflow near 1e154).
_DIVERGED = 1e100


@dataclass(frozen=True, eq=False)
class GramianReport:
    """Gramian and solver diagnostics.

    ``stable`` records the positivity certificate computed by the direct
    solver (``None`` for methods that do not compute it).
    """

    P: np.ndarray
    residual: float
    method: str
    iterations: int
    converged: bool
    min_eig: float
    stable: bool | None = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.P))


@dataclass(frozen=True)
class Assumption1Report:
    alpha: float
    beta: float
    lhs: float
    rhs: float
    holds: bool
    spectral_abscissa_L: float
    beta_argmax: float = field(default=0.0, compare=False)


def spectral_abscissa(A) -> float:
    return float(np.max(np.linalg.eigvals(np.atleast_2d(A)).real))


def _sym(X):
    return 0.5 * (X + X.T)


def _min_eig(P) -> float:
    return float(np.linalg.eigvalsh(_sym(P))[0]) if P.size else 0.0


class LyapunovSolver:
    """Repeated solves of ``A X + X A^T + Q = 0`` for a fixed Hurwitz ``A``.

    The real Schur form of ``A`` is computed once; each solve is then a
    triangular Sylvester solve (LAPACK ``trsyl``).
    """

    def __init__(self, A):
        A = np.array(A, dtype=float, ndmin=2)
        if A.shape[0] != A.shape[1]:
            raise InvalidInput(f'A must be square, got shape {A.shape}')
        abscissa = spectral_abscissa(A)
        if not abscissa < 0:
            raise NotHurwitz(f'matrix is not Hurwitz (spectral abscissa {abscissa:.6g})')
        self.A = A
        self.T, self.U = spla.schur(A, output='real')

    def __call__(self, Q) -> np.ndarray:
        U = self.U
        F = U.T @ Q @ U
        Y, scale, info = lapack.dtrsyl(self.T, self.T, -F, tranb='T')
        if info < 0:
            raise InvalidInput(f'trsyl: illegal argument {-info}')
        return _sym(U @ (Y / scale) @ U.T)


def solve_linear_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A X + X A^T + Q = 0`` for Hurwitz ``A``.

    Returns the symmetrized solution.  Raises :class:`NotHurwitz` otherwise.
    """
    return LyapunovSolver(A)(np.array(Q, dtype=float, ndmin=2))


def generalized_operator(system: BilinearSystem) -> np.ndarray:
    """Matrix of ``P -> N0 P + P N0^T + sum_k N_k P N_k^T`` on ``vec(P)``."""
    n = system.n
    eye = np.eye(n)
    L = np.kron(eye, system.N0) + np.kron(system.N0, eye)
    for N in system.coupling_matrices:
        L += np.kron(N, N)
    return L


def _pi(system, X):
    out = np.zeros_like(X)
    for N in system.coupling_matrices:
        out += N @ X @ N.T
    return out


def generalized_residual(system: BilinearSystem, P) -> float:
    """Normalized Frobenius residual of the generalized Lyapunov equation.

    The residual is divided by the sum of the norms of the individual
    terms, i.e. it is a backward-error style relative residual.
    """
    N0 = system.N0
    BBt = system.B @ system.B.T
    R = N0 @ P + P @ N0.T + _pi(system, P) + BBt
    nP = np.linalg.norm(P)
    scale = 2 * np.linalg.norm(N0) * nP + np.linalg.norm(BBt)
    scale += sum(np.linalg.norm(N) ** 2 for N in system.coupling_matrices) * nP
    return float(np.linalg.norm(R) / scale) if scale > 0 else float(np.linalg.norm(R))


def _report(system, P, method, iterations, converged, stable=None):
    P = _sym(P)
    return GramianReport(P=P, residual=generalized_residual(system, P),
                         method=method, iterations=iterations,
                         converged=converged, min_eig=_min_eig(P),
                         stable=stable)


def _linear_report(system, method):
    P = solve_linear_lyapunov(system.N0, system.B @ system.B.T)
    return _report(system, P, method, 1, True, stable=True)


def _check_psd(report):
    P = report.P
    bound = PSD_TOL * max(1.0, float(np.max(np.abs(P))) if P.size else 1.0)
    if report.min_eig < -bound:
        raise NotPSD(f'Gramian has negative eigenvalue {report.min_eig:.6g}; '
                     'the bilinear system has no stabilizing Gramian')


def solve_generalized_direct(system: BilinearSystem) -> GramianReport:
    """Dense solve of ``L vec(P) = -vec(BB^T)``.

    The same LU factorization also solves ``L vec(X) = -vec(I)``.  Since
    ``L`` is resolvent positive, it is Hurwitz exactly when that ``X`` is
    positive definite; the outcome is reported as ``stable``.

    Raises
    ------
    SingularOperator
        ``L`` is numerically singular.
    NotPSD
        The solution has a clearly negative eigenvalue.
    """
    n = system.n
    if not system.couplings:
        try:
            return _linear_report(system, 'direct')
        except NotHurwitz:
            pass  # fall through: L is then singular or gives an indefinite P
    L = generalized_operator(system)
    lu, piv, info = lapack.dgetrf(L)
    if info > 0:
        raise SingularOperator('generalized Lyapunov operator is singular')
    anorm = np.linalg.norm(L, 1)
    rcond, _ = lapack.dgecon(lu, anorm, norm='1')
    if rcond < np.finfo(float).eps * n * n:
        raise SingularOperator(f'generalized Lyapunov operator is singular '
                               f'(rcond {rcond:.3g})')
    rhs = np.column_stack([-(system.B @ system.B.T).ravel(order='F'),
                           -np.eye(n).ravel(order='F')])
    sol, info = lapack.dgetrs(lu, piv, rhs)
    P = sol[:, 0].reshape(n, n, order='F')
    X = _sym(sol[:, 1].reshape(n, n, order='F'))
    try:
        np.linalg.cholesky(X)
        stable = True
    except np.linalg.LinAlgError:
        stable = False
    report = _report(system, P, 'direct', 1, True, stable=stable)
    _check_psd(report)
    return report


def _tail(step, prev):
    """Geometric estimate of the remaining error after a step of size ``step``."""
    ratio = step / prev if prev > 0 else 0.0
    if not ratio < 1:
        return np.inf
    return step * max(ratio / (1.0 - ratio), 1.0)


def solve_generalized_fixed_point(system: BilinearSystem, tol=DEFAULT_TOL,
                                  max_iter=DEFAULT_MAX_ITER) -> GramianReport:
    """Picard iteration ``P <- Lyap(N0, sum_k N_k P N_k^T + BB^T)`` from 0.

    Converges exactly when the generalized operator is Hurwitz.  Stops once
    the remaining error, extrapolated geometrically from the last two
    Frobenius steps, is below ``tol * (1 + ||P||)`` and the equation
    residual is below ``tol``.
    """
    lyap = LyapunovSolver(system.N0)
    BBt = system.B @ system.B.T
    if not system.couplings:
        return _report(system, lyap(BBt), 'fixed_point', 1, True)
    P = np.zeros_like(BBt)
    step = prev = np.inf
    for it in range(1, max_iter + 1):
        P_new = lyap(_pi(system, P) + BBt)
        prev, step = step, np.linalg.norm(P_new - P)
        scale = 1.0 + np.linalg.norm(P)
        P = P_new
        if not (np.isfinite(step) and scale < _DIVERGED):
            raise MaxIterations(f'fixed-point iteration diverged after {it} iterations')
        if _tail(step, prev) <= tol * scale:
            report = _report(system, P, 'fixed_point', it, True)
            if report.residual <= tol:
                return report
    raise MaxIterations(f'fixed-point iteration did not converge in {max_iter} '
                        f'iterations (last step {step:.3g})')


def volterra_series_gramian(system: BilinearSystem, q_max=DEFAULT_Q_MAX,
                            tol=DEFAULT_TOL):
    """Sum the Volterra-series Gramian terms.

    Returns
    -------
    report : GramianReport
        ``P = X_1 + ... + X_Q`` where ``Q`` is the first index at which the
        geometrically extrapolated tail of the term traces falls below
        ``tol * (1 + trace(partial sum))`` with residual below ``tol``, or
        ``q_max``.  ``converged`` is False when ``q_max``
        was hit first.
    term_traces : list of float
        ``[trace(X_1), ..., trace(X_Q)]``.

    Raises
    ------
    NonConvergent
        Term traces failed to decrease over five consecutive terms.
    """
    lyap = LyapunovSolver(system.N0)
    X = lyap(system.B @ system.B.T)
    P = X.copy()
    traces = [float(np.trace(X))]
    if not system.couplings:
        return _report(system, P, 'series', 1, True), traces
    rising = 0
    converged = False
    for q in range(2, q_max + 1):
        X = lyap(_pi(system, X))
        t = float(np.trace(X))
        traces.append(t)
        P += X
        rising = rising + 1 if t >= traces[-2] else 0
        if rising >= 5:
            raise NonConvergent(f'series term traces nondecreasing over five '
                                f'consecutive terms (term {q}: {t:.6g})')
        if _tail(t, traces[-2]) <= tol * (1.0 + float(np.trace(P))) \
                and generalized_residual(system, _sym(P)) <= tol:
            converged = True
            break
    return _report(system, P, 'series', len(traces), converged), traces


def spectral_solvability_check(system: BilinearSystem):
    """Return ``(abscissa < 0, abscissa)`` for the generalized operator."""
    a = spectral_abscissa(generalized_operator(system))
    return a < 0, a


def assumption1_check(system: BilinearSystem, t_horizon=None, t_samples=512,
                      margin=1e-6) -> Assumption1Report:
    """Evaluate the sufficient convergence condition for the Volterra series.

    ``alpha`` is the decay rate ``-abscissa(N0) * (1 - margin)`` and
    ``beta`` the overshoot ``max_t ||exp(N0 t)||_2 exp(alpha t)``, estimated
    on a log-spaced grid over ``[1e-4, t_horizon]`` (default ``20/alpha``)
    plus ``t = 0`` and refined by bounded scalar maximization around the grid
    maximizer.  The condition holds when
    ``sqrt(sum_k ||N_k N_k^T||_2) < sqrt(2 alpha) / beta``.
    """
    N0 = system.N0
    a0 = spectral_abscissa(N0)
    if not a0 < 0:
        raise NotHurwitz(f'N0 is not Hurwitz (spectral abscissa {a0:.6g})')
    alpha = -a0 * (1.0 - margin)
    if t_horizon is None:
        t_horizon = 20.0 / alpha

    def gain(t):
        return np.linalg.norm(spla.expm(N0 * t), 2) * np.exp(alpha * t)

    grid = np.concatenate([[0.0], np.geomspace(1e-4, t_horizon, t_samples)])
    values = np.array([gain(t) for t in grid])
    i = int(np.argmax(values))
    beta, t_star = float(values[i]), float(grid[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -gain(t), bounds=(lo, hi),
                              method='bounded', options={'xatol': 1e-10 * hi})
        if -res.fun > beta:
            beta, t_star = float(-res.fun), float(res.x)
    lhs = float(np.sqrt(sum(np.linalg.norm(N @ N.T, 2)
                            for N in system.coupling_matrices)))
    rhs = float(np.sqrt(2.0 * alpha) / beta)
    _, abscissa_L = spectral_solvability_check(system)
    return Assumption1Report(alpha=alpha, beta=beta, lhs=lhs, rhs=rhs,
                             holds=bool(lhs < rhs),
                             spectral_abscissa_L=abscissa_L,
                             beta_argmax=t_star)
