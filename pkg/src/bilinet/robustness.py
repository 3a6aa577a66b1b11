"""Vulnerability set function and its structural properties.

``rho(E_a)`` is the squared H2 norm (trace of the reachability Gramian) of
the system obtained by attacking the edges ``E_a``.  Over attack sets for
which the Gramian exists, it is monotone and supermodular; the verifiers
below check both properties exhaustively or on seeded samples.

Attack sets whose system has no stabilizing Gramian are *unsolvable*: the
set function raises :class:`~bilinet.errors.Unsolvable` for them, and the
verifiers skip (and count) any comparison that involves one.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as spla

from .errors import (AttackOutsideGroundSet, InvalidInput, NotPSD, TooLarge,
                     Unsolvable)
from .gramian import (DIRECT_MAX_N, GramianReport, PSD_TOL,
                      solve_generalized_direct, solve_generalized_fixed_point,
                      spectral_abscissa)
from .graphmodel import (AttackSet, BilinearDigraph, BilinearSystem,
                         assemble_system)

log = logging.getLogger(__name__)

__all__ = ['RhoCache', 'PropertyReport', 'Violation', 'LatticeRow',
           'gramian_report', 'h2_norm', 'rho', 'rho_function',
           'RankUpdateRho', 'verify_monotonicity', 'verify_supermodularity',
           'subset_lattice', 'write_lattice_csv', 'write_heatmap',
           'MONOTONE_MAX_EDGES', 'SUPERMODULAR_MAX_EDGES']

MONOTONE_MAX_EDGES = 20
SUPERMODULAR_MAX_EDGES = 12
LATTICE_MAX_EDGES = 20

SetFunction = Callable[[AttackSet], float]


def gramian_report(system: BilinearSystem) -> GramianReport:
    """Gramian of ``system`` or :class:`Unsolvable`.

    Uses the dense direct solver up to ``DIRECT_MAX_N`` states (and requires
    its stability certificate), the fixed-point iteration beyond.
    """
    if system.n <= DIRECT_MAX_N:
        report = solve_generalized_direct(system)
        if not report.stable:
            raise Unsolvable('generalized Lyapunov operator is not Hurwitz; '
                             'no stabilizing Gramian exists')
        return report
    return solve_generalized_fixed_point(system)


def h2_norm(system: BilinearSystem) -> float:
    """Input-to-state H2 norm ``sqrt(trace(P))``."""
    return math.sqrt(max(gramian_report(system).trace, 0.0))


class RhoCache:
    """Thread-safe memo of ``(digraph, attack set) -> (value, report)``.

    Unsolvable outcomes are cached too and re-raised on lookup.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def get_or_compute(self, key, compute):
        with self._lock:
            if key in self._data:
                self.hits += 1
                entry = self._data[key]
                found = True
            else:
                found = False
        if not found:
            try:
                entry = compute()
            except Unsolvable as exc:
                entry = exc
            with self._lock:
                # First writer wins so concurrent callers agree.
                entry = self._data.setdefault(key, entry)
                self.misses += 1
        if isinstance(entry, Unsolvable):
            raise entry
        return entry


def _canonical(digraph, attack_set) -> AttackSet:
    attack = attack_set if isinstance(attack_set, AttackSet) else AttackSet(attack_set)
    ground = set(digraph.vulnerable_edges)
    bad = [e for e in attack if e not in ground]
    if bad:
        raise AttackOutsideGroundSet(
            'attack edges outside the vulnerable set: ' + ', '.join(map(str, bad)))
    return attack


def rho_report(digraph: BilinearDigraph, attack_set=(), cache: RhoCache | None = None):
    """``(rho, GramianReport)`` for one attack set."""
    attack = _canonical(digraph, attack_set)

    def compute():
        report = gramian_report(assemble_system(digraph, attack))
        return report.trace, report

    if cache is None:
        return compute()
    return cache.get_or_compute((digraph, attack), compute)


def rho(digraph: BilinearDigraph, attack_set=(), cache: RhoCache | None = None) -> float:
    """Squared H2 norm of the system with ``attack_set`` attacked."""
    return rho_report(digraph, attack_set, cache)[0]


def rho_function(digraph: BilinearDigraph, cache: RhoCache | None = None) -> SetFunction:
    cache = RhoCache() if cache is None else cache
    return lambda attack: rho(digraph, attack, cache)


class RankUpdateRho:
    """Fast exact ``rho`` for many attack sets of one digraph.

    Every attacked coupling adds a single entry to the vectorized operator
    (``N_k kron N_k`` of an elementary matrix has one nonzero).  After one
    LU factorization of the attack-free operator, each attack set costs a
    ``|E_a| x |E_a|`` Woodbury solve plus an ``n x n`` positivity check.
    Results agree with :func:`rho` to rounding; unsolvable sets raise
    :class:`Unsolvable`.  Requires a Hurwitz drift.
    """

    def __init__(self, digraph: BilinearDigraph):
        self.digraph = digraph
        system = assemble_system(digraph, ())
        n = system.n
        if not spectral_abscissa(system.N0) < 0:
            raise Unsolvable('drift matrix is not Hurwitz')
        eye = np.eye(n)
        L0 = np.kron(eye, system.N0) + np.kron(system.N0, eye)
        lu = spla.lu_factor(L0)
        self.n = n
        self._edges = list(digraph.vulnerable_edges)
        self._pos = {e: i for i, e in enumerate(self._edges)}
        rows, cols, vals = [], [], []
        for e in self._edges:
            N = digraph.coupling(e)
            (i,), (j,) = np.nonzero(N)
            rows.append(i * n + i)
            cols.append(j * n + j)
            vals.append(N[i, j] ** 2)
        U = np.zeros((n * n, len(self._edges)))
        U[rows, np.arange(len(rows))] = vals
        self._Z = spla.lu_solve(lu, U)
        self._cols = np.array(cols, dtype=int)
        rhs = np.column_stack([-(system.B @ system.B.T).ravel(order='F'),
                               -eye.ravel(order='F')])
        self._y = spla.lu_solve(lu, rhs)

    def solve(self, attack_set) -> np.ndarray:
        """Gramian ``P`` for ``attack_set`` (raises :class:`Unsolvable`)."""
        attack = _canonical(self.digraph, attack_set)
        n = self.n
        idx = np.array([self._pos[e] for e in attack], dtype=int)
        y = self._y
        if idx.size:
            Zs = self._Z[:, idx]
            cap = np.eye(idx.size) + Zs[self._cols[idx], :]
            try:
                coef = np.linalg.solve(cap, y[self._cols[idx], :])
            except np.linalg.LinAlgError:
                raise Unsolvable('generalized Lyapunov operator is singular') from None
            y = y - Zs @ coef
        X = y[:, 1].reshape(n, n, order='F')
        try:
            np.linalg.cholesky(0.5 * (X + X.T))
        except np.linalg.LinAlgError:
            raise Unsolvable('generalized Lyapunov operator is not Hurwitz; '
                             'no stabilizing Gramian exists') from None
        P = y[:, 0].reshape(n, n, order='F')
        P = 0.5 * (P + P.T)
        lam = np.linalg.eigvalsh(P)
        if lam[0] < -PSD_TOL * max(1.0, abs(lam[-1])):
            raise NotPSD(f'Gramian has negative eigenvalue {lam[0]:.6g}')
        return P

    def __call__(self, attack_set) -> float:
        return float(np.trace(self.solve(attack_set)))


# -- property verification ---------------------------------------------------

@dataclass
class Violation:
    sets: tuple
    lhs: float
    rhs: float
    gap: float


@dataclass
class PropertyReport:
    """Outcome of a monotonicity or supermodularity check.

    For monotonicity each comparison is ``rho(A) <= rho(A + e)``; for
    supermodularity it is ``rho(A + e) - rho(A) <= rho(B + e) - rho(B)``.
    ``lhs``/``rhs`` of a violation are the two sides and ``gap = lhs - rhs``.
    ``max_violation`` is the largest normalized gap seen (0 if none is
    positive).
    """

    property: str
    mode: str
    tested: int = 0
    skipped: int = 0
    violations: list = field(default_factory=list)
    max_violation: float = 0.0
    tol: float = 1e-9

    @property
    def holds(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [f'property: {self.property}',
               f'mode: {self.mode}',
               f'tested: {self.tested}',
               f'skipped: {self.skipped}',
               f'violations: {len(self.violations)}',
               f'max_violation: {self.max_violation:.6g}',
               f'holds: {"yes" if self.holds else "no"}']
        for v in self.violations[:20]:
            sets = ' '.join(str(s) for s in v.sets)
            out.append(f'  {sets} lhs={v.lhs:.6g} rhs={v.rhs:.6g} gap={v.gap:.6g}')
        return out


def _resolve(digraph, set_function, cache):
    if set_function is None:
        if digraph is None:
            raise InvalidInput('need a digraph or a set function')
        return rho_function(digraph, cache)
    return set_function


def _subset(ground, mask) -> AttackSet:
    return AttackSet(e for i, e in enumerate(ground) if mask >> i & 1)


def _all_values(f, ground) -> np.ndarray:
    """``f`` on every subset, indexed by bitmask; NaN marks unsolvable."""
    vals = np.full(1 << len(ground), np.nan)
    for mask in range(1 << len(ground)):
        try:
            vals[mask] = f(_subset(ground, mask))
        except Unsolvable:
            pass
    return vals


def _parse_mode(mode):
    """``'exhaustive'`` or ``('sampled', seed, trials)``."""
    if mode == 'exhaustive':
        return 'exhaustive', None, None
    if isinstance(mode, tuple) and len(mode) == 3 and mode[0] == 'sampled':
        return mode
    raise InvalidInput(f"mode must be 'exhaustive' or ('sampled', seed, trials), got {mode!r}")


def _ground_of(digraph, ground):
    if ground is not None:
        return list(ground)
    if digraph is None:
        raise InvalidInput('need a digraph or an explicit ground set')
    return list(digraph.vulnerable_edges)


def _record(report, sets, lhs, rhs, tol):
    report.tested += 1
    scale = max(1.0, abs(lhs), abs(rhs))
    gap = lhs - rhs
    report.max_violation = max(report.max_violation, gap / scale)
    if gap > tol * scale:
        report.violations.append(Violation(sets, lhs, rhs, gap))


def verify_monotonicity(digraph: BilinearDigraph | None, mode='exhaustive',
                        tol=1e-9, cache=None, set_function=None,
                        ground=None) -> PropertyReport:
    """Check ``rho(A) <= rho(A + {e})`` (up to ``tol * max(1, |values|)``).

    ``mode`` is ``'exhaustive'`` (all ``A`` and ``e not in A``; at most 20
    vulnerable edges) or ``('sampled', seed, trials)``.  Pass
    ``set_function``/``ground`` to check an arbitrary set function.
    """
    kind, seed, trials = _parse_mode(mode)
    ground = _ground_of(digraph, ground)
    f = _resolve(digraph, set_function, cache)
    report = PropertyReport('monotone', kind if kind == 'exhaustive'
                            else f'sampled(seed={seed}, trials={trials})', tol=tol)
    N = len(ground)
    if kind == 'exhaustive':
        if N > MONOTONE_MAX_EDGES:
            raise TooLarge(f'exhaustive monotonicity needs <= {MONOTONE_MAX_EDGES} '
                           f'vulnerable edges, got {N}')
        vals = _all_values(f, ground)
        masks = np.arange(1 << N)
        for i in range(N):
            bit = 1 << i
            A = masks[(masks & bit) == 0]
            lo, hi = vals[A], vals[A | bit]
            ok = ~(np.isnan(lo) | np.isnan(hi))
            report.skipped += int((~ok).sum())
            report.tested += int(ok.sum())
            if not ok.any():
                continue
            A, lo, hi = A[ok], lo[ok], hi[ok]
            scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
            gap = lo - hi
            report.max_violation = max(report.max_violation, float(np.max(gap / scale)))
            for j in np.flatnonzero(gap > tol * scale):
                report.violations.append(Violation(
                    (_subset(ground, int(A[j])), ground[i]),
                    float(lo[j]), float(hi[j]), float(gap[j])))
        return report

    rng = np.random.default_rng(seed)
    for _ in range(trials):
        if N == 0:
            break
        members = rng.random(N) < 0.5
        free = np.flatnonzero(~members)
        if free.size == 0:
            members[rng.integers(N)] = False
            free = np.flatnonzero(~members)
        i = int(rng.choice(free))
        A = AttackSet(e for e, m in zip(ground, members) if m)
        log.debug('monotone witness A=%s e=%s', A, ground[i])
        try:
            lo, hi = f(A), f(A | ground[i])
        except Unsolvable:
            report.skipped += 1
            continue
        _record(report, (A, ground[i]), lo, hi, tol)
    return report


def _pairs_exhaustive(m):
    """All ``(A, B)`` bitmask pairs over ``m`` bits with ``A`` a proper subset of ``B``."""
    codes = np.arange(3 ** m)
    A = np.zeros_like(codes)
    B = np.zeros_like(codes)
    rest = codes.copy()
    for i in range(m):
        digit = rest % 3
        rest //= 3
        B |= (digit >= 1).astype(codes.dtype) << i
        A |= (digit == 2).astype(codes.dtype) << i
    keep = A != B
    return A[keep], B[keep]


def _spread(masks, positions):
    """Map compact bitmasks onto the bit ``positions`` of the full ground set."""
    out = np.zeros_like(masks)
    for j, p in enumerate(positions):
        out |= ((masks >> j) & 1) << p
    return out


def verify_supermodularity(digraph: BilinearDigraph | None, mode='exhaustive',
                           tol=1e-9, cache=None, set_function=None,
                           ground=None) -> PropertyReport:
    """Check increasing marginals ``f(A+e)-f(A) <= f(B+e)-f(B)``.

    Ranges over ``A`` a proper subset of ``B`` and ``e not in B``; only
    quadruples whose four sets are all solvable are compared.  Exhaustive
    mode supports at most 12 vulnerable edges.
    """
    kind, seed, trials = _parse_mode(mode)
    ground = _ground_of(digraph, ground)
    f = _resolve(digraph, set_function, cache)
    report = PropertyReport('supermodular', kind if kind == 'exhaustive'
                            else f'sampled(seed={seed}, trials={trials})', tol=tol)
    N = len(ground)
    if kind == 'exhaustive':
        if N > SUPERMODULAR_MAX_EDGES:
            raise TooLarge(f'exhaustive supermodularity needs <= '
                           f'{SUPERMODULAR_MAX_EDGES} vulnerable edges, got {N}')
        vals = _all_values(f, ground)
        for i in range(N):
            bit = 1 << i
            others = [p for p in range(N) if p != i]
            a, b = _pairs_exhaustive(N - 1)
            A, B = _spread(a, others), _spread(b, others)
            lhs = vals[A | bit] - vals[A]
            rhs = vals[B | bit] - vals[B]
            ok = ~(np.isnan(lhs) | np.isnan(rhs))
            report.skipped += int((~ok).sum())
            report.tested += int(ok.sum())
            if not ok.any():
                continue
            scale = np.maximum.reduce([np.ones(ok.sum()),
                                       np.abs(vals[A[ok]]), np.abs(vals[A[ok] | bit]),
                                       np.abs(vals[B[ok]]), np.abs(vals[B[ok] | bit])])
            gap = lhs[ok] - rhs[ok]
            report.max_violation = max(report.max_violation, float(np.max(gap / scale)))
            for j in np.flatnonzero(gap > tol * scale):
                Am, Bm = int(A[ok][j]), int(B[ok][j])
                report.violations.append(Violation(
                    (_subset(ground, Am), _subset(ground, Bm), ground[i]),
                    float(lhs[ok][j]), float(rhs[ok][j]), float(gap[j])))
        return report

    rng = np.random.default_rng(seed)
    for _ in range(trials):
        if N < 2:
            break
        e = int(rng.integers(N))
        rest = [p for p in range(N) if p != e]
        inB = rng.random(N - 1) < 0.5
        if not inB.any():
            inB[rng.integers(N - 1)] = True
        Bpos = [p for p, m in zip(rest, inB) if m]
        Apos = [p for p in Bpos if rng.random() < 0.5]
        if len(Apos) == len(Bpos):
            Apos.pop(int(rng.integers(len(Apos))))
        A = AttackSet(ground[p] for p in Apos)
        B = AttackSet(ground[p] for p in Bpos)
        log.debug('supermodular witness A=%s B=%s e=%s', A, B, ground[e])
        try:
            lhs = f(A | ground[e]) - f(A)
            rhs = f(B | ground[e]) - f(B)
        except Unsolvable:
            report.skipped += 1
            continue
        report.tested += 1
        scale = max(1.0, abs(f(A)), abs(f(A | ground[e])),
                    abs(f(B)), abs(f(B | ground[e])))
        gap = lhs - rhs
        report.max_violation = max(report.max_violation, gap / scale)
        if gap > tol * scale:
            report.violations.append(Violation((A, B, ground[e]), lhs, rhs, gap))
    return report


# -- lattice -----------------------------------------------------------------

@dataclass(frozen=True)
class LatticeRow:
    attack_set: AttackSet
    value: float | None

    @property
    def solvable(self) -> bool:
        return self.value is not None


def _lattice_order(ground):
    for m in range(len(ground) + 1):
        for combo in itertools.combinations(sorted(ground), m):
            yield AttackSet(combo)


def subset_lattice(digraph: BilinearDigraph, cache: RhoCache | None = None,
                   workers: int = 1, set_function=None) -> list[LatticeRow]:
    """``rho`` on every subset of the vulnerable edges.

    Rows are ordered by cardinality, then lexicographically; unsolvable sets
    have ``value=None``.  ``workers > 1`` evaluates in a thread pool without
    changing the row order.
    """
    N = len(digraph.vulnerable_edges)
    if N > LATTICE_MAX_EDGES:
        raise TooLarge(f'lattice needs <= {LATTICE_MAX_EDGES} vulnerable edges, got {N}')
    f = _resolve(digraph, set_function, cache if cache is not None else RhoCache())
    subsets = list(_lattice_order(digraph.vulnerable_edges))

    def row(attack):
        try:
            return LatticeRow(attack, float(f(attack)))
        except Unsolvable:
            return LatticeRow(attack, None)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(row, subsets))
    return [row(a) for a in subsets]


def write_lattice_csv(rows, fh):
    """Columns: cardinality, edges (``u->v`` joined by ``;``), rho, solvable."""
    writer = csv.writer(fh, lineterminator='\n')
    writer.writerow(['cardinality', 'edges', 'rho', 'solvable'])
    for r in rows:
        writer.writerow([len(r.attack_set), r.attack_set.label(),
                         '' if r.value is None else f'{r.value:.17g}',
                         int(r.solvable)])


def write_heatmap(rows, fh):
    """One line per cardinality; values in lexicographic subset order."""
    by_card = {}
    for r in rows:
        by_card.setdefault(len(r.attack_set), []).append(
            'nan' if r.value is None else f'{r.value:.17g}')
    for m in sorted(by_card):
        fh.write(' '.join(by_card[m]) + '\n')
