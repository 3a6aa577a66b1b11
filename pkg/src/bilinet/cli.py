"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 unsolvable system, 4 property
violation, 5 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import __version__
from .errors import InvalidInput, NumericalFailure, Unsolvable
from .gramian import (DEFAULT_TOL, assumption1_check,
                      solve_generalized_fixed_point, volterra_series_gramian)
from .graphmodel import AttackSet, assemble_system, load_graph_spec, parse_edge_list
from .robustness import (RankUpdateRho, RhoCache, rho_function, rho_report,
                         subset_lattice, verify_monotonicity,
                         verify_supermodularity, write_heatmap,
                         write_lattice_csv)
from .selection import (MAX_SUBSETS, brute_force_min, gap_table, protect,
                        write_gap_csv)
from .simulate import DisturbanceSpec, integrate, monte_carlo_energy

EXIT_OK, EXIT_INVALID, EXIT_UNSOLVABLE, EXIT_VIOLATION, EXIT_NUMERICAL = 0, 2, 3, 4, 5


def g6(x) -> str:
    return f'{x:.6g}'


def _attack(digraph, text):
    return AttackSet(parse_edge_list(text or ''))


def _evaluator(digraph, args, cache):
    if getattr(args, 'fast', False):
        return RankUpdateRho(digraph)
    return rho_function(digraph, cache)


def cmd_analyze(args, out):
    digraph = load_graph_spec(args.graph)
    attack = _attack(digraph, args.attack)
    system = assemble_system(digraph, attack)
    if args.method == 'fixed_point':
        report = solve_generalized_fixed_point(system, tol=args.tol)
    elif args.method == 'series':
        report = volterra_series_gramian(system, tol=args.tol)[0]
    else:
        report = rho_report(digraph, attack)[1]
    value = report.trace
    print(f'attack set: {attack}', file=out)
    print(f'rho: {g6(value)}', file=out)
    print(f'h2_norm: {g6(math.sqrt(max(value, 0.0)))}', file=out)
    print(f'solver: {report.method}', file=out)
    print(f'residual: {g6(report.residual)}', file=out)
    print(f'iterations: {report.iterations}', file=out)
    print(f'min_eig: {g6(report.min_eig)}', file=out)
    a1 = assumption1_check(system)
    print(f'assumption1: {"holds" if a1.holds else "fails"}', file=out)
    print(f'  alpha: {g6(a1.alpha)}', file=out)
    print(f'  beta: {g6(a1.beta)}', file=out)
    print(f'  lhs: {g6(a1.lhs)}', file=out)
    print(f'  rhs: {g6(a1.rhs)}', file=out)
    print(f'  operator_abscissa: {g6(a1.spectral_abscissa_L)}', file=out)
    return EXIT_OK


def cmd_lattice(args, out):
    digraph = load_graph_spec(args.graph)
    cache = RhoCache()
    rows = subset_lattice(digraph, cache, workers=args.workers,
                          set_function=RankUpdateRho(digraph) if args.fast else None)
    with open(args.out, 'w', encoding='utf-8', newline='') as fh:
        write_lattice_csv(rows, fh)
    heatmap = args.heatmap or args.out.rsplit('.', 1)[0] + '.heatmap.txt'
    with open(heatmap, 'w', encoding='utf-8') as fh:
        write_heatmap(rows, fh)
    unsolvable = sum(not r.solvable for r in rows)
    print(f'rows: {len(rows)}', file=out)
    print(f'unsolvable: {unsolvable}', file=out)
    print(f'csv: {args.out}', file=out)
    print(f'heatmap: {heatmap}', file=out)
    return EXIT_OK


def _print_selection(res, k, out):
    print(f'method: {res.method}', file=out)
    print(f'budget k: {k}', file=out)
    print(f'attacked (m={len(res.attack_set)}): {res.attack_set}', file=out)
    print(f'protected: {res.protected_set}', file=out)
    print(f'rho: {g6(res.value)}', file=out)
    print(f'evaluations: {res.evaluations}', file=out)
    if res.marginals:
        print('marginals:', file=out)
        for i, mg in enumerate(res.marginals, 1):
            tie = ' (tie)' if mg.tied else ''
            print(f'  step {i}: {mg.edge} {mg.value:+.6g}{tie}', file=out)


def _selection_json(res, k):
    return {
        'method': res.method,
        'budget': k,
        'attack_set': [str(e) for e in res.attack_set],
        'protected_set': [str(e) for e in res.protected_set],
        'value': res.value,
        'evaluations': res.evaluations,
        'marginals': [{'edge': str(m.edge), 'value': m.value, 'tied': m.tied}
                      for m in res.marginals],
    }


def cmd_protect(args, out):
    digraph = load_graph_spec(args.graph)
    N = len(digraph.vulnerable_edges)
    k = args.k
    if not 1 <= k <= N:
        raise InvalidInput(f'budget k must satisfy 1 <= k <= {N}, got {k}')
    cache = RhoCache()
    evaluator = _evaluator(digraph, args, cache)
    m = N - k
    brute_ok = math.comb(N, m) <= MAX_SUBSETS
    doc = {}
    if args.method == 'both':
        row = gap_table(digraph, [m], cache, evaluator)[0]
        print(f'm: {m}', file=out)
        print(f'greedy: {g6(row.greedy_value)} {row.greedy_set}', file=out)
        print(f'brute: {g6(row.brute_value)} {row.brute_set}', file=out)
        print(f'ratio: {g6(row.ratio)}', file=out)
        doc = {'m': m, 'greedy_value': row.greedy_value, 'brute_value': row.brute_value,
               'ratio': row.ratio, 'greedy_set': [str(e) for e in row.greedy_set],
               'brute_set': [str(e) for e in row.brute_set]}
    else:
        res = protect(digraph, k, args.method, cache, seed=args.seed,
                      repeats=args.repeats, evaluator=evaluator)
        _print_selection(res, k, out)
        doc = _selection_json(res, k)
        if args.method != 'brute' and brute_ok:
            best = brute_force_min(digraph, m, cache, evaluator)
            ratio = res.value / best.value if best.value else 1.0
            print(f'gap: {args.method} {g6(res.value)} brute {g6(best.value)} '
                  f'ratio {g6(ratio)}', file=out)
            doc['brute_value'] = best.value
            doc['ratio'] = ratio
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write('\n')
    return EXIT_OK


def cmd_gap(args, out):
    digraph = load_graph_spec(args.graph)
    ms = [int(x) for x in args.m.split(',') if x.strip()] if args.m else \
        list(range(1, len(digraph.vulnerable_edges)))
    cache = RhoCache()
    rows = gap_table(digraph, ms, cache, _evaluator(digraph, args, cache))
    print('m greedy brute ratio', file=out)
    for r in rows:
        print(f'{r.m} {g6(r.greedy_value)} {g6(r.brute_value)} {g6(r.ratio)}', file=out)
    if args.out:
        with open(args.out, 'w', encoding='utf-8', newline='') as fh:
            write_gap_csv(rows, fh)
    return EXIT_OK


def cmd_verify(args, out):
    digraph = load_graph_spec(args.graph)
    mode = 'exhaustive' if args.mode == 'exhaustive' else ('sampled', args.seed, args.trials)
    fn = verify_monotonicity if args.property == 'monotone' else verify_supermodularity
    report = fn(digraph, mode, tol=args.tol, cache=RhoCache())
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.holds else EXIT_VIOLATION


def cmd_simulate(args, out):
    digraph = load_graph_spec(args.graph)
    attack = _attack(digraph, args.attack)
    system = assemble_system(digraph, attack)
    value = rho_report(digraph, attack)[0]
    est = monte_carlo_energy(system, args.noise, args.samples, horizon=args.horizon,
                             dt=args.dt, seed=args.seed)
    z = (est.mean - value) / est.stderr if est.stderr > 0 else 0.0
    print(f'attack set: {attack}', file=out)
    print(f'energy: {g6(est.mean)} +/- {g6(est.stderr)} (samples {est.samples}, '
          f'diverged {est.diverged})', file=out)
    print(f'rho: {g6(value)}', file=out)
    print(f'z: {g6(z)}', file=out)
    if args.trajectory:
        horizon = args.horizon or 10.0
        traj = integrate(system, DisturbanceSpec.white(args.noise, seed=args.seed),
                         DisturbanceSpec.white(args.noise, seed=args.seed + 1),
                         horizon=horizon, dt=args.dt)
        with open(args.trajectory, 'w', encoding='utf-8', newline='') as fh:
            traj.write_csv(fh)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='bilinet',
        description='H2 vulnerability analysis and edge protection for bilinear networks.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('analyze', help='rho, H2 norm and solver diagnostics for one attack set')
    p.add_argument('graph')
    p.add_argument('--attack', default='', help='attacked edges, e.g. "1->2,2->3"')
    p.add_argument('--method', choices=['direct', 'fixed_point', 'series'], default='direct')
    p.add_argument('--tol', type=float, default=DEFAULT_TOL,
                   help='stopping tolerance for the iterative methods')
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser('lattice', help='rho for every subset of vulnerable edges')
    p.add_argument('graph')
    p.add_argument('--out', required=True, help='CSV output path')
    p.add_argument('--heatmap', help='heatmap-data path (default: <out>.heatmap.txt)')
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--fast', action='store_true', help='use the rank-update evaluator')
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser('protect', help='choose k edges to protect')
    p.add_argument('graph')
    p.add_argument('-k', type=int, required=True, help='number of protected edges')
    p.add_argument('--method', choices=['greedy', 'brute', 'randomized', 'both'],
                   default='greedy')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--repeats', type=int, default=20)
    p.add_argument('--out', help='write the result as JSON')
    p.add_argument('--fast', action='store_true', help='use the rank-update evaluator')
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser('gap', help='greedy versus brute force over attack cardinalities')
    p.add_argument('graph')
    p.add_argument('--m', help='comma-separated attack cardinalities (default 1..|Ev|-1)')
    p.add_argument('--out', help='CSV output path')
    p.add_argument('--fast', action='store_true', help='use the rank-update evaluator')
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser('verify', help='check monotonicity or supermodularity of rho')
    p.add_argument('graph')
    p.add_argument('--property', choices=['monotone', 'supermodular'], required=True)
    p.add_argument('--mode', choices=['exhaustive', 'sampled'], default='exhaustive')
    p.add_argument('--trials', type=int, default=1000)
    p.add_argument('--tol', type=float, default=1e-9)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser('simulate', help='Monte-Carlo output energy versus rho')
    p.add_argument('graph')
    p.add_argument('--attack', default='')
    p.add_argument('--noise', type=float, default=1.0)
    p.add_argument('--samples', type=int, default=500)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--dt', type=float, default=1e-3)
    p.add_argument('--horizon', type=float, default=None)
    p.add_argument('--trajectory', help='also write one noisy trajectory as CSV')
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except InvalidInput as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_INVALID
    except Unsolvable as exc:
        print(f'unsolvable: {exc}', file=sys.stderr)
        return EXIT_UNSOLVABLE
    except (NumericalFailure, ArithmeticError, OverflowError) as exc:
        print(f'numerical failure: {exc}', file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_INVALID


def main_entry():
    sys.exit(main())


if __name__ == '__main__':
    main_entry()
