# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Parser for all MonoPlan command line arguments.
'''

import argparse
import os
from monoplan.errors import UsageError

DEFAULT_GRID_CELLS = 64
DEFAULT_BINS = 256
DEFAULT_WORKERS = 8
SEED_VARIABLE = "MONOPLAN_SEED"

LEMMAS = ('trunc-supp', 'trunc-atoms', 'fn-witness', 'atom-witness', 'convexity')
ALGEBRA_OPERATIONS = ('scale', 'push', 'add', 'truncate-support', 'truncate-atoms')


class _Parser(argparse.ArgumentParser):
    '''Reports bad arguments as UsageError instead of exiting.'''

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def n_range(text):
    '''Parse "1:16" (inclusive) or "1,2,4" into a tuple of increasing positive integers.'''
    try:
        if ':' in text:
            first, last = (int(part) for part in text.split(':'))
            values = tuple(range(first, last + 1))
        else:
            values = tuple(int(part) for part in text.split(','))
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"invalid n range {text!r}") from error
    if not values or values[0] < 1 or any(a >= b for a, b in zip(values[:-1], values[1:])):
        raise argparse.ArgumentTypeError(f"n range {text!r} must be nonempty, positive, increasing")
    return values


def _common_parser():
    parser = _Parser(add_help=False, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument('--verbose', action='store_true', help='Log numeric details.')
    parser.add_argument('--seed', type=int, default=None,
                        help=f'Random seed (overrides {SEED_VARIABLE}; 0 if neither is set).')
    parser.add_argument('--grid-cells', type=int, default=DEFAULT_GRID_CELLS,
                        help='''Cells per diffuse fiber piece for quantile vectors and for
                                discretizing spread fibers under x-dependent pushes.''')
    parser.add_argument('--bins', type=int, default=DEFAULT_BINS,
                        help='Equal-mass atoms replacing a diffuse base before projecting.')
    parser.add_argument('--workers', type=int, default=DEFAULT_WORKERS,
                        help='Threads used to evaluate the values of n.')
    parser.add_argument('--oracle', action='store_true', help=argparse.SUPPRESS)
    return parser


def _get_parser():
    common = _common_parser()
    parser = _Parser(
        prog='monoplan',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description="""Distances, cone membership, projection and tangent analysis for transport
plans with a fixed first marginal on the real line. Results are printed as JSON (or CSV for
experiments) on stdout; diagnostics go to stderr.""")
    commands = parser.add_subparsers(dest='command', metavar='command', required=True)

    def command(name, help_text):
        return commands.add_parser(name, parents=[common], help=help_text, description=help_text,
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    sub = command('validate', 'Check a measure or plan JSON file.')
    sub.add_argument('file', help='Path to a measure or plan JSON file.')

    sub = command('w2', 'Quadratic Wasserstein distance between two measures.')
    sub.add_argument('first', help='Path to the first measure.')
    sub.add_argument('second', help='Path to the second measure.')

    sub = command('dist', 'Fibered distance between two plans over the same base.')
    sub.add_argument('first', help='Path to the first plan.')
    sub.add_argument('second', help='Path to the second plan.')

    sub = command('monotone', 'Cone membership certificate of a plan.')
    sub.add_argument('plan', help='Path to a plan.')

    sub = command('lambda-max', 'Supremum of the admissible scalings of a plan.')
    sub.add_argument('plan', help='Path to a plan.')

    sub = command('project', 'Metric projection of a plan onto the monotone cone.')
    sub.add_argument('plan', help='Path to a plan.')

    sub = command('tangent', 'Tangent cone membership and decomposition of a plan.')
    sub.add_argument('plan', help='Path to a plan.')

    sub = command('witness', 'Tangent witness sequence of a member plan as CSV.')
    sub.add_argument('plan', help='Path to a plan.')
    sub.add_argument('--n', type=n_range, default=n_range("1:16"), help='Values of n.')
    sub.add_argument('--out', help='CSV output path (stdout if omitted).')

    sub = command('algebra', 'Plan operations.')
    sub.add_argument('operation', choices=ALGEBRA_OPERATIONS)
    sub.add_argument('plan', help='Path to a plan.')
    sub.add_argument('second', nargs='?', default=None, help='Second plan (for add).')
    sub.add_argument('--factor', type=float, default=1.0, help='Scale factor (scale).')
    sub.add_argument('--c0', type=float, default=0.0, help='Constant term (push).')
    sub.add_argument('--c1', type=float, default=0.0, help='Coefficient of x (push).')
    sub.add_argument('--c2', type=float, default=1.0, help='Coefficient of y (push).')
    sub.add_argument('--strategy', choices=('comonotone', 'product'), default='comonotone',
                     help='Gluing used by add.')
    sub.add_argument('--level', type=float, default=1.0, help='Support bound (truncate-support).')
    sub.add_argument('--count', type=int, default=1, help='Atoms kept (truncate-atoms).')

    sub = command('experiment', 'Run a replication experiment and write CSV.')
    sub.add_argument('--lemma', choices=LEMMAS, required=True, help='Construction to replicate.')
    sub.add_argument('--n', type=n_range, default=n_range("1:16"), help='Values of n.')
    sub.add_argument('--out', help='CSV output path (stdout if omitted).')
    return parser


def resolve_seed(seed, environ=None):
    '''Seed precedence: flag, then MONOPLAN_SEED, then 0.'''
    environ = os.environ if environ is None else environ
    if seed is not None:
        return seed
    if environ.get(SEED_VARIABLE):
        try:
            return int(environ[SEED_VARIABLE])
        except ValueError as error:
            raise UsageError(f"{SEED_VARIABLE} must be an integer.") from error
    return 0


def get_args(args=None):
    '''If args=None, get arguments from command line. Otherwise get arguments
    from the list provided. The seed is resolved against the environment.'''
    parsed = _get_parser().parse_args(args)
    parsed.seed = resolve_seed(parsed.seed)
    return parsed


def default_args():
    '''Get the default values of the options shared by all commands.'''
    parsed = _common_parser().parse_args([])
    parsed.seed = resolve_seed(parsed.seed)
    return parsed
