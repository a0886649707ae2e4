# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Replication experiments: one seeded random instance per run, evaluated for
every n of the requested range on a thread pool. Rows come back in n order.
'''

import logging
from collections import namedtuple
from functools import partial
from multiprocessing.pool import ThreadPool
import numpy as np
from tqdm import tqdm
from monoplan import random_instances
from monoplan.errors import expect
from monoplan.plans import w_rho
from monoplan.tangent import (align_witnesses, convexity_witness, tangent_witness, truncate_atoms,
                              truncate_support, witness_atom, witness_function)
import monoplan.parse_args

logger = logging.getLogger("root")

LEMMAS = monoplan.parse_args.LEMMAS

ExperimentRow = namedtuple('ExperimentRow', ['n', 'tau_n', 'wrho_to_target', 'monotone_ok'])
ExperimentConfig = namedtuple('ExperimentConfig', ['lemma', 'n_values', 'seed', 'out', 'workers'])


def make_config(lemma, n_values, seed=None, out=None, workers=None):
    '''ExperimentConfig with the command line defaults for unset knobs.'''
    defaults = monoplan.parse_args.default_args()
    return ExperimentConfig(lemma, tuple(n_values), defaults.seed if seed is None else seed, out,
                            defaults.workers if workers is None else workers)


def _instance(lemma, seed):
    rng = np.random.default_rng(seed)
    if lemma == 'trunc-supp':
        return random_instances.bounded_plan(rng)
    if lemma == 'trunc-atoms':
        return random_instances.atomic_plan(rng, max_atoms=12, max_fiber_points=4)
    if lemma == 'atom-witness':
        return random_instances.atom_witness_instance(rng)
    g, base = random_instances.jump_map(rng)
    if lemma == 'fn-witness':
        return g, base
    nu = random_instances.atomic_measure(rng, 4, grid=[-1.0, -0.5, 0.0, 0.5, 1.0])
    return g, base, nu


def _step_row(step):
    return ExperimentRow(step.n, step.tau_n, step.wrho_to_target, step.monotone_ok)


def _evaluate(lemma, instance, n):
    if lemma == 'trunc-supp':
        return ExperimentRow(n, None, w_rho(truncate_support(instance, n), instance), None)
    if lemma == 'trunc-atoms':
        return ExperimentRow(n, None, w_rho(truncate_atoms(instance, n), instance), None)
    if lemma == 'fn-witness':
        return _step_row(witness_function(*instance, n))
    if lemma == 'atom-witness':
        return _step_row(witness_atom(*instance, n))
    g, base, nu = instance
    first, second = align_witnesses(witness_function(g, base, n),
                                    witness_atom(nu, base.atoms[0].x, base, n))
    return _step_row(convexity_witness(first, second))


def _map_ordered(function, n_values, workers, description):
    with ThreadPool(workers) as pool:
        return list(tqdm(pool.imap(function, n_values), total=len(n_values), desc=description,
                         leave=False))


def run_experiment(config):
    '''Returns one ExperimentRow per n of the configuration, in n order.'''
    expect(config.lemma in LEMMAS, f"Unknown lemma {config.lemma!r}; expected one of {LEMMAS}.")
    expect(len(config.n_values) > 0 and
           all(a < b for a, b in zip(config.n_values[:-1], config.n_values[1:])),
           "The n range must be nonempty and increasing.")
    logger.info("Running %s on %d values of n (seed %d).", config.lemma, len(config.n_values),
                config.seed)
    instance = _instance(config.lemma, config.seed)
    return _map_ordered(partial(_evaluate, config.lemma, instance), config.n_values,
                        config.workers, config.lemma)


def witness_rows(plan, n_values, workers=None):
    '''Tangent witness rows for a member plan, one per n.'''
    workers = monoplan.parse_args.default_args().workers if workers is None else workers
    return _map_ordered(lambda n: _step_row(tangent_witness(plan, n)), tuple(n_values), workers,
                        "witness")
