# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Command line front end. Every subcommand reads measure or plan JSON files,
prints a JSON result (or CSV for experiments and witnesses) on stdout and
returns the process exit code: 0 on success, 1 for invalid input, 2 for a
numeric failure and 3 for bad usage.
'''

import json
import logging
import math
import sys
import coloredlogs
from monoplan import cone, oracle, plans, spreadsheet, tangent
from monoplan.errors import DomainError, MonoplanError, UsageError
from monoplan.experiments import make_config, run_experiment, witness_rows
from monoplan.measures import ScalarMeasure, wasserstein2
import monoplan.parse_args

VERSION = "1.0.0"

LOGO = r"""
c __  __                    r___  _
c|  \/  | ___  _ __   ___  r| _ \| | __ _  _ _
c| |\/| |/ _ \| '_ \ / _ \ r|  _/| |/ _` || ' \
c|_|  |_|\___/|_| |_|\___/ r|_|  |_|\__,_||_||_|
"""
LOGO = LOGO.replace("r", '\33[31;1m')  # Red
LOGO = LOGO.replace("c", '\33[96;1m')  # Cyan

logger = logging.getLogger("root")


def _load(path):
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as error:
        raise DomainError(f"Cannot read {path}: {error.strerror}.") from error
    except json.JSONDecodeError as error:
        raise DomainError(f"{path} is not valid JSON: {error}.") from error


def _load_plan(path):
    return plans.FiberPlan.from_json(_load(path))


def _emit(result):
    print(json.dumps(result, separators=(',', ':'), allow_nan=False))


def _write_csv(rows, out):
    text = spreadsheet.rows_to_csv(rows)
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        logger.info("Wrote %d rows to %s.", len(rows), out)


def validate(args):
    obj = _load(args.file)
    if isinstance(obj, dict) and "plan" in obj:
        obj = obj["plan"]
    if isinstance(obj, dict) and "base" in obj:
        plan = plans.FiberPlan.from_json(obj)
        return {"kind": "plan", "valid": True, "second_moment": plan.second_moment()}
    measure = ScalarMeasure.from_json(obj)
    return {"kind": "measure", "valid": True, "second_moment": measure.second_moment(),
            "raw_total": measure.raw_total}


def w2(args):
    first, second = ScalarMeasure.from_json(_load(args.first)), ScalarMeasure.from_json(_load(args.second))
    distance = oracle.oracle_w2(first, second) if args.oracle else wasserstein2(first, second)
    return {"w2": distance}


def dist(args):
    first, second = _load_plan(args.first), _load_plan(args.second)
    distance = plans.w_rho_via_adm(first, second) if args.oracle else plans.w_rho(first, second)
    return {"w_rho": distance}


def monotone(args):
    return cone.is_monotone(_load_plan(args.plan)).to_json()


def lambda_max(args):
    plan = _load_plan(args.plan)
    if args.oracle:
        sup_tau = oracle.oracle_lambda_max(plan)
        return {"sup_tau": None if math.isinf(sup_tau) else sup_tau,
                "unbounded": math.isinf(sup_tau), "attained": None}
    return cone.lambda_max(plan).to_json()


def project(args):
    plan = cone.atomize(_load_plan(args.plan), args.bins)
    if args.oracle:
        projection = oracle.oracle_project(plan)
    else:
        projection = cone.project_cone(plan, args.grid_cells)
    return {"distance": projection.distance, "plan": projection.plan.to_json()}


def tangent_command(args):
    member, decomposition = tangent.tangent_membership(_load_plan(args.plan))
    return {"member": member,
            "decomposition": None if decomposition is None else decomposition.to_json()}


def witness(args):
    _write_csv(witness_rows(_load_plan(args.plan), args.n, args.workers), args.out)


def algebra(args):
    plan = _load_plan(args.plan)
    if args.operation == 'scale':
        result = plans.fiber_affine_push(plan, 0.0, 0.0, args.factor, args.grid_cells)
    elif args.operation == 'push':
        result = plans.fiber_affine_push(plan, args.c0, args.c1, args.c2, args.grid_cells)
    elif args.operation == 'add':
        if args.second is None:
            raise UsageError("algebra add needs a second plan.")
        result = plans.oplus_add(plans.glue(plan, _load_plan(args.second), args.strategy))
    elif args.operation == 'truncate-support':
        result = tangent.truncate_support(plan, args.level)
    else:
        result = tangent.truncate_atoms(plan, args.count)
    return result.to_json()


def experiment(args):
    config = make_config(args.lemma, args.n, args.seed, args.out, args.workers)
    _write_csv(run_experiment(config), config.out)


COMMANDS = {
    'validate': validate,
    'w2': w2,
    'dist': dist,
    'monotone': monotone,
    'lambda-max': lambda_max,
    'project': project,
    'tangent': tangent_command,
    'witness': witness,
    'algebra': algebra,
    'experiment': experiment,
}


def run(argv=None):
    '''Runs one subcommand and returns the exit code.'''
    try:
        args = monoplan.parse_args.get_args(argv)
    except UsageError as error:
        print(error, file=sys.stderr)
        return error.exit_code
    except SystemExit as done:  # --help
        return done.code or 0

    coloredlogs.install(level='DEBUG' if args.verbose else 'INFO', stream=sys.stderr,
                        fmt='%(asctime)s %(levelname)s: %(message)s', datefmt='%H:%M:%S')
    if args.verbose:
        print(LOGO + '\u001b[0mv' + VERSION + "\n", file=sys.stderr)

    try:
        result = COMMANDS[args.command](args)
    except MonoplanError as error:
        logger.error("%s", error)
        return error.exit_code
    if result is not None:
        _emit(result)
    return 0


def main():
    sys.exit(run())
