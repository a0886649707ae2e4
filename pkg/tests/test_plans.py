# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

import math
import logging
import numpy as np
import pytest
from monoplan import random_instances
from monoplan.errors import DomainError, SizeError
from monoplan.measures import PiecewiseAffineMap, ScalarMeasure
from monoplan.plans import (ConstFiber, FiberPlan, MapFiber, common_refinement, comonotone_coupling,
                            fiber_affine_push, glue, oplus_add, optimal_glue, product_coupling,
                            w_rho, w_rho_via_adm)

TWO_ATOMS = ScalarMeasure(atoms=[(0, 0.5), (1, 0.5)])
SPREAD = ScalarMeasure(atoms=[(-1, 0.5), (1, 0.5)])


def dirac_plan(*values):
    return FiberPlan(TWO_ATOMS, [ScalarMeasure.dirac(v) for v in values])


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(11)


def test_w_rho_cases():
    zero = dirac_plan(0, 0)
    assert(w_rho(zero, zero) == 0)
    assert(w_rho(zero, dirac_plan(1, 3)) == pytest.approx(math.sqrt(5), abs=1e-12))
    mixed = FiberPlan(TWO_ATOMS, [ScalarMeasure(atoms=[(0, 0.5), (2, 0.5)]),
                                  ScalarMeasure.dirac(0)])
    assert(w_rho(zero, mixed) == pytest.approx(1, abs=1e-12))


def test_w_rho_on_diffuse_pieces():
    base = ScalarMeasure.uniform(0, 1)
    identity = FiberPlan(base, [], [MapFiber(0, 1)])
    zero = FiberPlan.zero(base)
    assert(w_rho(identity, zero) == pytest.approx(math.sqrt(1 / 3), abs=1e-12))
    spread = FiberPlan(base, [], [ConstFiber(ScalarMeasure(atoms=[(-1, 0.5), (1, 0.5)]))])
    assert(w_rho(zero, spread) == pytest.approx(1, abs=1e-12))


def test_w_rho_needs_same_base():
    other = FiberPlan(ScalarMeasure(atoms=[(0, 0.5), (2, 0.5)]), [ScalarMeasure.dirac(0)] * 2)
    with pytest.raises(DomainError, match="atom 1"):
        w_rho(dirac_plan(0, 0), other)


def test_w_rho_via_adm_cases():
    zero = dirac_plan(0, 0)
    assert(w_rho_via_adm(zero, dirac_plan(1, 3)) == pytest.approx(math.sqrt(5), abs=1e-12))
    mixed = FiberPlan(TWO_ATOMS, [ScalarMeasure(atoms=[(0, 0.5), (2, 0.5)]),
                                  ScalarMeasure.dirac(0)])
    assert(w_rho_via_adm(zero, mixed) == pytest.approx(1, abs=1e-12))
    assert(w_rho_via_adm(mixed, mixed) == pytest.approx(0, abs=1e-12))


def test_w_rho_via_adm_size_limit():
    wide = ScalarMeasure(atoms=[(k, 1) for k in range(9)])
    plan = FiberPlan(ScalarMeasure.dirac(0), [wide])
    with pytest.raises(SizeError):
        w_rho_via_adm(plan, plan)


def test_w_rho_via_adm_agrees_with_w_rho(rng):
    for _ in range(100):
        first, second = random_instances.atomic_plan_pair(rng, max_fiber_points=5)
        assert(w_rho_via_adm(first, second) ** 2 == pytest.approx(w_rho(first, second) ** 2, abs=1e-9))


def test_w_rho_scaling_law(rng):
    for _ in range(100):
        first, second = random_instances.atomic_plan_pair(rng)
        for factor in (0.5, 2.0, 10.0):
            scaled = w_rho(fiber_affine_push(first, 0, -factor, factor),
                           fiber_affine_push(second, 0, -factor, factor))
            assert(scaled == pytest.approx(factor * w_rho(first, second), abs=1e-9))


def test_fiber_affine_push_identity_and_scale():
    plan = FiberPlan(ScalarMeasure([(2, 0.5)], [(0, 1, 0.5)]), [SPREAD], [MapFiber(1, 2)])
    assert(w_rho(fiber_affine_push(plan, 0, 0, 1), plan) == 0)
    scaled = fiber_affine_push(dirac_plan(3, -1), 0, 0, 2)
    assert([fiber.atoms[0].x for fiber in scaled.atom_fibers] == [6, -2])
    moved = fiber_affine_push(plan, 1, 1, 2)
    assert(moved.piece_fibers[0] == MapFiber(3, 5))


def test_fiber_affine_push_round_trip(rng):
    for _ in range(50):
        plan = random_instances.atomic_plan(rng)
        tau = float(rng.choice([0.25, 0.5, 2.0]))
        back = fiber_affine_push(fiber_affine_push(plan, 0, 1, tau), 0, -1 / tau, 1 / tau)
        assert(w_rho(back, plan) <= 1e-12)


def test_fiber_affine_push_discretizes_spread_piece_fibers(caplog):
    plan = FiberPlan(ScalarMeasure.uniform(0, 1), [], [ConstFiber(SPREAD)])
    with caplog.at_level(logging.WARNING, logger="root"):
        pushed = fiber_affine_push(plan, 0, 1, 1, sub_cells=8)
    assert(len(pushed.base.pieces) == 8)
    assert(all(isinstance(fiber, ConstFiber) for fiber in pushed.piece_fibers))
    assert("discretized" in caplog.text)
    dirac = FiberPlan(ScalarMeasure.uniform(0, 1), [], [ConstFiber(ScalarMeasure.dirac(2))])
    assert(fiber_affine_push(dirac, 0, 1, 1).piece_fibers == (MapFiber(2, 1),))


def test_glue_cases():
    diagonal = comonotone_coupling(SPREAD, SPREAD)
    assert(np.array_equal(diagonal, [[-1, -1, 0.5], [1, 1, 0.5]]))
    for coupling in (comonotone_coupling, product_coupling):
        assert(np.array_equal(coupling(ScalarMeasure.dirac(2), ScalarMeasure.dirac(5)), [[2, 5, 1]]))
    product = product_coupling(SPREAD, SPREAD)
    assert(product.shape == (4, 3))
    assert(np.all(product[:, 2] == 0.25))


def test_oplus_add_cases():
    plan = FiberPlan(TWO_ATOMS, [SPREAD, ScalarMeasure.dirac(4)])
    zero = FiberPlan.zero(TWO_ATOMS)
    for strategy in ('comonotone', 'product'):
        assert(w_rho(oplus_add(glue(plan, zero, strategy)), plan) == 0)
    assert(oplus_add(glue(dirac_plan(1, 2), dirac_plan(3, 5))).atom_fibers[1].atoms[0].x == 7)
    doubled = oplus_add(glue(plan, plan)).atom_fibers[0]
    assert(doubled.difference(ScalarMeasure(atoms=[(-2, 0.5), (2, 0.5)])) is None)


def test_glued_marginals_are_the_inputs(rng):
    for _ in range(50):
        first, second = random_instances.atomic_plan_pair(rng)
        for strategy in ('comonotone', 'product'):
            glued = glue(first, second, strategy)
            for marginal, plan in ((glued.first_marginal(), first), (glued.second_marginal(), second)):
                assert(marginal.base.difference(plan.base) is None)
                assert(all(one.difference(two) is None
                           for one, two in zip(marginal.atom_fibers, plan.atom_fibers)))


def test_glue_rejects_map_against_spread_fiber():
    base = ScalarMeasure.uniform(0, 1)
    with pytest.raises(DomainError):
        glue(FiberPlan(base, [], [MapFiber(0, 1)]), FiberPlan(base, [], [ConstFiber(SPREAD)]))


def test_addition_bound(rng):
    for _ in range(100):
        first, second = random_instances.atomic_plan_pair(rng, max_fiber_points=4)
        third, fourth = (random_instances.atomic_plan(rng, max_fiber_points=4, base=first.base)
                         for _ in range(2))
        left = w_rho(oplus_add(glue(first, second)), oplus_add(glue(third, fourth)))
        right = w_rho(first, third) + w_rho(second, fourth)
        assert(left <= right + 1e-9)


def test_optimal_glue_cost_is_w_rho(rng):
    first, second = random_instances.atomic_plan_pair(rng)
    glued = optimal_glue(first, second)
    assert(glued.cost() == pytest.approx(w_rho(first, second) ** 2, abs=1e-9))


def test_plan_json_round_trip():
    base = ScalarMeasure([(5, 0.5)], [(2, 3, 0.25), (0, 1, 0.25)])
    plan = FiberPlan(base, [SPREAD], [ConstFiber(SPREAD), MapFiber(-1, 2)])
    parsed = FiberPlan.from_json(plan.to_json())
    assert(w_rho(parsed, plan) == 0)
    assert(parsed.piece_fibers[1] == MapFiber(-1, 2))


def test_plan_json_piece_fibers_follow_listed_order():
    obj = {"base": {"atoms": [], "pieces": [{"a": 2, "b": 3, "m": 0.5}, {"a": 0, "b": 1, "m": 0.5}]},
           "atom_fibers": [],
           "piece_fibers": [{"piece": 0, "kind": "map", "a": 7, "b": 0},
                            {"piece": 1, "kind": "map", "a": 1, "b": 0}]}
    plan = FiberPlan.from_json(obj)
    assert(plan.piece_fibers == (MapFiber(1, 0), MapFiber(7, 0)))


@pytest.mark.parametrize("obj", [
    {"base": {"atoms": [{"x": 0, "m": 1}]}, "atom_fibers": []},
    {"base": {"atoms": [{"x": 0, "m": 1}]},
     "atom_fibers": [{"x": 1, "fiber": {"atoms": [{"x": 0, "m": 1}]}}]},
    {"base": {"pieces": [{"a": 0, "b": 1, "m": 1}]},
     "piece_fibers": [{"piece": 0, "kind": "map", "a": 0}]},
    {"base": {"pieces": [{"a": 0, "b": 1, "m": 1}]},
     "piece_fibers": [{"piece": [0], "kind": "map", "a": 0, "b": 1}]},
    {"base": {"pieces": [{"a": 0, "b": 2, "m": 0.5}, {"a": 1, "b": 3, "m": 0.5}]},
     "piece_fibers": [{"piece": 0, "kind": "map", "a": 0, "b": 1},
                      {"piece": 1, "kind": "map", "a": 0, "b": 1}]},
    {"base": {"atoms": [{"x": 0, "m": 1}]}, "atom_fibers": [], "extra": 1},
])
def test_plan_json_errors(obj):
    with pytest.raises(DomainError):
        FiberPlan.from_json(obj)


def test_refinement_keeps_fibers():
    plan = FiberPlan(ScalarMeasure.uniform(0, 2), [], [MapFiber(1, 3)])
    other = FiberPlan(ScalarMeasure([], [(0, 1, 0.5), (1, 2, 0.5)]), [],
                      [MapFiber(0, 0), MapFiber(0, 0)])
    first, second = common_refinement(plan, other)
    assert(len(first.base.pieces) == 2)
    assert(first.piece_fibers == (MapFiber(1, 3), MapFiber(1, 3)))
    assert(w_rho(first, second) == pytest.approx(w_rho(plan.refine([1]), other), abs=1e-12))
    assert(plan.refine([5]) is plan)


def test_w_rho_refines_bases_cut_at_different_points():
    whole = FiberPlan(ScalarMeasure.uniform(0, 2), [], [MapFiber(1, 3)])
    halves = FiberPlan(ScalarMeasure(pieces=[(0, 1, 0.5), (1, 2, 0.5)]), [],
                       [MapFiber(1, 3), MapFiber(0, 0)])
    assert(w_rho(whole, whole.refine([1])) == 0)
    expected = 0.5 * (7 ** 3 - 4 ** 3) / 9
    assert(w_rho(whole, halves) ** 2 == pytest.approx(expected, abs=1e-12))
    assert(w_rho(halves, whole) ** 2 == pytest.approx(expected, abs=1e-12))
    assert(oplus_add(glue(whole, halves)).piece_fibers == (MapFiber(2, 6), MapFiber(1, 3)))


def test_w_rho_rejects_different_measures_with_different_cuts():
    whole = FiberPlan(ScalarMeasure.uniform(0, 2), [], [MapFiber(0, 0)])
    uneven = FiberPlan(ScalarMeasure(pieces=[(0, 1, 0.3), (1, 2, 0.7)]), [],
                       [MapFiber(0, 0), MapFiber(0, 0)])
    with pytest.raises(DomainError, match="piece 0"):
        w_rho(whole, uneven)


def test_from_map_cuts_base_at_breakpoints():
    mapping = PiecewiseAffineMap([(0, 1, 0, 1), (1, 2, 5, 0)])
    plan = FiberPlan.from_map(ScalarMeasure([(1.5, 0.5)], [(0, 2, 0.5)]), mapping)
    assert(len(plan.base.pieces) == 2)
    assert(plan.piece_fibers == (MapFiber(0, 1), MapFiber(5, 0)))
    assert(plan.atom_fibers[0].atoms[0].x == 5)
    assert(plan.second_moment() == pytest.approx(
        0.5 * 1.5 ** 2 + 0.25 / 3 + 0.25 * 7 / 3 + 0.5 * 25 + 0.25 / 3 + 0.25 * 25, abs=1e-12))
