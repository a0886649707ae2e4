# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Seeded random measures and plans on small integer grids, shared by the
experiment runner and the tests.
'''

import numpy as np
from monoplan.measures import PiecewiseAffineMap, ScalarMeasure
from monoplan.plans import ConstFiber, FiberPlan, MapFiber

QUARTERS = np.array([-0.25, -0.125, 0.0, 0.125, 0.25])


def _masses(rng, count):
    weights = rng.integers(1, 10, size=count).astype(float)
    return weights / weights.sum()


def atomic_measure(rng, max_points=8, low=-5, high=5, grid=None):
    '''Up to `max_points` atoms at distinct integer positions in [low, high]
    (or at distinct values of `grid`).'''
    grid = np.arange(low, high + 1, dtype=float) if grid is None else np.asarray(grid, float)
    count = int(rng.integers(1, min(max_points, len(grid)) + 1))
    positions = rng.choice(grid, size=count, replace=False)
    return ScalarMeasure(atoms=zip(positions, _masses(rng, count)))


def measure(rng, max_points=4, max_pieces=2):
    '''Atoms and disjoint uniform pieces with integer ends in [-5, 5].'''
    count = int(rng.integers(0, max_pieces + 1))
    ends = np.sort(rng.choice(np.arange(-5, 6), size=2 * count, replace=False)).astype(float)
    atom_count = int(rng.integers(0 if count else 1, max_points + 1))
    positions = rng.choice(np.arange(-5, 6), size=atom_count, replace=False).astype(float)
    masses = _masses(rng, atom_count + count)
    return ScalarMeasure(zip(positions, masses[:atom_count]),
                         [(ends[2 * i], ends[2 * i + 1], masses[atom_count + i])
                          for i in range(count)])


def atomic_plan(rng, max_atoms=4, max_fiber_points=6, base=None):
    '''Atomic base with atomic fibers on [-5, 5].'''
    base = atomic_measure(rng, max_atoms) if base is None else base
    return FiberPlan(base, [atomic_measure(rng, max_fiber_points) for _ in base.atoms])


def atomic_plan_pair(rng, max_atoms=4, max_fiber_points=6):
    first = atomic_plan(rng, max_atoms, max_fiber_points)
    return first, atomic_plan(rng, max_fiber_points=max_fiber_points, base=first.base)


def monotone_plan(base, rng, max_fiber_points=4):
    '''Atomic plan over an atomic base whose fibers, read in base order, are
    consecutive runs of one sorted list of points.'''
    counts = rng.integers(1, max_fiber_points + 1, size=len(base.atoms))
    points = np.sort(rng.uniform(-5, 5, size=int(counts.sum())))
    fibers, start = [], 0
    for count in counts:
        fibers.append(ScalarMeasure(atoms=zip(points[start:start + count],
                                              _masses(rng, int(count)))))
        start += count
    return FiberPlan(base, fibers)


def _slots(rng, count):
    '''Slot k occupies [3k, 3k+1]: either an atom at 3k or a piece [3k, 3k+1].'''
    kinds = rng.integers(0, 2, size=count)
    kinds[0] = 0
    masses = _masses(rng, count)
    atoms = [(3.0 * k, m) for k, (kind, m) in enumerate(zip(kinds, masses)) if kind == 0]
    pieces = [(3.0 * k, 3.0 * k + 1, m) for k, (kind, m) in enumerate(zip(kinds, masses))
              if kind == 1]
    return ScalarMeasure(atoms, pieces)


def tangent_plan(rng, slots=4):
    '''Member of the tangent cone: separated atoms and pieces, map fibers and
    atomic atom fibers with values in [-1/4, 1/4].'''
    base = _slots(rng, slots)
    atom_fibers = [atomic_measure(rng, 3, grid=QUARTERS) for _ in base.atoms]
    piece_fibers = []
    for piece in base.pieces:
        start, stop = rng.choice(QUARTERS, size=2)
        slope = (stop - start) / (piece.b - piece.a)
        piece_fibers.append(MapFiber(start - slope * piece.a, slope))
    return FiberPlan(base, atom_fibers, piece_fibers)


def spread_plan(rng, slots=4):
    '''Non-member: like tangent_plan but one piece carries a spread fiber.'''
    while True:
        plan = tangent_plan(rng, slots)
        if plan.base.pieces:
            break
    spread = ScalarMeasure(atoms=[(-0.25, 0.5), (0.25, 0.5)])
    piece_fibers = list(plan.piece_fibers)
    piece_fibers[int(rng.integers(0, len(piece_fibers)))] = ConstFiber(spread)
    return FiberPlan(plan.base, plan.atom_fibers, piece_fibers)


def atom_witness_instance(rng):
    '''(nu, x0, base): nu on [-1, 1] with nonzero radius, x0 an atom at least
    one unit away from every other part of the base. The window of witness_atom
    has half-width at most 1/2, so no other base mass is moved and the error
    decreases strictly in n.'''
    base = _slots(rng, int(rng.integers(2, 5)))
    x0 = base.atoms[int(rng.integers(0, len(base.atoms)))].x
    while True:
        nu = atomic_measure(rng, 4, grid=[-1.0, -0.5, 0.0, 0.5, 1.0])
        if max(abs(v) for v in nu.hull()) > 0:
            return nu, x0, base


def jump_map(rng, pieces=3):
    '''(g, base): a map with downward jumps at the integers 1..pieces-1 and a
    uniform base on [0, pieces] with an atom at 0.5.'''
    values = rng.integers(-3, 4, size=(pieces, 2)).astype(float)
    for k in range(1, pieces):
        if values[k, 0] >= values[k - 1, 1]:
            values[k, 0] = values[k - 1, 1] - 1
    g = PiecewiseAffineMap([(k, k + 1, values[k, 0] - (values[k, 1] - values[k, 0]) * k,
                             values[k, 1] - values[k, 0]) for k in range(pieces)])
    base = ScalarMeasure([(0.5, 0.25)], [(0.0, float(pieces), 0.75)])
    return g, base


def bounded_plan(rng, max_atoms=4):
    '''Atomic fibers on [-16, 16] over a base with atoms and one map piece.'''
    base = ScalarMeasure([(atom.x, atom.m) for atom in atomic_measure(rng, max_atoms).atoms],
                         [(6.0, 8.0, 0.5)])
    fibers = [atomic_measure(rng, 5, -16, 16) for _ in base.atoms]
    slope = float(rng.integers(-8, 9))
    return FiberPlan(base, fibers, [MapFiber(-7.0 * slope, slope)])
