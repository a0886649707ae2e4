# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
The cone of plans with monotone support: membership certificates, the interval
of admissible scalings and the metric projection onto the cone.
'''

import logging
import math
from collections import namedtuple
import numpy as np
from monoplan.errors import DomainError, expect
from monoplan.measures import TOLERANCE, QuantileVector, ScalarMeasure
from monoplan.plans import (DEFAULT_SUB_CELLS, ConstFiber, FiberPlan, MapFiber, fiber_affine_push,
                            fiber_at)

logger = logging.getLogger("root")

DEFAULT_BINS = 256
NUDGE = 1e-3

Projection = namedtuple('Projection', ['plan', 'distance'])

# A piece of the support: base points in [lo, hi] with support in the fiber
# between the affine bounds low(x) = low_c + low_s * x and high(x) likewise.
_Element = namedtuple('_Element', ['lo', 'hi', 'low_c', 'low_s', 'high_c', 'high_s'])


class MonotonicityReport(namedtuple('MonotonicityReport', ['monotone', 'violation'])):
    '''Cone membership certificate. `violation` is ((x1, y1), (x2, y2)) with
    x1 < x2 and y1 > y2, both in the support, or None.'''

    def to_json(self):
        witness = None if self.violation is None else [list(point) for point in self.violation]
        return {"monotone": self.monotone, "witness": witness}


class LambdaInterval(namedtuple('LambdaInterval', ['sup_tau', 'attained'])):
    '''Admissible scalings (0, sup_tau), plus sup_tau itself when attained.'''

    @property
    def unbounded(self):
        return math.isinf(self.sup_tau)

    @property
    def empty(self):
        return self.sup_tau == 0

    def to_json(self):
        return {"sup_tau": None if self.unbounded else self.sup_tau,
                "unbounded": self.unbounded, "attained": self.attained}


def _elements(plan):
    elements = []
    for atom, fiber in zip(plan.base.atoms, plan.atom_fibers):
        low, high = fiber.hull()
        elements.append(_Element(atom.x, atom.x, low, 0.0, high, 0.0))
    for piece, fiber in zip(plan.base.pieces, plan.piece_fibers):
        if isinstance(fiber, MapFiber):
            elements.append(_Element(piece.a, piece.b, fiber.a, fiber.b, fiber.a, fiber.b))
        else:
            low, high = fiber.measure.hull()
            elements.append(_Element(piece.a, piece.b, low, 0.0, high, 0.0))
    return elements


def _vertices(first, second):
    '''Vertices of the polygon {x1 in first, x2 in second, x1 <= x2}.'''
    vertices = [(x1, x2) for x1 in (first.lo, first.hi) for x2 in (second.lo, second.hi)
                if x1 <= x2]
    for t in (first.lo, first.hi, second.lo, second.hi):
        if first.lo <= t <= first.hi and second.lo <= t <= second.hi:
            vertices.append((t, t))
    return vertices


def _excess(first, second, x1, x2):
    '''Highest fiber point over x1 minus lowest fiber point over x2.'''
    return (first.high_c + first.high_s * x1) - (second.low_c + second.low_s * x2)


def _pairs(plan):
    '''Ordered element pairs (including an element with itself) whose strict
    region x1 < x2 is nonempty.'''
    elements = _elements(plan)
    for first in elements:
        for second in elements:
            if first.lo < second.hi:
                yield first, second


def is_monotone(plan):
    '''Checks that no two support points (x1, y1), (x2, y2) have x1 < x2 and
    y1 > y2. The excess is linear on each element pair, so its maximum is found
    at a vertex of the pair's region.'''
    for first, second in _pairs(plan):
        excess, x1, x2 = max((_excess(first, second, x1, x2), x1, x2)
                             for x1, x2 in _vertices(first, second))
        if excess <= TOLERANCE:
            continue
        if x1 == x2:
            # Move towards (lo1, hi2) to reach a strictly ordered pair.
            corner = _excess(first, second, first.lo, second.hi)
            theta = min(NUDGE, 0.5 * excess / (excess - corner)) if corner < excess else NUDGE
            x1, x2 = x1 + theta * (first.lo - x1), x2 + theta * (second.hi - x2)
        y1 = first.high_c + first.high_s * x1
        y2 = second.low_c + second.low_s * x2
        logger.debug("Monotonicity violated between (%r, %r) and (%r, %r).", x1, y1, x2, y2)
        return MonotonicityReport(False, ((x1, y1), (x2, y2)))
    return MonotonicityReport(True, None)


def lambda_max(plan):
    '''Supremum of tau such that (x, x + tau * y)#plan has monotone support.

    Over each element pair the constraint is tau * excess <= x2 - x1. The ratio
    of the two affine functions is extremal at the vertices of the pair's
    region, where vertices with x1 == x2 and zero excess are skipped.'''
    for index, fiber in enumerate(plan.piece_fibers):
        if isinstance(fiber, ConstFiber) and not fiber.measure.is_dirac:
            raise DomainError(f"No admissible tau: piece {index} carries a spread fiber.")

    sup_tau = math.inf
    for first, second in _pairs(plan):
        for x1, x2 in _vertices(first, second):
            excess = _excess(first, second, x1, x2)
            if excess > TOLERANCE:
                sup_tau = min(sup_tau, (x2 - x1) / excess)

    if sup_tau == 0:
        return LambdaInterval(0.0, False)
    if math.isinf(sup_tau):
        return LambdaInterval(math.inf, False)
    attained = is_monotone(fiber_affine_push(plan, 0.0, 1.0, sup_tau)).monotone
    return LambdaInterval(sup_tau, attained)


def atomize(plan, bins=DEFAULT_BINS):
    '''Replaces the diffuse part of the base by `bins` equal-mass atoms.

    Each atom sits at the mean of its bin; its fiber is the mixture of the
    piece fibers over the bin, map fibers taken at the middle of each part.
    Atoms that coincide with existing base atoms are merged by mixture.'''
    expect(bins >= 1, "bins must be at least 1.")
    if plan.base.is_atomic:
        return plan
    logger.warning("Approximating the diffuse base by %d atoms.", bins)

    masses = np.array([piece.m for piece in plan.base.pieces])
    total = masses.sum()
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    levels = np.linspace(0.0, total, bins + 1)

    components = [(atom.x, atom.m, fiber) for atom, fiber in zip(plan.base.atoms, plan.atom_fibers)]
    for low, high in zip(levels[:-1], levels[1:]):
        parts = []
        for index, (piece, fiber) in enumerate(zip(plan.base.pieces, plan.piece_fibers)):
            start, stop = max(low, cum[index]), min(high, cum[index + 1])
            if stop - start <= 0:
                continue
            left = piece.a + (start - cum[index]) / piece.m * (piece.b - piece.a)
            right = piece.a + (stop - cum[index]) / piece.m * (piece.b - piece.a)
            parts.append(((left + right) / 2, stop - start, fiber))
        mass = sum(part[1] for part in parts)
        if mass <= 0:
            continue
        position = sum(middle * part_mass for middle, part_mass, _ in parts) / mass
        fiber = ScalarMeasure.mixture([(part_mass, fiber_at(part_fiber, middle))
                                       for middle, part_mass, part_fiber in parts])
        components.append((position, mass, fiber))

    components.sort(key=lambda component: component[0])
    groups = []
    for x, mass, fiber in components:
        if groups and x - groups[-1][0][0] <= TOLERANCE:
            groups[-1].append((x, mass, fiber))
        else:
            groups.append([(x, mass, fiber)])
    base = ScalarMeasure(atoms=[(group[0][0], sum(c[1] for c in group)) for group in groups])
    fibers = [ScalarMeasure.mixture([(c[1], c[2]) for c in group]) for group in groups]
    return FiberPlan(base, fibers)


class _Block:
    '''A run of consecutive entries pooled to their weighted mean.'''

    def __init__(self, value, weight, index):
        self.start = index
        self.end = index + 1
        self.sum = value * weight
        self.weight = weight

    def merge_with_next_block(self, right):
        assert self.end == right.start
        self.sum += right.sum
        self.weight += right.weight
        self.end = right.end

    def value(self):
        return self.sum / self.weight


def pool_adjacent_violators(values, weights, reverse=False):
    '''Weighted least squares nondecreasing fit. With reverse=True the pools are
    formed by a right-to-left sweep.'''
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    expect(values.shape == weights.shape, "Values and weights must have the same length.")
    expect(np.all(weights > 0), "Weights must be positive.")
    if reverse:
        return -pool_adjacent_violators(-values[::-1], weights[::-1])[::-1]
    if len(values) == 0:
        return values.copy()

    blocks = [_Block(values[0], weights[0], 0)]
    for index in range(1, len(values)):
        current = _Block(values[index], weights[index], index)
        while blocks and blocks[-1].value() > current.value():
            previous = blocks.pop()
            previous.merge_with_next_block(current)
            current = previous
        blocks.append(current)

    logger.debug("Pooled %d values into %d blocks.", len(values), len(blocks))
    return np.repeat([block.value() for block in blocks],
                     [block.end - block.start for block in blocks])


def chain_quantiles(plan, grid_cells=DEFAULT_SUB_CELLS):
    '''Concatenated quantile vectors of the atom fibers in base order, with the
    weights (base mass times cell width) of the projection objective.'''
    vectors = [QuantileVector.from_measure(fiber, grid_cells) for fiber in plan.atom_fibers]
    values = np.concatenate([vector.values for vector in vectors])
    weights = np.concatenate([atom.m * vector.widths
                              for atom, vector in zip(plan.base.atoms, vectors)])
    return vectors, values, weights


def project_cone(plan, grid_cells=DEFAULT_SUB_CELLS, reverse=False):
    '''Metric projection onto the monotone cone for plans over an atomic base.

    A plan over atomic base points is monotone exactly when the concatenation
    of its fiber quantile functions, in base order, is nondecreasing, so the
    projection is a weighted isotonic regression of that concatenation.'''
    expect(grid_cells >= 1, "grid_cells must be at least 1.")
    expect(plan.base.is_atomic, "Projection needs an atomic base; approximate the diffuse "
           f"part first with atomize(plan, bins={DEFAULT_BINS}).")

    vectors, values, weights = chain_quantiles(plan, grid_cells)
    fitted = pool_adjacent_violators(values, weights, reverse)
    objective = float(np.sum(weights * (fitted - values) ** 2))

    fibers, start = [], 0
    for vector in vectors:
        stop = start + len(vector)
        fibers.append(QuantileVector(vector.breakpoints, fitted[start:stop]).to_measure())
        start = stop
    return Projection(FiberPlan(plan.base, fibers), math.sqrt(objective))
