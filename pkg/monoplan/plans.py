# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Transport plans with a prescribed first marginal, stored disintegrated: a base
measure and one conditional fiber per base atom and per diffuse base piece.

A diffuse piece carries either a MapFiber (a + b*x, a Dirac fiber at every x)
or a ConstFiber (the same measure at every x of the piece). This module holds
the fibered distance, the affine fiber pushforwards, gluing of two plans over
their common base and the addition of glued plans.
'''

import logging
import math
import numbers
from collections import namedtuple
import numpy as np
from monoplan.errors import DomainError, SizeError, expect
from monoplan.measures import (TOLERANCE, PiecewiseAffineMap, ScalarMeasure, pushforward,
                               wasserstein2_squared)

logger = logging.getLogger("root")

DEFAULT_SUB_CELLS = 64
ADM_MAX_POINTS = 8
STRATEGIES = ('comonotone', 'product')

MapFiber = namedtuple('MapFiber', ['a', 'b'])
ConstFiber = namedtuple('ConstFiber', ['measure'])
MapPair = namedtuple('MapPair', ['first', 'second'])


def as_map_fiber(fiber):
    '''MapFiber equivalent of a piece fiber, or None if the fiber is spread.'''
    if isinstance(fiber, MapFiber):
        return fiber
    if fiber.measure.is_dirac:
        return MapFiber(fiber.measure.atoms[0].x, 0.0)
    return None


def fiber_at(fiber, x):
    '''Conditional measure of a piece fiber at base point x.'''
    if isinstance(fiber, MapFiber):
        return ScalarMeasure.dirac(fiber.a + fiber.b * x)
    return fiber.measure


def fiber_hull(fiber, x):
    '''(lowest, highest) support point of a piece fiber at base point x.'''
    if isinstance(fiber, MapFiber):
        value = fiber.a + fiber.b * x
        return value, value
    return fiber.measure.hull()


def _piece_average(function, piece):
    '''Average of a quadratic over [a, b] by Simpson's rule (exact).'''
    return (function(piece.a) + 4 * function((piece.a + piece.b) / 2) + function(piece.b)) / 6


def _fiber_distance_squared(first, second, x):
    if isinstance(first, ConstFiber) and isinstance(second, ConstFiber):
        return wasserstein2_squared(first.measure, second.measure)
    if isinstance(first, MapFiber) and isinstance(second, MapFiber):
        return (first.a - second.a + (first.b - second.b) * x) ** 2
    return wasserstein2_squared(fiber_at(first, x), fiber_at(second, x))


def _check_piece_fiber(fiber):
    if isinstance(fiber, MapFiber):
        expect(all(isinstance(v, numbers.Real) and math.isfinite(v) for v in fiber),
               f"Map fiber coefficients must be finite numbers, got {fiber!r}.")
        return MapFiber(float(fiber.a), float(fiber.b))
    expect(isinstance(fiber, ConstFiber) and isinstance(fiber.measure, ScalarMeasure),
           f"Piece fibers must be MapFiber or ConstFiber, got {fiber!r}.")
    return fiber


class FiberPlan:
    '''A plan on R x R whose first marginal is `base`. `atom_fibers[i]` is the
    conditional measure over base atom i and `piece_fibers[j]` the fiber over
    base piece j.'''

    def __init__(self, base, atom_fibers, piece_fibers=()):
        atom_fibers = tuple(atom_fibers)
        piece_fibers = tuple(_check_piece_fiber(fiber) for fiber in piece_fibers)
        expect(isinstance(base, ScalarMeasure), "A plan base must be a ScalarMeasure.")
        expect(len(atom_fibers) == len(base.atoms),
               f"Expected {len(base.atoms)} atom fibers, got {len(atom_fibers)}.")
        expect(len(piece_fibers) == len(base.pieces),
               f"Expected {len(base.pieces)} piece fibers, got {len(piece_fibers)}.")
        expect(all(isinstance(fiber, ScalarMeasure) for fiber in atom_fibers),
               "Atom fibers must be ScalarMeasures.")
        self.base = base
        self.atom_fibers = atom_fibers
        self.piece_fibers = piece_fibers
        self._piece_lefts = np.array([piece.a for piece in base.pieces])

    @classmethod
    def from_map(cls, base, mapping):
        '''Returns (id, mapping)#base. Base pieces are cut at the breakpoints of
        the map so that each piece carries a single affine fiber.'''
        base = base.split_pieces(mapping.breakpoints())
        atom_fibers = [ScalarMeasure.dirac(mapping(atom.x)) for atom in base.atoms]
        piece_fibers = []
        for piece in base.pieces:
            expect(mapping.covers(piece.a, piece.b),
                   f"Map is undefined on part of [{piece.a!r}, {piece.b!r}].")
            affine = mapping.restricted(piece.a, piece.b)
            piece_fibers.append(MapFiber(affine.intercept, affine.slope))
        return cls(base, atom_fibers, piece_fibers)

    @classmethod
    def zero(cls, base):
        '''The plan with every fiber equal to the Dirac mass at 0.'''
        return cls(base, [ScalarMeasure.dirac(0.0)] * len(base.atoms),
                   [MapFiber(0.0, 0.0)] * len(base.pieces))

    def with_atom_fiber(self, x, fiber):
        '''Copy of the plan with the fiber over atom x replaced.'''
        index = self.base.atom_index(x)
        expect(index is not None, f"{x!r} is not an atom of the base.")
        atom_fibers = list(self.atom_fibers)
        atom_fibers[index] = fiber
        return FiberPlan(self.base, atom_fibers, self.piece_fibers)

    def piece_index(self, x):
        '''Index of a base piece containing x (the leftmost one), or None.'''
        index = int(np.searchsorted(self._piece_lefts, x, side='right')) - 1
        while index > 0 and self.base.pieces[index - 1].b >= x:
            index -= 1
        if index >= 0 and self.base.pieces[index].a <= x <= self.base.pieces[index].b:
            return index
        return None

    def refine(self, cuts):
        '''Same plan with base pieces cut at the given points.'''
        base = self.base.split_pieces(cuts)
        if len(base.pieces) == len(self.base.pieces):
            return self
        piece_fibers = [self.piece_fibers[self.piece_index((piece.a + piece.b) / 2)]
                        for piece in base.pieces]
        return FiberPlan(base, self.atom_fibers, piece_fibers)

    def piece_edges(self):
        return sorted({edge for piece in self.base.pieces for edge in (piece.a, piece.b)})

    def second_moment(self):
        '''Integral of x^2 + y^2 against the plan.'''
        total = self.base.second_moment()
        total += sum(atom.m * fiber.second_moment()
                     for atom, fiber in zip(self.base.atoms, self.atom_fibers))
        for piece, fiber in zip(self.base.pieces, self.piece_fibers):
            if isinstance(fiber, MapFiber):
                total += piece.m * _piece_average(lambda x, f=fiber: (f.a + f.b * x) ** 2, piece)
            else:
                total += piece.m * fiber.measure.second_moment()
        return total

    def to_json(self):
        atom_fibers = [{"x": atom.x, "fiber": fiber.to_json()}
                       for atom, fiber in zip(self.base.atoms, self.atom_fibers)]
        piece_fibers = []
        for index, fiber in enumerate(self.piece_fibers):
            if isinstance(fiber, MapFiber):
                piece_fibers.append({"piece": index, "kind": "map", "a": fiber.a, "b": fiber.b})
            else:
                piece_fibers.append({"piece": index, "kind": "const",
                                     "fiber": fiber.measure.to_json()})
        return {"base": self.base.to_json(), "atom_fibers": atom_fibers,
                "piece_fibers": piece_fibers}

    @classmethod
    def from_json(cls, obj):
        '''Parse the plan JSON format. Atom fibers are matched to base atoms by
        position, piece fibers by index into the sorted base pieces.'''
        expect(isinstance(obj, dict) and set(obj) <= {"base", "atom_fibers", "piece_fibers"}
               and "base" in obj, "A plan must be an object with base, atom_fibers, piece_fibers.")
        raw_pieces = obj["base"].get("pieces", []) if isinstance(obj["base"], dict) else []
        base = ScalarMeasure.from_json(obj["base"])
        expect(len(base.pieces) == len(raw_pieces), "Plan base pieces must be disjoint.")

        atom_fibers = [None] * len(base.atoms)
        for entry in obj.get("atom_fibers", []):
            expect(isinstance(entry, dict) and set(entry) == {"x", "fiber"},
                   f"Atom fibers need exactly the fields x and fiber, got {entry!r}.")
            index = base.atom_index(entry["x"])
            expect(index is not None, f"Atom fiber at {entry['x']!r} has no base atom.")
            expect(atom_fibers[index] is None, f"Duplicate atom fiber at {entry['x']!r}.")
            atom_fibers[index] = ScalarMeasure.from_json(entry["fiber"])
        expect(None not in atom_fibers, "Every base atom needs a fiber.")

        order = sorted(range(len(raw_pieces)),
                       key=lambda i: (raw_pieces[i].get("a"), raw_pieces[i].get("b")))
        rank = {raw: sorted_index for sorted_index, raw in enumerate(order)}
        piece_fibers = [None] * len(base.pieces)
        for entry in obj.get("piece_fibers", []):
            expect(isinstance(entry, dict) and isinstance(entry.get("piece"), int)
                   and entry["piece"] in rank,
                   f"Piece fiber {entry!r} does not name a base piece.")
            index = rank[entry["piece"]]
            expect(piece_fibers[index] is None, f"Duplicate fiber for piece {entry['piece']}.")
            if entry.get("kind") == "map":
                expect(set(entry) == {"piece", "kind", "a", "b"},
                       f"Map piece fibers need exactly piece, kind, a, b; got {entry!r}.")
                piece_fibers[index] = MapFiber(entry["a"], entry["b"])
            else:
                expect(entry.get("kind") == "const" and set(entry) == {"piece", "kind", "fiber"},
                       f"Const piece fibers need exactly piece, kind, fiber; got {entry!r}.")
                piece_fibers[index] = ConstFiber(ScalarMeasure.from_json(entry["fiber"]))
        expect(None not in piece_fibers, "Every base piece needs a fiber.")
        return cls(base, atom_fibers, piece_fibers)

    def __repr__(self):
        return f"FiberPlan(base={self.base!r}, atom_fibers={list(self.atom_fibers)!r}, " \
               f"piece_fibers={list(self.piece_fibers)!r})"


def require_same_base(first, second):
    '''Raises DomainError naming the first differing base component.'''
    mismatch = first.base.difference(second.base)
    if mismatch is not None:
        raise DomainError(f"Plans do not share a base: {mismatch}.")


def common_refinement(first, second):
    '''Returns both plans over the coarsest common cut of their base pieces.
    The bases must be the same measure, possibly cut at different points.'''
    if first.base.difference(second.base) is None:
        return first, second
    cuts = set(first.piece_edges()) | set(second.piece_edges())
    first, second = first.refine(cuts), second.refine(cuts)
    require_same_base(first, second)
    return first, second


def w_rho_squared(first, second):
    first, second = common_refinement(first, second)
    total = sum(atom.m * wasserstein2_squared(one, two)
                for atom, one, two in zip(first.base.atoms, first.atom_fibers, second.atom_fibers))
    for piece, one, two in zip(first.base.pieces, first.piece_fibers, second.piece_fibers):
        total += piece.m * _piece_average(
            lambda x, f=one, g=two: _fiber_distance_squared(f, g, x), piece)
    return max(0.0, total)


def w_rho(first, second):
    '''Fibered Wasserstein distance: the rho-average of squared fiberwise W2
    distances, square rooted. Both bases must be the same measure; pieces cut
    at different points are compared on the common refinement.'''
    return math.sqrt(w_rho_squared(first, second))


def fiber_affine_push(plan, c0, c1, c2, sub_cells=DEFAULT_SUB_CELLS):
    '''Returns (x, c0 + c1*x + c2*y)#plan.

    A ConstFiber whose measure is not a Dirac cannot follow an x-dependent
    shift exactly. When c1 != 0 such a piece is cut into `sub_cells` cells, each
    carrying the fiber shifted by the value at its midpoint.'''
    expect(sub_cells >= 1, "sub_cells must be at least 1.")
    atom_fibers = [pushforward(fiber, PiecewiseAffineMap.affine(c0 + c1 * atom.x, c2))
                   for atom, fiber in zip(plan.base.atoms, plan.atom_fibers)]

    pieces, piece_fibers, split = [], [], False
    for piece, fiber in zip(plan.base.pieces, plan.piece_fibers):
        if isinstance(fiber, MapFiber):
            pieces.append(piece)
            piece_fibers.append(MapFiber(c0 + c2 * fiber.a, c1 + c2 * fiber.b))
        elif c1 == 0:
            pieces.append(piece)
            piece_fibers.append(ConstFiber(pushforward(fiber.measure,
                                                       PiecewiseAffineMap.affine(c0, c2))))
        elif fiber.measure.is_dirac:
            pieces.append(piece)
            piece_fibers.append(MapFiber(c0 + c2 * fiber.measure.atoms[0].x, c1))
        else:
            split = True
            edges = np.linspace(piece.a, piece.b, sub_cells + 1)
            for left, right in zip(edges[:-1], edges[1:]):
                middle = (left + right) / 2
                pieces.append((left, right, piece.m / sub_cells))
                piece_fibers.append(ConstFiber(pushforward(
                    fiber.measure, PiecewiseAffineMap.affine(c0 + c1 * middle, c2))))

    if not split:
        return FiberPlan(plan.base, atom_fibers, piece_fibers)
    logger.warning("Spread fibers on diffuse pieces were discretized into %d cells.", sub_cells)
    return FiberPlan(ScalarMeasure(plan.base.atoms, pieces), atom_fibers, piece_fibers)


def _atomic(measure):
    expect(measure.is_atomic, "Gluing needs atomic fibers; discretize spread fibers first.")
    return measure


def _points(measure):
    return np.array([atom.x for atom in measure.atoms]), np.array([atom.m for atom in measure.atoms])


def product_coupling(first, second):
    '''Independent coupling as an (N, 3) array of (y1, y2, mass) rows.'''
    y1, m1 = _points(_atomic(first))
    y2, m2 = _points(_atomic(second))
    rows = np.repeat(np.arange(len(y1)), len(y2))
    columns = np.tile(np.arange(len(y2)), len(y1))
    return np.column_stack([y1[rows], y2[columns], m1[rows] * m2[columns]])


def comonotone_coupling(first, second):
    '''Quantile pairing as an (N, 3) array of (y1, y2, mass) rows. Mass levels
    closer than TOLERANCE are merged.'''
    y1, m1 = _points(_atomic(first))
    y2, m2 = _points(_atomic(second))
    cum1, cum2 = np.cumsum(m1), np.cumsum(m2)

    levels = []
    for level in np.unique(np.concatenate([cum1, cum2])):
        if levels and level - levels[-1] <= TOLERANCE:
            levels[-1] = level
        else:
            levels.append(level)
    upper = np.array(levels)
    lower = np.concatenate([[0.0], upper[:-1]])
    middle = (lower + upper) / 2
    first_index = np.minimum(np.searchsorted(cum1, middle), len(y1) - 1)
    second_index = np.minimum(np.searchsorted(cum2, middle), len(y2) - 1)
    return np.column_stack([y1[first_index], y2[second_index], upper - lower])


_COUPLINGS = {'comonotone': comonotone_coupling, 'product': product_coupling}


def _joint_measure(coupling, column):
    return ScalarMeasure(atoms=zip(coupling[:, column], coupling[:, 2]))


class GluedPlan:
    '''A three-marginal plan over `base`: per base atom an (N, 3) array of
    (y1, y2, mass) rows, per base piece either such an array (constant in x)
    or a MapPair of the two map fibers.'''

    def __init__(self, base, atom_couplings, piece_couplings):
        self.base = base
        self.atom_couplings = tuple(atom_couplings)
        self.piece_couplings = tuple(piece_couplings)
        assert len(self.atom_couplings) == len(base.atoms)
        assert len(self.piece_couplings) == len(base.pieces)

    def _marginal(self, column):
        atom_fibers = [_joint_measure(coupling, column) for coupling in self.atom_couplings]
        piece_fibers = [coupling[column] if isinstance(coupling, MapPair)
                        else ConstFiber(_joint_measure(coupling, column))
                        for coupling in self.piece_couplings]
        return FiberPlan(self.base, atom_fibers, piece_fibers)

    def first_marginal(self):
        return self._marginal(0)

    def second_marginal(self):
        return self._marginal(1)

    def cost(self):
        '''Integral of |y1 - y2|^2.'''
        total = sum(atom.m * np.sum(coupling[:, 2] * (coupling[:, 0] - coupling[:, 1]) ** 2)
                    for atom, coupling in zip(self.base.atoms, self.atom_couplings))
        for piece, coupling in zip(self.base.pieces, self.piece_couplings):
            if isinstance(coupling, MapPair):
                total += piece.m * _piece_average(
                    lambda x, c=coupling: _fiber_distance_squared(c.first, c.second, x), piece)
            else:
                total += piece.m * np.sum(coupling[:, 2] * (coupling[:, 0] - coupling[:, 1]) ** 2)
        return float(total)


def _glue_pieces(first, second, couple):
    couplings = []
    for index, (one, two) in enumerate(zip(first.piece_fibers, second.piece_fibers)):
        if isinstance(one, ConstFiber) and isinstance(two, ConstFiber):
            couplings.append(couple(one.measure, two.measure))
        elif as_map_fiber(one) is not None and as_map_fiber(two) is not None:
            couplings.append(MapPair(as_map_fiber(one), as_map_fiber(two)))
        else:
            raise DomainError(f"Cannot glue a map fiber with a spread fiber on piece {index}.")
    return couplings


def glue(first, second, strategy='comonotone'):
    '''Couples the two plans fiber by fiber over their common base.'''
    expect(strategy in STRATEGIES, f"Unknown gluing strategy {strategy!r}.")
    first, second = common_refinement(first, second)
    couple = _COUPLINGS[strategy]
    atom_couplings = [couple(one, two) for one, two in zip(first.atom_fibers, second.atom_fibers)]
    return GluedPlan(first.base, atom_couplings, _glue_pieces(first, second, couple))


def oplus_add(glued):
    '''Returns (x, y1 + y2)#glued.'''
    atom_fibers = [ScalarMeasure(atoms=zip(c[:, 0] + c[:, 1], c[:, 2]))
                   for c in glued.atom_couplings]
    piece_fibers = []
    for coupling in glued.piece_couplings:
        if isinstance(coupling, MapPair):
            piece_fibers.append(MapFiber(coupling.first.a + coupling.second.a,
                                         coupling.first.b + coupling.second.b))
        else:
            piece_fibers.append(ConstFiber(ScalarMeasure(
                atoms=zip(coupling[:, 0] + coupling[:, 1], coupling[:, 2]))))
    return FiberPlan(glued.base, atom_fibers, piece_fibers)


def optimal_glue(first, second):
    '''Cost-minimizing gluing, solved fiber by fiber with the transportation LP.'''
    from monoplan.oracle import oracle_coupling  # pylint: disable=import-outside-toplevel

    def couple(one, two):
        expect(len(_atomic(one).atoms) <= ADM_MAX_POINTS and len(_atomic(two).atoms) <= ADM_MAX_POINTS,
               f"Fibers are limited to {ADM_MAX_POINTS} points.", SizeError)
        table, _ = oracle_coupling(one, two)
        return table.triples()

    first, second = common_refinement(first, second)
    atom_couplings = [couple(one, two) for one, two in zip(first.atom_fibers, second.atom_fibers)]
    return GluedPlan(first.base, atom_couplings, _glue_pieces(first, second, couple))


def w_rho_via_adm(first, second):
    '''Fibered distance as the minimal cost over gluings of the two plans.'''
    return math.sqrt(max(0.0, optimal_glue(first, second).cost()))
