# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
The tangent cone of the monotone cone.

A plan is tangent exactly when it is induced by a map on the diffuse part of
the base, with arbitrary fibers over base atoms. Membership is read off the
fibers; the witness constructions below build, for each n, a plan whose
(x, x + tau_n * y) image is monotone and which approaches the target as n
grows.
'''

import logging
import math
from collections import namedtuple
import numpy as np
from monoplan.cone import is_monotone
from monoplan.errors import NumericError, PreconditionError, expect
from monoplan.measures import (TOLERANCE, PiecewiseAffineMap, ScalarMeasure, pushforward,
                               wasserstein2_squared)
from monoplan.plans import (ConstFiber, FiberPlan, MapFiber, as_map_fiber, fiber_affine_push, glue,
                            oplus_add, require_same_base, w_rho, w_rho_squared)

logger = logging.getLogger("root")

IDENTITY_TOLERANCE = 1e-9

MapPart = namedtuple('MapPart', ['piece', 'fiber'])
AtomSpread = namedtuple('AtomSpread', ['x', 'fiber', 'm'])
SplitTerms = namedtuple('SplitTerms', ['map_term', 'atom_term'])
WitnessStep = namedtuple('WitnessStep', ['n', 'plan_n', 'tau_n', 'pushed_n', 'wrho_to_target',
                                         'monotone_ok', 'target', 'split_terms'],
                         defaults=(None,))


class TangentDecomposition(namedtuple('TangentDecomposition', ['map_part', 'atom_part'])):
    '''A map on the diffuse pieces plus a spread fiber at every base atom.'''

    def linking_map(self):
        '''The map part as a PiecewiseAffineMap (zero map for atomic bases).'''
        if not self.map_part:
            return PiecewiseAffineMap.affine(0.0, 0.0)
        return PiecewiseAffineMap([(part.piece.a, part.piece.b, part.fiber.a, part.fiber.b)
                                   for part in self.map_part])

    def assemble(self, base=None):
        '''Rebuilds the plan. Without `base` the base is rebuilt from the parts.'''
        if base is None:
            base = ScalarMeasure([(spread.x, spread.m) for spread in self.atom_part],
                                 [part.piece for part in self.map_part])
        return FiberPlan(base, [spread.fiber for spread in self.atom_part],
                         [part.fiber for part in self.map_part])

    def to_json(self):
        return {"map_part": [{"a": part.piece.a, "b": part.piece.b, "m": part.piece.m,
                              "intercept": part.fiber.a, "slope": part.fiber.b}
                             for part in self.map_part],
                "atom_part": [{"x": spread.x, "m": spread.m, "fiber": spread.fiber.to_json()}
                              for spread in self.atom_part]}


def tangent_membership(plan):
    '''Returns (True, decomposition) if every diffuse piece carries a map
    fiber, else (False, None). Fibers over atoms are unconstrained.'''
    map_part = []
    for piece, fiber in zip(plan.base.pieces, plan.piece_fibers):
        as_map = as_map_fiber(fiber)
        if as_map is None:
            return False, None
        map_part.append(MapPart(piece, as_map))
    atom_part = [AtomSpread(atom.x, fiber, atom.m)
                 for atom, fiber in zip(plan.base.atoms, plan.atom_fibers)]
    return True, TangentDecomposition(tuple(map_part), tuple(atom_part))


def decompose_monotone(plan):
    '''Decomposition of a monotone plan into a nondecreasing map on the
    diffuse part and the spread fibers over atoms.'''
    report = is_monotone(plan)
    if not report.monotone:
        raise PreconditionError(f"Plan is not monotone: {report.violation}.", report)
    member, decomposition = tangent_membership(plan)
    assert member, "A monotone plan cannot carry a spread fiber on a diffuse piece."
    assert all(part.fiber.b >= -TOLERANCE for part in decomposition.map_part)
    return decomposition


def _interior_point(left, right):
    if math.isinf(left) and math.isinf(right):
        return 0.0
    if math.isinf(left):
        return right - 1.0
    if math.isinf(right):
        return left + 1.0
    return (left + right) / 2


def _intervals(points):
    edges = [-math.inf] + list(points) + [math.inf]
    return list(zip(edges[:-1], edges[1:]))


def _chord(left, left_value, right, right_value):
    slope = (right_value - left_value) / (right - left)
    return (left, right, left_value - slope * left, slope)


def continuous_extension(mapping):
    '''Version of `mapping` defined on the whole line: gaps between pieces are
    bridged by the chord between the end values and is constant beyond the
    outermost pieces. Agrees with `mapping` wherever that is defined.'''
    points = mapping.breakpoints()
    if not points:
        return mapping
    pieces = [(t, t, mapping(t), 0.0) for t in points]
    for left, right in _intervals(points):
        affine = mapping.piece_at(_interior_point(left, right))
        if affine is not None:
            pieces.append((left, right, affine.intercept, affine.slope))
        elif math.isinf(left):
            pieces.append((left, right, mapping(right), 0.0))
        elif math.isinf(right):
            pieces.append((left, right, mapping(left), 0.0))
        else:
            pieces.append(_chord(left, mapping(left), right, mapping(right)))
    return PiecewiseAffineMap(pieces)


def ramp_mollification(mapping, width):
    '''Replaces every downward jump of a map defined on the whole line by a
    chord of width at most `width` on the side the value at the jump does not
    belong to. Upward jumps are kept.'''
    points = mapping.breakpoints()
    point_pieces = [(t, t, mapping(t), 0.0) for t in points]
    chords, spans = [], []
    for index, (left, right) in enumerate(_intervals(points)):
        affine = mapping.piece_at(_interior_point(left, right))
        assert affine is not None, "ramp_mollification needs a map defined everywhere."
        spans.append((left, right, affine.intercept, affine.slope))

        def value(x, affine=affine):
            return affine.intercept + affine.slope * x

        ramp = min(width, (right - left) / 2)
        if index > 0:
            start = mapping(left)
            if value(left) < start - TOLERANCE * max(1.0, abs(start)):
                chords.append(_chord(left, start, left + ramp, value(left + ramp)))
        if index < len(points):
            end = mapping(right)
            if value(right) > end + TOLERANCE * max(1.0, abs(end)):
                chords.append(_chord(right - ramp, value(right - ramp), right, end))
    return PiecewiseAffineMap(point_pieces + chords + spans)


def _certified_push(plan, tau):
    pushed = fiber_affine_push(plan, 0.0, 1.0, tau)
    report = is_monotone(pushed)
    if not report.monotone:
        raise NumericError(f"Pushed witness is not monotone at tau={tau!r}: {report.violation}.")
    return pushed


def _check_defined(mapping, base):
    for atom in base.atoms:
        expect(mapping.piece_at(atom.x) is not None, f"Map is undefined at base atom {atom.x!r}.")
    for piece in base.pieces:
        expect(mapping.covers(piece.a, piece.b),
               f"Map is undefined on part of base piece [{piece.a!r}, {piece.b!r}].")


def witness_function(g, base, n):
    '''Witness for the map-induced plan (id, g)#base: downward jumps are
    ramped over width 1/n and tau_n = 1/2 / max(1, sup |g_n'|).'''
    expect(n >= 1, "n must be at least 1.")
    _check_defined(g, base)
    total = continuous_extension(g)
    g_n = ramp_mollification(total, 1.0 / n)
    tau = 0.5 / max(1.0, g_n.max_abs_slope())

    refined = base.split_pieces(total.breakpoints() + g_n.breakpoints())
    plan = FiberPlan.from_map(refined, g_n)
    target = FiberPlan.from_map(refined, total)
    pushed = _certified_push(plan, tau)
    return WitnessStep(n, plan, tau, pushed, w_rho(plan, target), True, target)


def _map_velocity_term(collapse, base, x0, n):
    '''Integral of |n (S(x) - x)|^2 over the base without the atom at x0,
    together with the largest |n (S(x) - x)| at the evaluation points.'''
    total, largest = 0.0, 0.0
    for atom in base.atoms:
        if atom.x == x0:
            continue
        velocity = n * (collapse(atom.x) - atom.x)
        total += atom.m * velocity ** 2
        largest = max(largest, abs(velocity))
    for piece in base.pieces:
        affine = collapse.restricted(piece.a, piece.b)
        ends = [n * (affine.intercept + (affine.slope - 1) * x)
                for x in (piece.a, (piece.a + piece.b) / 2, piece.b)]
        total += piece.m * (ends[0] ** 2 + 4 * ends[1] ** 2 + ends[2] ** 2) / 6
        largest = max(largest, abs(ends[0]), abs(ends[2]))
    return total, largest


def witness_atom(nu, x0, base, n):
    '''Witness for the plan with fiber nu over the base atom x0 and zero
    fibers elsewhere.

    With alpha the half-width of the smallest symmetric interval holding
    supp(nu), alpha_n = alpha * n / (n + 1) and h = alpha_n / n, the position
    plan m_n spreads nu over [x0 - h, x0 + h] and moves the rest of the base
    out of that window. Its velocity plan n * (m_n - x) is the witness at
    tau_n = 1/n. The squared distance to the target must split into the part
    off x0 and the clipped-fiber part at x0.

    Base mass at distance d < h from x0 moves with velocity n * (h - d), which
    can grow with n, so the error is only guaranteed to decrease for n with h
    below the distance from x0 to the rest of the base.'''
    expect(n >= 1, "n must be at least 1.")
    index = base.atom_index(x0)
    if index is None:
        raise PreconditionError(f"{x0!r} is not an atom of the base.")
    x0, m0 = base.atoms[index]

    low, high = nu.hull()
    alpha = max(abs(low), abs(high))
    alpha_n = alpha * n / (n + 1)
    h = alpha_n / n
    collapse = PiecewiseAffineMap([(x0, x0 + h, x0 + h, 0.0), (x0 - h, x0, x0 - h, 0.0),
                                   (-math.inf, x0 - h, 0.0, 1.0), (x0 + h, math.inf, 0.0, 1.0)])
    spread = PiecewiseAffineMap([(-alpha_n, alpha_n, x0, 1.0 / n),
                                 (-math.inf, -alpha_n, x0 - h, 0.0),
                                 (alpha_n, math.inf, x0 + h, 0.0)])
    clip = PiecewiseAffineMap([(-alpha_n, alpha_n, 0.0, 1.0), (-math.inf, -alpha_n, -alpha_n, 0.0),
                               (alpha_n, math.inf, alpha_n, 0.0)])

    positions = FiberPlan.from_map(base, collapse).with_atom_fiber(x0, pushforward(nu, spread))
    report = is_monotone(positions)
    if not report.monotone:
        raise NumericError(f"Position plan for n={n} is not monotone: {report.violation}.")

    plan = fiber_affine_push(positions, 0.0, -n, n)
    target = FiberPlan.zero(plan.base).with_atom_fiber(x0, nu)
    tau = 1.0 / n
    pushed = _certified_push(plan, tau)
    distance_squared = w_rho_squared(plan, target)

    map_term, largest = _map_velocity_term(collapse, plan.base, x0, n)
    atom_term = m0 * wasserstein2_squared(pushforward(nu, clip), nu)
    if abs(distance_squared - map_term - atom_term) > IDENTITY_TOLERANCE * max(1.0, distance_squared):
        raise NumericError(f"Distance split failed for n={n}: {distance_squared!r} != "
                           f"{map_term!r} + {atom_term!r}.")
    if largest > 2 * alpha + IDENTITY_TOLERANCE:
        raise NumericError(f"Velocity {largest!r} exceeds twice the fiber radius {alpha!r}.")

    return WitnessStep(n, plan, tau, pushed, math.sqrt(distance_squared), True, target,
                       SplitTerms(map_term, atom_term))


def truncate_support(plan, n):
    '''Sends every fiber point with |y| > n to 0. Map fibers are cut where
    they cross +-n.'''
    expect(n > 0, "The truncation level must be positive.")
    cutoff = PiecewiseAffineMap([(-n, n, 0.0, 1.0), (-math.inf, -n, 0.0, 0.0),
                                 (n, math.inf, 0.0, 0.0)])

    def truncated(fiber):
        result = pushforward(fiber, cutoff)
        error, bound = wasserstein2_squared(result, fiber), fiber.tail_second_moment(n)
        if error > bound + IDENTITY_TOLERANCE * max(1.0, bound):
            raise NumericError(f"Truncation error {error!r} exceeds the tail moment {bound!r}.")
        return result

    atom_fibers = [truncated(fiber) for fiber in plan.atom_fibers]
    pieces, piece_fibers = [], []
    for piece, fiber in zip(plan.base.pieces, plan.piece_fibers):
        if isinstance(fiber, ConstFiber):
            pieces.append(piece)
            piece_fibers.append(ConstFiber(truncated(fiber.measure)))
            continue
        edges = [piece.a, piece.b]
        if fiber.b != 0:
            edges += [(level - fiber.a) / fiber.b for level in (-n, n)]
        edges = sorted(edge for edge in set(edges) if piece.a <= edge <= piece.b)
        for left, right in zip(edges[:-1], edges[1:]):
            middle = (left + right) / 2
            inside = abs(fiber.a + fiber.b * middle) <= n
            pieces.append((left, right, piece.m * (right - left) / (piece.b - piece.a)))
            piece_fibers.append(fiber if inside else MapFiber(0.0, 0.0))

    base = plan.base if len(pieces) == len(plan.base.pieces) else \
        ScalarMeasure(plan.base.atoms, pieces)
    return FiberPlan(base, atom_fibers, piece_fibers)


def truncate_atoms(plan, count):
    '''Keeps the fibers of the `count` heaviest atoms (ties: leftmost first)
    and sets the rest to the Dirac mass at 0.'''
    expect(count >= 1, "The number of kept atoms must be at least 1.")
    atoms = plan.base.atoms
    order = sorted(range(len(atoms)), key=lambda i: (-atoms[i].m, atoms[i].x))
    dropped = order[count:]
    fibers = list(plan.atom_fibers)
    for i in dropped:
        fibers[i] = ScalarMeasure.dirac(0.0)
    result = FiberPlan(plan.base, fibers, plan.piece_fibers)

    predicted = sum(atoms[i].m * plan.atom_fibers[i].second_moment() for i in dropped)
    actual = w_rho_squared(result, plan)
    if abs(actual - predicted) > IDENTITY_TOLERANCE * max(1.0, predicted):
        raise NumericError(f"Atom truncation error {actual!r} differs from {predicted!r}.")
    return result


def _refined_step(step, cuts, tau):
    plan = step.plan_n.refine(cuts)
    target = step.target.refine(cuts)
    require_same_base(plan, target)
    pushed = step.pushed_n if tau == step.tau_n and plan is step.plan_n else \
        _certified_push(plan, tau)
    return step._replace(plan_n=plan, target=target, tau_n=tau, pushed_n=pushed)


def align_witnesses(first, second):
    '''Puts two witness steps on a common base refinement and the common
    scaling min(tau_1, tau_2), which stays admissible.'''
    cuts = set(first.plan_n.piece_edges()) | set(second.plan_n.piece_edges())
    tau = min(first.tau_n, second.tau_n)
    first, second = _refined_step(first, cuts, tau), _refined_step(second, cuts, tau)
    require_same_base(first.plan_n, second.plan_n)
    return first, second


def convexity_witness(first, second, strategy='comonotone'):
    '''Witness for the sum of two targets: the glued sum of the two plans is
    monotone at half the common scaling, since each of its pushed support
    points is the midpoint of pushed support points of the two plans.'''
    require_same_base(first.plan_n, second.plan_n)
    expect(abs(first.tau_n - second.tau_n) <= TOLERANCE * max(1.0, first.tau_n),
           "Witnesses must share tau; align them first.")
    tau = first.tau_n / 2
    plan = oplus_add(glue(first.plan_n, second.plan_n, strategy))
    target = oplus_add(glue(first.target, second.target, strategy))
    pushed = _certified_push(plan, tau)
    return WitnessStep(first.n, plan, tau, pushed, w_rho(plan, target), True, target)


def tangent_witness(plan, n, strategy='comonotone'):
    '''Witness step for any member of the tangent cone: the map part and each
    atom fiber (shifted by the map value there) are witnessed separately and
    summed.'''
    member, decomposition = tangent_membership(plan)
    if not member:
        raise PreconditionError("Plan is not tangent: a diffuse piece carries a spread fiber.")
    total = continuous_extension(decomposition.linking_map())
    step = witness_function(total, plan.base, n)
    for atom, fiber in zip(plan.base.atoms, plan.atom_fibers):
        shifted = pushforward(fiber, PiecewiseAffineMap.translation(total(atom.x)))
        atom_step = witness_atom(shifted, atom.x, plan.base, n)
        step, atom_step = align_witnesses(step, atom_step)
        step = convexity_witness(step, atom_step, strategy)

    target = plan.refine(step.plan_n.piece_edges())
    require_same_base(step.plan_n, target)
    logger.debug("Tangent witness for n=%d uses tau=%r.", n, step.tau_n)
    return step._replace(target=target, wrho_to_target=w_rho(step.plan_n, target))


def witness_support_midpoints(first, second, combined, strategy='comonotone'):
    '''For each base atom, checks that every support point of the combined
    pushed plan is the midpoint of pushed support points of the two inputs.'''
    glued = glue(first.plan_n, second.plan_n, strategy)
    for atom, coupling, fiber in zip(combined.pushed_n.base.atoms, glued.atom_couplings,
                                     combined.pushed_n.atom_fibers):
        one = atom.x + first.tau_n * coupling[:, 0]
        two = atom.x + second.tau_n * coupling[:, 1]
        midpoints = (one + two) / 2
        for point in fiber.atoms:
            if np.min(np.abs(midpoints - point.x)) > 1e-9 * max(1.0, abs(point.x)):
                return False
    return True
