# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Slow reference solvers that share no code path with the fast ones: a
transportation simplex for discrete couplings, a Dykstra projection for the
monotone cone and bisection for the admissible scaling interval.
'''

import logging
import math
from collections import deque, namedtuple
import numpy as np
from monoplan.cone import Projection, is_monotone
from monoplan.errors import NumericError, SizeError, expect
from monoplan.plans import FiberPlan, fiber_affine_push
from monoplan.measures import ScalarMeasure

logger = logging.getLogger("root")

MAX_COUPLING_POINTS = 16
MAX_PROJECTION_ATOMS = 4
MAX_PROJECTION_POINTS = 6
MAX_PIVOTS = 10_000
DYKSTRA_TOLERANCE = 1e-11
DYKSTRA_MAX_SWEEPS = 1_000_000


class CouplingTable(namedtuple('CouplingTable',
                               ['rows', 'columns', 'row_masses', 'column_masses', 'cells'])):
    '''A coupling of two atomic measures: `cells[i, j]` is the mass moved from
    rows[i] to columns[j].'''

    def marginal_error(self):
        return max(np.max(np.abs(self.cells.sum(axis=1) - self.row_masses)),
                   np.max(np.abs(self.cells.sum(axis=0) - self.column_masses)))

    def triples(self):
        '''Nonzero cells as an (N, 3) array of (row point, column point, mass).'''
        i, j = np.nonzero(self.cells > 0)
        return np.column_stack([self.rows[i], self.columns[j], self.cells[i, j]])


def _north_west_corner(supply, demand):
    '''Initial basic feasible solution with exactly m + n - 1 basic cells
    (degenerate zeros included).'''
    supply, demand = supply.copy(), demand.copy()
    m, n = len(supply), len(demand)
    flow = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        amount = min(supply[i], demand[j])
        flow[i, j] = amount
        basis.append((i, j))
        supply[i] -= amount
        demand[j] -= amount
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1 or supply[i] <= demand[j]:
            i += 1
        else:
            j += 1
    return flow, basis


def _potentials(cost, basis, m, n):
    '''Solves u[i] + v[j] = cost[i, j] on the basis tree.'''
    u, v = np.full(m, np.nan), np.full(n, np.nan)
    u[0] = 0.0
    pending = list(basis)
    while pending:
        remaining = []
        for i, j in pending:
            if not np.isnan(u[i]):
                v[j] = cost[i, j] - u[i]
            elif not np.isnan(v[j]):
                u[i] = cost[i, j] - v[j]
            else:
                remaining.append((i, j))
        assert len(remaining) < len(pending), "Basis is not a spanning tree."
        pending = remaining
    return u, v


def _tree_path(basis, column, row):
    '''Basic cells on the tree path from column node `column` to row node `row`.'''
    adjacency = {}
    for i, j in basis:
        adjacency.setdefault(('r', i), []).append((('c', j), (i, j)))
        adjacency.setdefault(('c', j), []).append((('r', i), (i, j)))
    start, goal = ('c', column), ('r', row)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for neighbour, cell in adjacency.get(node, []):
            if neighbour not in parent:
                parent[neighbour] = (node, cell)
                queue.append(neighbour)
    path = []
    node = goal
    while parent[node] is not None:
        node, cell = parent[node]
        path.append(cell)
    return path[::-1]


def transportation_simplex(supply, demand, cost):
    '''Minimum cost flow between supply and demand vectors (equal totals).
    Returns (flow, value).'''
    supply, demand = np.asarray(supply, float), np.asarray(demand, float)
    m, n = len(supply), len(demand)
    flow, basis = _north_west_corner(supply, demand)
    scale = max(1.0, float(np.max(np.abs(cost))))

    for pivot in range(MAX_PIVOTS):
        u, v = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        for i, j in basis:
            reduced[i, j] = 0.0
        i, j = np.unravel_index(np.argmin(reduced), reduced.shape)
        if reduced[i, j] >= -1e-12 * scale:
            logger.debug("Transportation simplex finished after %d pivots.", pivot)
            return flow, float(np.sum(flow * cost))

        # Cycle: entering cell gains, then signs alternate along the tree path.
        path = _tree_path(basis, j, i)
        losing = path[0::2]
        gaining = path[1::2]
        theta = min(flow[cell] for cell in losing)
        leaving = next(cell for cell in losing if flow[cell] == theta)
        for cell in losing:
            flow[cell] -= theta
        for cell in gaining:
            flow[cell] += theta
        flow[i, j] += theta
        flow[leaving] = 0.0
        basis.remove(leaving)
        basis.append((i, j))
    raise NumericError(f"Transportation simplex did not converge in {MAX_PIVOTS} pivots.")


def oracle_coupling(first, second):
    '''Optimal quadratic-cost coupling of two atomic measures.
    Returns (CouplingTable, cost).'''
    for measure in (first, second):
        expect(measure.is_atomic, "The coupling oracle needs atomic measures.")
        expect(len(measure.atoms) <= MAX_COUPLING_POINTS,
               f"The coupling oracle is limited to {MAX_COUPLING_POINTS} points.", SizeError)
    rows = np.array([atom.x for atom in first.atoms])
    columns = np.array([atom.x for atom in second.atoms])
    row_masses = np.array([atom.m for atom in first.atoms])
    column_masses = np.array([atom.m for atom in second.atoms])
    # Equal totals are required by the simplex.
    column_masses = column_masses * row_masses.sum() / column_masses.sum()

    cost = (rows[:, None] - columns[None, :]) ** 2
    flow, value = transportation_simplex(row_masses, column_masses, cost)
    table = CouplingTable(rows, columns, row_masses, column_masses, np.clip(flow, 0.0, None))
    assert table.marginal_error() < 1e-9
    return table, max(0.0, value)


def oracle_w2(first, second):
    '''Discrete quadratic Wasserstein distance from the coupling LP.'''
    return math.sqrt(oracle_coupling(first, second)[1])


def _pair_projection(values, weights, offset):
    '''Weighted projection onto {z[k] <= z[k+1] for k = offset, offset+2, ...}.
    The pairs are disjoint, so each is pooled independently.'''
    result = values.copy()
    left = np.arange(offset, len(values) - 1, 2)
    right = left + 1
    violated = result[left] > result[right]
    left, right = left[violated], right[violated]
    pooled = (weights[left] * result[left] + weights[right] * result[right]) / \
        (weights[left] + weights[right])
    result[left] = pooled
    result[right] = pooled
    return result


def dykstra_isotonic(values, weights):
    '''Weighted least squares nondecreasing fit by Dykstra's alternating
    projections onto the even and odd pair constraints.'''
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    x = values.copy()
    increments = [np.zeros_like(x), np.zeros_like(x)]
    for sweep in range(DYKSTRA_MAX_SWEEPS):
        previous = x
        for block in (0, 1):
            shifted = x + increments[block]
            x = _pair_projection(shifted, weights, block)
            increments[block] = shifted - x
        if np.max(np.abs(x - previous)) < DYKSTRA_TOLERANCE:
            logger.debug("Dykstra converged after %d sweeps.", sweep + 1)
            return x
    raise NumericError(f"Dykstra projection did not converge in {DYKSTRA_MAX_SWEEPS} sweeps.")


def oracle_project(plan, grid_cells=None):
    '''Projection onto the monotone cone for small atomic plans, solved on the
    fiber atoms themselves. `grid_cells` is accepted for call compatibility
    with project_cone; atomic fibers need no grid.'''
    del grid_cells
    expect(plan.base.is_atomic, "The projection oracle needs an atomic base.")
    expect(len(plan.base.atoms) <= MAX_PROJECTION_ATOMS,
           f"The projection oracle is limited to {MAX_PROJECTION_ATOMS} base atoms.", SizeError)
    for fiber in plan.atom_fibers:
        expect(fiber.is_atomic, "The projection oracle needs atomic fibers.")
        expect(len(fiber.atoms) <= MAX_PROJECTION_POINTS,
               f"The projection oracle is limited to {MAX_PROJECTION_POINTS} points per fiber.",
               SizeError)

    values = np.array([atom.x for fiber in plan.atom_fibers for atom in fiber.atoms])
    weights = np.array([base_atom.m * atom.m
                        for base_atom, fiber in zip(plan.base.atoms, plan.atom_fibers)
                        for atom in fiber.atoms])
    fitted = dykstra_isotonic(values, weights)

    fibers, start = [], 0
    for fiber in plan.atom_fibers:
        stop = start + len(fiber.atoms)
        fibers.append(ScalarMeasure(atoms=zip(fitted[start:stop], [a.m for a in fiber.atoms])))
        start = stop
    distance = math.sqrt(float(np.sum(weights * (fitted - values) ** 2)))
    return Projection(FiberPlan(plan.base, fibers), distance)


def oracle_lambda_max(plan, upper=1.0, iterations=200):
    '''Bisection estimate of the admissible scaling supremum. Returns inf when
    no doubling of `upper` up to 2**64 times breaks monotonicity.'''
    def admissible(tau):
        return is_monotone(fiber_affine_push(plan, 0.0, 1.0, tau)).monotone

    high = upper
    for _ in range(64):
        if not admissible(high):
            break
        high *= 2
    else:
        return math.inf

    low = 0.0
    for _ in range(iterations):
        middle = (low + high) / 2
        if middle in (low, high):
            break
        if admissible(middle):
            low = middle
        else:
            high = middle
    return (low + high) / 2
