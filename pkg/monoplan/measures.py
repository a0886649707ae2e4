# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
This module contains ScalarMeasure, a probability measure on the real line made
of finitely many atoms plus finitely many uniform pieces, and the quantile
calculus built on it: pushforwards by piecewise affine maps, moments and the
quadratic Wasserstein distance.
'''

import logging
import math
import numbers
from collections import namedtuple
import numpy as np
from monoplan.errors import DomainError, expect

logger = logging.getLogger("root")

TOLERANCE = 1e-12
DEFAULT_CELLS_PER_PIECE = 1024

Atom = namedtuple('Atom', ['x', 'm'])
Piece = namedtuple('Piece', ['a', 'b', 'm'])
AffinePiece = namedtuple('AffinePiece', ['lo', 'hi', 'intercept', 'slope'])


def _number(value, what):
    expect(isinstance(value, numbers.Real) and not isinstance(value, bool),
           f"{what} must be a number, got {value!r}.")
    value = float(value)
    expect(math.isfinite(value), f"{what} must be finite, got {value!r}.")
    return value


def _merge_atoms(atoms):
    '''Sort atoms and merge those closer than TOLERANCE (mass is summed, the
    leftmost position is kept).'''
    merged = []
    for x, m in sorted(atoms):
        if merged and x - merged[-1][0] <= TOLERANCE:
            merged[-1][1] += m
        else:
            merged.append([x, m])
    return [Atom(x, m) for x, m in merged]


def _disjoint_pieces(pieces):
    '''Returns sorted pieces with pairwise disjoint interiors. Overlapping
    pieces are replaced by the piecewise constant density they sum to.'''
    pieces = sorted(pieces)
    if all(left.b <= right.a for left, right in zip(pieces[:-1], pieces[1:])):
        return pieces

    edges = sorted({edge for piece in pieces for edge in (piece.a, piece.b)})
    result = []
    for left, right in zip(edges[:-1], edges[1:]):
        density = sum(piece.m / (piece.b - piece.a) for piece in pieces
                      if piece.a <= left and right <= piece.b)
        if density > 0:
            result.append(Piece(left, right, density * (right - left)))
    return result


class ScalarMeasure:
    '''A probability measure sum(m_i delta_{x_i}) + sum(uniform pieces). Atoms
    may sit inside pieces; the measure is the sum of both. Instances are
    immutable.'''

    def __init__(self, atoms=(), pieces=()):
        atoms = [Atom(_number(x, "Atom position"), _number(m, "Atom mass")) for x, m in atoms]
        pieces = [Piece(_number(a, "Piece left end"), _number(b, "Piece right end"),
                        _number(m, "Piece mass")) for a, b, m in pieces]
        expect(all(atom.m > 0 for atom in atoms), "Atom masses must be positive.")
        expect(all(piece.m > 0 for piece in pieces), "Piece masses must be positive.")
        expect(all(piece.b > piece.a for piece in pieces), "Pieces must have right > left.")
        expect(atoms or pieces, "A measure needs at least one atom or piece.")

        atoms = _merge_atoms(atoms)
        pieces = _disjoint_pieces(pieces)

        self.raw_total = sum(atom.m for atom in atoms) + sum(piece.m for piece in pieces)
        if abs(self.raw_total - 1) > TOLERANCE:
            logger.debug("Rescaling measure with total mass %r to a probability.", self.raw_total)
            atoms = [Atom(atom.x, atom.m / self.raw_total) for atom in atoms]
            pieces = [Piece(piece.a, piece.b, piece.m / self.raw_total) for piece in pieces]

        self._atoms = tuple(atoms)
        self._pieces = tuple(pieces)
        self.__build_cells()

    def __build_cells(self):
        '''Cut pieces at the atoms they contain and order all cells by position,
        so that the quantile function is affine on each cell.'''
        positions = np.array([atom.x for atom in self._atoms])
        cells = [(atom.x, atom.x, atom.m) for atom in self._atoms]
        for piece in self._pieces:
            inside = positions[(positions > piece.a) & (positions < piece.b)]
            edges = [piece.a, *inside, piece.b]
            density = piece.m / (piece.b - piece.a)
            for left, right in zip(edges[:-1], edges[1:]):
                cells.append((left, right, density * (right - left)))
        cells.sort(key=lambda cell: (cell[0], cell[1]))

        cells = np.array(cells, dtype=float)
        cells.setflags(write=False)
        self._cells = cells
        self._cum = np.cumsum(cells[:, 2])
        self._cum_left = self._cum - cells[:, 2]

    # Constructors

    @classmethod
    def dirac(cls, x):
        '''Returns the Dirac mass at x.'''
        return cls(atoms=[(x, 1.0)])

    @classmethod
    def uniform(cls, a, b):
        '''Returns the uniform probability on [a, b].'''
        return cls(pieces=[(a, b, 1.0)])

    @classmethod
    def mixture(cls, components):
        '''Returns sum(w * measure) for (w, measure) pairs with positive weights.'''
        atoms, pieces = [], []
        for weight, measure in components:
            atoms += [(atom.x, weight * atom.m) for atom in measure.atoms]
            pieces += [(piece.a, piece.b, weight * piece.m) for piece in measure.pieces]
        return cls(atoms, pieces)

    # Accessors

    @property
    def atoms(self):
        '''Tuple of Atom(x, m) sorted by position.'''
        return self._atoms

    @property
    def pieces(self):
        '''Tuple of Piece(a, b, m) sorted by position.'''
        return self._pieces

    @property
    def cells(self):
        '''Read-only array of (lo, hi, mass) rows ordered by position.'''
        return self._cells

    @property
    def is_atomic(self):
        return len(self._pieces) == 0

    @property
    def is_dirac(self):
        return self.is_atomic and len(self._atoms) == 1

    def hull(self):
        '''Returns (min, max) of the support.'''
        return float(self._cells[:, 0].min()), float(self._cells[:, 1].max())

    def atom_index(self, x):
        '''Index of the atom within TOLERANCE of x, or None.'''
        for i, atom in enumerate(self._atoms):
            if abs(atom.x - x) <= TOLERANCE:
                return i
        return None

    # Moments

    def second_moment(self):
        return second_moment(self)

    def tail_second_moment(self, threshold):
        '''Returns the integral of x^2 over {|x| > threshold}.'''
        total = sum(atom.m * atom.x ** 2 for atom in self._atoms if abs(atom.x) > threshold)
        for piece in self._pieces:
            density = piece.m / (piece.b - piece.a)
            for left, right in ((max(piece.a, threshold), piece.b),
                                (piece.a, min(piece.b, -threshold))):
                if right > left:
                    total += density * (right ** 3 - left ** 3) / 3
        return total

    # Quantiles

    def quantiles(self, levels):
        '''Vectorised generalized inverse CDF, inf{t : F(t) >= s}.'''
        levels = np.asarray(levels, dtype=float)
        index = np.minimum(np.searchsorted(self._cum, levels, side='left'), len(self._cum) - 1)
        return self._affine_quantile(levels, index)

    def _affine_quantile(self, levels, index):
        '''Value at `levels` of the affine quantile of the cells in `index`.'''
        lo, hi, mass = self._cells[index, 0], self._cells[index, 1], self._cells[index, 2]
        fraction = np.clip((levels - self._cum_left[index]) / mass, 0.0, 1.0)
        return lo + fraction * (hi - lo)

    def cell_index(self, levels):
        '''Index of the cell holding each (interior) mass level.'''
        return np.minimum(np.searchsorted(self._cum, levels, side='left'), len(self._cum) - 1)

    @property
    def cumulative_masses(self):
        return self._cum

    # Transformations

    def split_pieces(self, cuts):
        '''Returns the same measure with every piece cut at the given points.'''
        cuts = sorted(set(float(cut) for cut in cuts))
        pieces = []
        for piece in self._pieces:
            edges = [piece.a] + [cut for cut in cuts if piece.a < cut < piece.b] + [piece.b]
            if len(edges) == 2:
                pieces.append(piece)
                continue
            for left, right in zip(edges[:-1], edges[1:]):
                pieces.append((left, right, piece.m * (right - left) / (piece.b - piece.a)))
        if len(pieces) == len(self._pieces):
            return self
        return ScalarMeasure(self._atoms, pieces)

    def difference(self, other, tolerance=TOLERANCE):
        '''Describes the first component in which two measures differ, or
        returns None if they agree within tolerance.'''
        if len(self._atoms) != len(other.atoms):
            return f"atom count {len(self._atoms)} != {len(other.atoms)}"
        if len(self._pieces) != len(other.pieces):
            return f"piece count {len(self._pieces)} != {len(other.pieces)}"
        for i, (mine, theirs) in enumerate(zip(self._atoms, other.atoms)):
            if max(abs(mine.x - theirs.x), abs(mine.m - theirs.m)) > tolerance:
                return f"atom {i}: {tuple(mine)} != {tuple(theirs)}"
        for i, (mine, theirs) in enumerate(zip(self._pieces, other.pieces)):
            if max(abs(u - v) for u, v in zip(mine, theirs)) > tolerance:
                return f"piece {i}: {tuple(mine)} != {tuple(theirs)}"
        return None

    def to_json(self):
        return {"atoms": [{"x": atom.x, "m": atom.m} for atom in self._atoms],
                "pieces": [{"a": piece.a, "b": piece.b, "m": piece.m} for piece in self._pieces]}

    @classmethod
    def from_json(cls, obj):
        '''Parse {"atoms":[{"x","m"}], "pieces":[{"a","b","m"}]}. Unknown fields
        are rejected.'''
        expect(isinstance(obj, dict), "A measure must be a JSON object.")
        expect(set(obj) <= {"atoms", "pieces"},
               f"Unknown measure fields: {sorted(set(obj) - {'atoms', 'pieces'})}.")
        atoms = [_fields(entry, ("x", "m"), "atom") for entry in obj.get("atoms", [])]
        pieces = [_fields(entry, ("a", "b", "m"), "piece") for entry in obj.get("pieces", [])]
        return cls(atoms, pieces)

    def __repr__(self):
        return f"ScalarMeasure(atoms={list(map(tuple, self._atoms))}, " \
               f"pieces={list(map(tuple, self._pieces))})"


def _fields(entry, names, what):
    expect(isinstance(entry, dict) and set(entry) == set(names),
           f"Each {what} must have exactly the fields {list(names)}, got {entry!r}.")
    return tuple(entry[name] for name in names)


class QuantileVector:
    '''Step function on a mass grid: `values[k]` is the quantile on the cell
    (breakpoints[k-1], breakpoints[k]].'''

    def __init__(self, breakpoints, values):
        breakpoints = np.array(breakpoints, dtype=float)
        values = np.array(values, dtype=float)
        expect(breakpoints.ndim == 1 and breakpoints.shape == values.shape and len(values) > 0,
               "Breakpoints and values must be non-empty vectors of equal length.")
        expect(np.all(np.diff(breakpoints) > 0) and breakpoints[0] > 0,
               "Breakpoints must be strictly increasing in (0, 1].")
        expect(abs(breakpoints[-1] - 1) <= 1e-9, "The last breakpoint must be 1.")
        expect(np.all(np.diff(values) >= 0), "Quantile values must be nondecreasing.")
        breakpoints[-1] = 1.0
        breakpoints.setflags(write=False)
        values.setflags(write=False)
        self.breakpoints = breakpoints
        self.values = values

    @classmethod
    def from_measure(cls, measure, cells_per_piece=DEFAULT_CELLS_PER_PIECE):
        '''Atoms become single cells; every diffuse cell is cut into
        `cells_per_piece` equal-mass cells valued at their mean quantile.'''
        expect(cells_per_piece >= 1, "cells_per_piece must be at least 1.")
        breakpoints, values = [], []
        for (lo, hi, mass), left in zip(measure.cells, measure.cumulative_masses - measure.cells[:, 2]):
            count = 1 if lo == hi else cells_per_piece
            offsets = np.arange(1, count + 1) / count
            breakpoints.extend(left + mass * offsets)
            values.extend(lo + (hi - lo) * (offsets - 0.5 / count))
        breakpoints = np.array(breakpoints)
        keep = np.concatenate([np.diff(breakpoints) > 0, [True]])
        return cls(breakpoints[keep] / breakpoints[-1], np.array(values)[keep])

    @property
    def widths(self):
        return np.diff(self.breakpoints, prepend=0.0)

    def to_measure(self):
        return ScalarMeasure(atoms=zip(self.values, self.widths))

    def __len__(self):
        return len(self.values)


class PiecewiseAffineMap:
    '''A map x -> intercept + slope * x given on finitely many closed intervals.
    Where listed pieces overlap, the first one containing the point wins.'''

    def __init__(self, pieces):
        pieces = [AffinePiece(float(lo), float(hi), _number(c, "Intercept"), _number(s, "Slope"))
                  for lo, hi, c, s in pieces]
        expect(pieces, "A piecewise affine map needs at least one piece.")
        expect(all(piece.lo <= piece.hi for piece in pieces), "Map pieces must have lo <= hi.")
        self.pieces = tuple(pieces)

    @classmethod
    def affine(cls, intercept, slope):
        '''x -> intercept + slope * x on the whole line.'''
        return cls([(-math.inf, math.inf, intercept, slope)])

    @classmethod
    def scaling(cls, factor):
        return cls.affine(0.0, factor)

    @classmethod
    def translation(cls, shift):
        '''x -> x - shift.'''
        return cls.affine(-shift, 1.0)

    def piece_at(self, x):
        '''Returns the AffinePiece defining the map at x, or None.'''
        for piece in self.pieces:
            if piece.lo <= x <= piece.hi:
                return piece
        return None

    def evaluate(self, x):
        piece = self.piece_at(x)
        if piece is None:
            raise DomainError(f"Map is undefined at {x!r}.")
        return piece.intercept + piece.slope * x

    __call__ = evaluate

    def covers(self, left, right):
        '''True if every point of [left, right] lies in some piece.'''
        if self.piece_at(left) is None:
            return False
        reached = left
        for piece in sorted(self.pieces):
            if piece.lo <= reached <= piece.hi:
                reached = max(reached, piece.hi)
        return reached >= right

    def breakpoints(self):
        '''Sorted finite interval ends.'''
        return sorted({end for piece in self.pieces for end in (piece.lo, piece.hi)
                       if math.isfinite(end)})

    def max_abs_slope(self):
        return max(abs(piece.slope) for piece in self.pieces)

    def restricted(self, left, right):
        '''AffinePiece in force on the open interval (left, right), which must
        not contain a breakpoint.'''
        middle = (left + right) / 2 if math.isfinite(left + right) else \
            (left + 1 if math.isfinite(left) else right - 1)
        piece = self.piece_at(middle)
        if piece is None:
            raise DomainError(f"Map is undefined on ({left!r}, {right!r}).")
        return piece


def quantile(measure, level):
    '''Returns inf{t : F(t) >= level} for level in (0, 1).'''
    expect(0 < level < 1, f"Quantile level must lie in (0, 1), got {level!r}.")
    return float(measure.quantiles([level])[0])


def pushforward(measure, mapping):
    '''Returns mapping#measure. Atoms map to atoms; a uniform piece maps to a
    uniform piece where the map has nonzero slope and to an atom where it is
    constant.'''
    atoms = [(mapping(atom.x), atom.m) for atom in measure.atoms]
    pieces = []
    cuts = mapping.breakpoints()
    for piece in measure.pieces:
        expect(mapping.covers(piece.a, piece.b),
               f"Map is undefined on part of [{piece.a!r}, {piece.b!r}].")
        edges = [piece.a] + [cut for cut in cuts if piece.a < cut < piece.b] + [piece.b]
        for left, right in zip(edges[:-1], edges[1:]):
            affine = mapping.restricted(left, right)
            mass = piece.m * (right - left) / (piece.b - piece.a)
            ends = sorted((affine.intercept + affine.slope * left,
                           affine.intercept + affine.slope * right))
            if ends[1] - ends[0] <= TOLERANCE * max(1.0, abs(ends[0])):
                atoms.append(((ends[0] + ends[1]) / 2, mass))
            else:
                pieces.append((ends[0], ends[1], mass))
    return ScalarMeasure(atoms, pieces)


def second_moment(measure):
    '''Closed form of the integral of x^2.'''
    return sum(atom.m * atom.x ** 2 for atom in measure.atoms) + \
        sum(piece.m * (piece.a ** 2 + piece.a * piece.b + piece.b ** 2) / 3
            for piece in measure.pieces)


def wasserstein2_squared(first, second):
    '''Squared quadratic Wasserstein distance as the L2 distance of quantile
    functions. Both quantiles are affine between consecutive merged mass
    breakpoints, so Simpson's rule integrates each interval exactly.'''
    grid = np.unique(np.clip(np.concatenate(
        [[0.0, 1.0], first.cumulative_masses, second.cumulative_masses]), 0.0, 1.0))
    low, high = grid[:-1], grid[1:]
    keep = high > low
    low, high = low[keep], high[keep]
    middle = (low + high) / 2

    first_cells, second_cells = first.cell_index(middle), second.cell_index(middle)
    total = 0.0
    weights = ((low, 1.0), (middle, 4.0), (high, 1.0))
    for levels, weight in weights:
        gap = first._affine_quantile(levels, first_cells) - \
            second._affine_quantile(levels, second_cells)
        total += weight * np.sum((high - low) * gap ** 2)
    return max(0.0, float(total) / 6)


def wasserstein2(first, second):
    '''Quadratic Wasserstein distance between two measures on the line.'''
    return math.sqrt(wasserstein2_squared(first, second))
