# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from monoplan import random_instances
from monoplan.errors import DomainError
from monoplan.measures import (PiecewiseAffineMap, QuantileVector, ScalarMeasure, pushforward,
                               quantile, second_moment, wasserstein2, wasserstein2_squared)

HALF_ZERO_ONE = ScalarMeasure(atoms=[(0, 0.5), (1, 0.5)])
HALF_ZERO_TWO = ScalarMeasure(atoms=[(0, 0.5), (2, 0.5)])

atomic_measures = st.lists(st.tuples(st.integers(-5, 5), st.integers(1, 9)),
                           min_size=1, max_size=8).map(lambda atoms: ScalarMeasure(atoms=atoms))
mixed_measures = st.builds(
    lambda atoms, pieces: ScalarMeasure(atoms, [(a, a + length, m) for a, length, m in pieces]),
    st.lists(st.tuples(st.integers(-5, 5), st.integers(1, 9)), min_size=1, max_size=4),
    st.lists(st.tuples(st.integers(-5, 5), st.integers(1, 3), st.integers(1, 9)), max_size=2))


def test_quantile_cases():
    assert(quantile(ScalarMeasure.dirac(0), 0.5) == 0)
    assert(quantile(HALF_ZERO_ONE, 0.75) == 1)
    assert(quantile(ScalarMeasure.uniform(0, 2), 0.25) == pytest.approx(0.5, abs=1e-15))
    assert(quantile(HALF_ZERO_ONE, 0.5) == 0)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.1, 1.5])
def test_quantile_rejects_levels_outside_unit_interval(level):
    with pytest.raises(DomainError):
        quantile(HALF_ZERO_ONE, level)


def test_pushforward_cases():
    assert(pushforward(ScalarMeasure.dirac(2), PiecewiseAffineMap.scaling(3)).atoms[0].x == 6)
    moved = pushforward(HALF_ZERO_ONE, PiecewiseAffineMap.translation(1))
    assert(moved.difference(ScalarMeasure(atoms=[(-1, 0.5), (0, 0.5)])) is None)
    stretched = pushforward(ScalarMeasure.uniform(0, 1), PiecewiseAffineMap.scaling(2))
    assert(stretched.difference(ScalarMeasure.uniform(0, 2)) is None)


def test_pushforward_constant_piece_becomes_atom():
    image = pushforward(ScalarMeasure.uniform(0, 1), PiecewiseAffineMap.affine(4, 0))
    assert(image.is_dirac)
    assert(image.atoms[0].x == 4)


def test_pushforward_needs_map_on_whole_piece():
    partial = PiecewiseAffineMap([(0, 0.5, 0, 1)])
    with pytest.raises(DomainError):
        pushforward(ScalarMeasure.uniform(0, 1), partial)


def test_pushforward_splits_at_map_breakpoints():
    folded = PiecewiseAffineMap([(0, 0.5, 0, 1), (0.5, 1, 1, -1)])
    image = pushforward(ScalarMeasure.uniform(0, 1), folded)
    assert(image.difference(ScalarMeasure.uniform(0, 0.5)) is None)


def test_wasserstein2_cases():
    assert(wasserstein2(HALF_ZERO_ONE, HALF_ZERO_TWO) == pytest.approx(math.sqrt(0.5), abs=1e-12))
    assert(wasserstein2(ScalarMeasure.dirac(0), ScalarMeasure.uniform(0, 1)) ==
           pytest.approx(math.sqrt(1 / 3), abs=1e-12))
    assert(wasserstein2(HALF_ZERO_TWO, HALF_ZERO_TWO) == 0)


def test_second_moment_cases():
    assert(second_moment(ScalarMeasure.dirac(0)) == 0)
    assert(second_moment(ScalarMeasure(atoms=[(-1, 0.5), (1, 0.5)])) == 1)
    assert(second_moment(ScalarMeasure.uniform(0, 1)) == pytest.approx(1 / 3, abs=1e-15))


def test_atoms_closer_than_tolerance_are_merged():
    measure = ScalarMeasure(atoms=[(1.0, 0.25), (1.0 + 1e-13, 0.25), (2.0, 0.5)])
    assert(len(measure.atoms) == 2)
    assert(measure.atoms[0] == (1.0, 0.5))


def test_total_mass_is_rescaled_and_reported():
    measure = ScalarMeasure(atoms=[(0, 2), (1, 2)])
    assert(measure.raw_total == 4)
    assert([atom.m for atom in measure.atoms] == [0.5, 0.5])


def test_overlapping_pieces_sum_their_densities():
    measure = ScalarMeasure(pieces=[(0, 2, 0.5), (1, 3, 0.5)])
    assert(measure.difference(ScalarMeasure(pieces=[(0, 1, 0.25), (1, 2, 0.5), (2, 3, 0.25)])) is None)


@pytest.mark.parametrize("atoms,pieces", [
    ([], []),
    ([(0, -1)], []),
    ([(math.nan, 1)], []),
    ([], [(1, 1, 1)]),
    ([], [(2, 1, 1)]),
    ([(True, 1)], []),
])
def test_invalid_measures_are_rejected(atoms, pieces):
    with pytest.raises(DomainError):
        ScalarMeasure(atoms, pieces)


def test_json_rejects_unknown_fields():
    with pytest.raises(DomainError):
        ScalarMeasure.from_json({"atoms": [{"x": 0, "m": 1}], "weights": []})
    with pytest.raises(DomainError):
        ScalarMeasure.from_json({"atoms": [{"x": 0, "m": 1, "label": "a"}]})


def test_json_keeps_atoms_and_pieces():
    measure = ScalarMeasure([(0.5, 0.25)], [(0, 1, 0.75)])
    assert(ScalarMeasure.from_json(measure.to_json()).difference(measure) is None)


def test_quantile_vector_of_atomic_measure_is_exact():
    vector = QuantileVector.from_measure(HALF_ZERO_TWO)
    assert(list(vector.values) == [0, 2])
    assert(list(vector.breakpoints) == [0.5, 1])
    assert(vector.to_measure().difference(HALF_ZERO_TWO) is None)


def test_quantile_vector_accepts_arrays_of_another_vector():
    vector = QuantileVector.from_measure(ScalarMeasure.uniform(0, 1), 4)
    assert(not vector.breakpoints.flags.writeable)
    rebuilt = QuantileVector(vector.breakpoints, np.ones(4))
    assert(list(rebuilt.breakpoints) == list(vector.breakpoints))
    assert(rebuilt.breakpoints is not vector.breakpoints)
    assert(np.allclose(vector.values, [0.125, 0.375, 0.625, 0.875]))
    assert(rebuilt.to_measure().difference(ScalarMeasure.dirac(1)) is None)


def test_quantile_vector_of_piece_has_cell_means():
    vector = QuantileVector.from_measure(ScalarMeasure.uniform(0, 1), 4)
    assert(np.allclose(vector.values, [0.125, 0.375, 0.625, 0.875]))
    assert(np.allclose(vector.widths, 0.25))


def test_tail_second_moment():
    measure = ScalarMeasure([(3, 0.5)], [(-2, 0, 0.5)])
    assert(measure.tail_second_moment(1) == pytest.approx(0.5 * 9 + 0.25 * 7 / 3, abs=1e-12))
    assert(measure.tail_second_moment(5) == 0)


def test_map_covers_and_first_piece_wins():
    mapping = PiecewiseAffineMap([(0, 1, 5, 0), (1, 2, 7, 0)])
    assert(mapping(1) == 5)
    assert(mapping.covers(0, 2))
    assert(not mapping.covers(-1, 2))
    assert(not PiecewiseAffineMap([(0, 1, 0, 1), (1.5, 2, 0, 1)]).covers(0, 2))
    with pytest.raises(DomainError):
        mapping(3)


def test_random_wasserstein_matches_brute_force_on_two_points():
    rng = np.random.default_rng(3)
    for _ in range(50):
        first = random_instances.atomic_measure(rng, 2)
        second = ScalarMeasure.dirac(float(rng.integers(-5, 6)))
        direct = sum(atom.m * (atom.x - second.atoms[0].x) ** 2 for atom in first.atoms)
        assert(wasserstein2_squared(first, second) == pytest.approx(direct, abs=1e-10))


@given(atomic_measures, atomic_measures, atomic_measures)
@settings(max_examples=200, deadline=None)
def test_metric_axioms(first, second, third):
    assert(wasserstein2(first, first) <= 1e-10)
    assert(abs(wasserstein2(first, second) - wasserstein2(second, first)) <= 1e-10)
    assert(wasserstein2(first, third) <= wasserstein2(first, second) + wasserstein2(second, third) + 1e-10)


@given(mixed_measures, mixed_measures, st.sampled_from([0.5, 2.0, 10.0]))
@settings(max_examples=200, deadline=None)
def test_scaling_law(first, second, factor):
    scaling = PiecewiseAffineMap.scaling(factor)
    scaled = wasserstein2(pushforward(first, scaling), pushforward(second, scaling))
    assert(scaled == pytest.approx(factor * wasserstein2(first, second), abs=1e-10, rel=1e-12))


@given(atomic_measures, atomic_measures, st.integers(-5, 5))
@settings(max_examples=200, deadline=None)
def test_translation_law(first, second, shift):
    translation = PiecewiseAffineMap.translation(shift)
    moved = wasserstein2(pushforward(first, translation), pushforward(second, translation))
    assert(moved == pytest.approx(wasserstein2(first, second), abs=1e-10))
