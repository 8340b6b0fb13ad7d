import numpy as np
import pytest

from ed_tools import MagnetizationSurface, default_grid
from lattice_tools import (SQUARE_3X3, SquareLatticeInstance, apply_symmetry, enumerate_classes, grid_geometry,
                           random_symmetry)
from transition_tools import (AmbiguousCellWarning, SpinType, SpinTypeRecord, TransitionSet, census_counts,
                              census_summary, census_table, classify_instance, classify_spin,
                              ground_manifold_balance, infinitesimal_delta_magnetization, off_origin_fraction,
                              sign_map, trace_transitions, transition_density)


def _plane(function, points=11, window=5.0):
    axis = np.linspace(0.0, window, points)
    T_mesh, delta_mesh = np.meshgrid(axis, axis, indexing="ij")
    return function(T_mesh, delta_mesh)[None], axis


def test_straight_transition_line():
    grid, axis = _plane(lambda T, delta: T - 2.25)
    transitions = trace_transitions(grid, axis, axis, refine=False)
    assert transitions.n_transitions(0) == 1
    line = transitions.polylines[0][0]
    np.testing.assert_allclose(line[:, 0], 2.25)
    np.testing.assert_allclose(line[:, 1], axis)
    assert np.all(transitions.crossing_counts % 2 == 0)


def test_closed_transition_loop():
    grid, axis = _plane(lambda T, delta: np.hypot(T - 2.5, delta - 2.5) - 1.6, points=21)
    transitions = trace_transitions(grid, axis, axis, refine=False)
    assert transitions.n_transitions(0) == 1
    loop = transitions.polylines[0][0]
    np.testing.assert_allclose(loop[0], loop[-1])
    np.testing.assert_allclose(np.hypot(loop[:, 0] - 2.5, loop[:, 1] - 2.5), 1.6, atol=0.05)


def test_no_transition_for_definite_sign():
    grid, axis = _plane(lambda T, delta: -1.0 - T - delta)
    transitions = trace_transitions(grid, axis, axis, refine=False)
    assert transitions.n_transitions(0) == 0
    assert len(transitions.vertices(0)) == 0
    assert not sign_map(grid, axis, axis).has_both_signs(0)


def test_unresolvable_saddle_warns():
    grid = np.array([[[1.0, -1.0], [-1.0, 1.0]]])
    with pytest.warns(AmbiguousCellWarning):
        transitions = trace_transitions(grid, [0.0, 1.0], [0.0, 1.0], refine=False)
    assert transitions.ambiguous_cells == [(0, 0, 0)]
    assert transitions.crossing_counts[0, 0, 0] == 4
    assert transitions.n_transitions(0) == 2


def test_transition_records_restore_polylines():
    grid, axis = _plane(lambda T, delta: T - 2.25)
    transitions = trace_transitions(grid, axis, axis, refine=False)
    records = transitions.to_json_records(class_id=3, spin_types=[SpinType.TYPE_I])
    assert records[0]["class_id"] == 3 and records[0]["type"] == "I"
    restored = TransitionSet.from_json_records(records, axis, axis)
    np.testing.assert_allclose(restored.vertices(0), transitions.vertices(0))


def test_transition_density_and_origin_fraction():
    grid, axis = _plane(lambda T, delta: T - 2.25)
    transitions = trace_transitions(grid, axis, axis, refine=False)
    entries = [(transitions, [SpinType.TYPE_I])]
    density = transition_density(entries, bins=10)
    assert density.counts[SpinType.TYPE_I].sum() == 11
    assert density.total().sum() == 11
    assert len(density.to_frame()) == 100
    assert off_origin_fraction(entries, SpinType.TYPE_I, radius=1.0) == 1.0
    assert off_origin_fraction(entries, SpinType.TYPE_II, radius=1.0) == 0.0


@pytest.mark.parametrize("count_up, count_down, infinitesimal_sign, has_transition, expected", [
    (2, 2, 0, False, SpinType.TYPE_II),
    (2, 2, 1, True, SpinType.TYPE_II),
    (3, 1, -1, False, SpinType.TYPE_III),
    (0, 1, 1, True, SpinType.TYPE_III),
    (3, 1, 1, True, SpinType.TYPE_I),
    (3, 1, 0, True, SpinType.TYPE_I),
    (3, 1, 1, False, SpinType.TYPE_0),
])
def test_classify_spin(count_up, count_down, infinitesimal_sign, has_transition, expected):
    record = classify_spin(5, 2, count_up, count_down, infinitesimal_sign, has_transition)
    assert record.spin_type == expected
    assert record.has_origin_transition == (expected in (SpinType.TYPE_II, SpinType.TYPE_III))
    assert SpinTypeRecord.from_json_dict(record.to_json_dict()) == record


def test_ferromagnet_has_no_transitions(ferromagnet):
    axis = default_grid(11)
    records, transitions = classify_instance(ferromagnet, class_id=0, T_grid=axis, delta_grid=axis)
    assert [record.spin_type for record in records] == [SpinType.TYPE_0] * 9
    assert all(ground_manifold_balance(ferromagnet, spin) == (0, 1) for spin in range(9))
    assert all(transitions.n_transitions(spin) == 0 for spin in range(9))


def test_balanced_pair_is_type_ii():
    pair = SquareLatticeInstance(couplers=(1,), field_magnitude=0.0, geometry=grid_geometry(1, 2))
    np.testing.assert_allclose(infinitesimal_delta_magnetization(pair), [0.0, 0.0], atol=1e-12)
    axis = default_grid(5)
    records, _ = classify_instance(pair, T_grid=axis, delta_grid=axis)
    assert [record.spin_type for record in records] == [SpinType.TYPE_II] * 2
    assert records[0].count_up == records[0].count_down == 1


def test_isolated_spin_follows_its_field():
    single = SquareLatticeInstance(couplers=(), geometry=grid_geometry(1, 1))
    np.testing.assert_allclose(infinitesimal_delta_magnetization(single), [-1.0])


def test_census_helpers():
    records = [classify_spin(0, spin, 1, 0, 1, spin % 2 == 0) for spin in range(4)]
    records.append(classify_spin(0, 4, 1, 1, 0, False))
    counts = census_counts(records)
    assert counts == {SpinType.TYPE_0: 2, SpinType.TYPE_I: 2, SpinType.TYPE_II: 1, SpinType.TYPE_III: 0}
    assert list(census_table(records).columns) == ["class_id", "spin", "type", "n_transitions", "origin_flag"]
    summary = census_summary(records)
    assert "Transitioning" in summary and "Type III" in summary


@pytest.mark.slow
def test_full_census():
    records = []
    for class_id, instance in enumerate(enumerate_classes()):
        records.extend(classify_instance(instance, class_id=class_id)[0])
    counts = census_counts(records)
    assert counts == {SpinType.TYPE_0: 3835, SpinType.TYPE_I: 844, SpinType.TYPE_II: 411, SpinType.TYPE_III: 40}
    assert sum(counts.values()) == 5130
    assert sum(count for spin_type, count in counts.items() if spin_type.transitions) == 1295


def _spin_types(instance, axis):
    records, _ = classify_instance(instance, T_grid=axis, delta_grid=axis)
    return [record.spin_type for record in records]


def test_spin_types_are_gauge_covariant(classes, rng):
    axis = default_grid(11)
    for class_id in rng.choice(len(classes), size=5, replace=False):
        element = random_symmetry(rng)
        inverse = SQUARE_3X3.inverse_permutations[element.spatial]
        types = _spin_types(classes[class_id], axis)
        assert _spin_types(apply_symmetry(element, classes[class_id]), axis) == [types[site] for site in inverse]


@pytest.mark.slow
def test_spin_type_covariance_suite(classes, rng):
    axis = default_grid(6)
    class_types = {}
    for _ in range(1000):
        class_id = int(rng.integers(len(classes)))
        if class_id not in class_types:
            class_types[class_id] = _spin_types(classes[class_id], axis)
        element = random_symmetry(rng)
        inverse = SQUARE_3X3.inverse_permutations[element.spatial]
        moved = _spin_types(apply_symmetry(element, classes[class_id]), axis)
        assert moved == [class_types[class_id][site] for site in inverse]


def test_refined_crossings_lie_on_the_zero_curve(classes):
    axis = default_grid(21)
    for instance in classes:
        records, _ = classify_instance(instance, T_grid=axis, delta_grid=axis)
        # The T = 0 magnetization jumps at Δ = 0; a definite Δ → 0⁺ sign keeps that jump off the zero curve
        type_i = [record.spin for record in records
                  if record.spin_type == SpinType.TYPE_I and record.infinitesimal_sign != 0]
        if type_i:
            break
    else:
        pytest.fail("No Type I spin found")

    _, transitions = classify_instance(instance, T_grid=axis, delta_grid=axis, refine=True)
    assert transitions.refined
    surface = MagnetizationSurface(instance)
    vertices = [(spin, T, delta) for spin in type_i for T, delta in transitions.vertices(spin)]
    assert vertices
    for spin, T, delta in vertices:
        assert abs(surface(spin, T, delta)) <= 1e-8


@pytest.mark.slow
def test_spin_types_are_stable_under_grid_refinement(classes):
    for instance in classes[::19]:
        assert _spin_types(instance, default_grid(101)) == _spin_types(instance, default_grid(201))
