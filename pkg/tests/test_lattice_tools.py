import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from lattice_tools import (IDENTITY, SQUARE_3X3, CellMode, EmbeddingScaleError, InvalidInstanceError,
                           MissingSpinError, SquareLatticeInstance, SymmetryElement, all_configurations,
                           apply_symmetry, canonical_key, canonicalize, class_index, classical_energy,
                           compose_symmetry, embed_superspin, enumerate_classes, grid_geometry, invert_symmetry,
                           load_instance, min_flip_barrier, orbit_size, random_symmetry, read_class_list,
                           superspin_energy, verify_local_minima, write_class_list)


def test_all_configurations_basis_order():
    configurations = all_configurations(3)
    assert configurations.shape == (8, 3)
    np.testing.assert_array_equal(configurations[0], [1, 1, 1])
    np.testing.assert_array_equal(configurations[1], [-1, 1, 1])
    np.testing.assert_array_equal(configurations[6], [1, -1, -1])


def test_square_geometry():
    assert SQUARE_3X3.n_sites == 9
    assert SQUARE_3X3.n_edges == 12
    assert len(SQUARE_3X3.spatial) == 8
    assert SQUARE_3X3.spatial[0] == tuple(range(9))
    assert SQUARE_3X3.is_horizontal((0, 1))
    assert not SQUARE_3X3.is_horizontal((0, 3))


def test_rectangular_and_degenerate_geometries():
    assert len(grid_geometry(2, 3).spatial) == 4
    assert len(grid_geometry(1, 2).spatial) == 2
    assert len(grid_geometry(1, 1).spatial) == 1
    assert grid_geometry(1, 1).n_edges == 0
    with pytest.raises(InvalidInstanceError):
        grid_geometry(0, 3)


def test_enumerate_classes_count(classes):
    assert len(classes) == 570
    keys = [instance.key() for instance in classes]
    assert keys == sorted(keys)
    assert all(instance.fields == (1,) * 9 for instance in classes)


def test_orbits_partition_every_instance(classes):
    assert sum(orbit_size(instance) for instance in classes) == 2 ** 21


@pytest.mark.slow
def test_field_sign_patterns_add_no_classes(classes):
    assert enumerate_classes(include_field_signs=True) == classes


def test_two_site_orbits():
    geometry = grid_geometry(1, 2)
    orbits = {}
    for h1, h2, J in itertools.product((-1, 1), repeat=3):
        instance = SquareLatticeInstance(couplers=(J,), fields=(h1, h2), geometry=geometry)
        orbits.setdefault(canonical_key(instance), set()).add(h1 * h2 * J)
    assert len(orbits) == 2
    assert sorted(len(invariants) for invariants in orbits.values()) == [1, 1]
    assert {invariant for invariants in orbits.values() for invariant in invariants} == {-1, 1}

    representatives = enumerate_classes(geometry, include_field_signs=True)
    assert len(representatives) == 2
    assert sum(orbit_size(instance) for instance in representatives) == 8


def test_canonicalize_returns_mapping_element(rng, random_instance):
    for _ in range(1000):
        instance = random_instance()
        canonical, element = canonicalize(instance)
        assert apply_symmetry(element, instance) == canonical
        assert canonicalize(canonical)[0] == canonical
        assert canonicalize(apply_symmetry(random_symmetry(rng), instance))[0] == canonical
        assert canonical_key(instance) == canonical.key()


def test_symmetry_group_laws(rng, random_instance):
    for _ in range(200):
        instance = random_instance()
        first, second = random_symmetry(rng), random_symmetry(rng)
        composed = compose_symmetry(first, second)
        assert apply_symmetry(composed, instance) == apply_symmetry(second, apply_symmetry(first, instance))
        assert apply_symmetry(invert_symmetry(first), apply_symmetry(first, instance)) == instance
        assert canonical_key(apply_symmetry(first, instance)) == canonical_key(instance)


def test_class_index_of_transformed_instances(classes, rng):
    for class_id in rng.choice(len(classes), size=20, replace=False):
        transformed = apply_symmetry(random_symmetry(rng), classes[class_id])
        assert class_index(transformed, classes) == class_id


def test_gauge_flip_negates_field_and_incident_couplers(ferromagnet):
    flipped = apply_symmetry(SymmetryElement(gauge=frozenset({4})), ferromagnet)
    assert flipped.fields[4] == -1
    assert sum(flipped.fields) == 7
    for (u, v), sign in flipped.coupler_map.items():
        assert sign == (-1 if 4 in (u, v) else 1)
    assert apply_symmetry(IDENTITY, ferromagnet) == ferromagnet


def test_superspin_energy_is_gauge_covariant(rng, random_instance):
    configurations = all_configurations(9)
    for _ in range(20):
        instance = random_instance()
        element = random_symmetry(rng)
        gauge = element.gauge_signs(9)
        inverse = SQUARE_3X3.inverse_permutations[element.spatial]
        moved = configurations[:, inverse] * gauge
        np.testing.assert_allclose(superspin_energy(apply_symmetry(element, instance), moved),
                                   superspin_energy(instance, configurations))


def test_superspin_energy_of_ferromagnet(ferromagnet):
    assert superspin_energy(ferromagnet, -np.ones(9)) == pytest.approx(-9 - 12)
    assert superspin_energy(ferromagnet, np.ones(9)) == pytest.approx(9 - 12)


def test_instance_validation():
    with pytest.raises(InvalidInstanceError):
        SquareLatticeInstance(couplers=(1,) * 11)
    with pytest.raises(InvalidInstanceError):
        SquareLatticeInstance(couplers=(1,) * 11 + (0,))
    with pytest.raises(InvalidInstanceError):
        SquareLatticeInstance.from_mappings({(0, 1): 1})


def test_load_instance(tmp_path, classes):
    path = tmp_path / "instance.json"
    path.write_text(json.dumps(classes[42].to_json_dict()))
    assert load_instance(str(path)) == classes[42]

    path.write_text(json.dumps({"fields": [1] * 9}))
    with pytest.raises(InvalidInstanceError):
        load_instance(str(path))


def test_class_list_records(classes):
    records = write_class_list(classes[:5])
    assert [record["class_id"] for record in records] == list(range(5))
    assert read_class_list(reversed(records)) == classes[:5]
    assert classes[3].content_hash() != classes[4].content_hash()


@pytest.mark.parametrize("cell_mode, n_spins, n_couplers", [
    (CellMode.FULL8, 72, 9 * 16 + 12 * 4),
    (CellMode.TRUNCATED4, 36, 9 * 4 + 12 * 2),
])
def test_embedding_sizes(ferromagnet, cell_mode, n_spins, n_couplers):
    chimera = embed_superspin(ferromagnet, cell_mode, alpha=0.25, alpha_s=1.0)
    assert chimera.n_spins == n_spins
    assert len(chimera.couplers) == n_couplers
    assert chimera.graph().number_of_edges() == n_couplers


@pytest.mark.parametrize("cell_mode", list(CellMode))
def test_aligned_energy_is_scaled_superspin_energy(classes, cell_mode):
    alpha, alpha_s = 0.25, 0.5
    intra_couplers = (cell_mode.cell_size // 2) ** 2
    superspins = all_configurations(9)
    for instance in classes[::97]:
        chimera = embed_superspin(instance, cell_mode, alpha, alpha_s)
        energies = classical_energy(chimera, chimera.aligned_configuration(superspins))
        expected = chimera.superspin_scale * superspin_energy(instance, superspins) - 9 * intra_couplers * alpha
        np.testing.assert_allclose(energies, expected, atol=1e-12)


def test_inter_cell_couplers_use_matching_side(ferromagnet):
    chimera = embed_superspin(ferromagnet, CellMode.FULL8, alpha=1.0, alpha_s=0.5)
    for (u, v), value in chimera.couplers.items():
        (cell_u, local_u), (cell_v, local_v) = chimera.spin_labels[u], chimera.spin_labels[v]
        if cell_u == cell_v:
            assert value == 1.0
            continue
        assert local_u == local_v
        assert value == pytest.approx(0.5)
        horizontal = SQUARE_3X3.is_horizontal((min(cell_u, cell_v), max(cell_u, cell_v)))
        assert (local_u >= 4) == horizontal


def test_isolated_cells(ferromagnet):
    chimera = embed_superspin(ferromagnet, CellMode.FULL8, alpha=1.0, alpha_s=0.0)
    assert classical_energy(chimera, np.ones(72)) == pytest.approx(-9 * 16)
    assert np.all(chimera.field_vector == 0)
    assert verify_local_minima(chimera)[0]


def test_classical_energy_requires_every_spin(ferromagnet):
    chimera = embed_superspin(ferromagnet, CellMode.TRUNCATED4, alpha=1.0, alpha_s=1.0)
    with pytest.raises(MissingSpinError):
        classical_energy(chimera, {spin: 1 for spin in range(35)})
    assert classical_energy(chimera, {spin: 1 for spin in range(36)}) == \
        pytest.approx(classical_energy(chimera, np.ones(36)))


@pytest.mark.parametrize("alpha, alpha_s, truncated", [
    (0.0, 1.0, (0, 1, 4, 5)),
    (1.0, -0.5, (0, 1, 4, 5)),
    (1.0, 1.0, (0, 1, 2, 4)),
])
def test_embedding_rejects_bad_scales(ferromagnet, alpha, alpha_s, truncated):
    with pytest.raises(EmbeddingScaleError):
        embed_superspin(ferromagnet, CellMode.TRUNCATED4, alpha, alpha_s, truncated_spins=truncated)


def test_full_cells_keep_aligned_states_minimal(classes):
    for instance in classes[::19]:
        chimera = embed_superspin(instance, CellMode.FULL8, alpha=1.0, alpha_s=1.0)
        holds, violations = verify_local_minima(chimera)
        assert holds and violations == []


def test_truncated_cells_keep_aligned_states_minimal_at_weak_superspin_coupling(classes):
    for instance in classes[::19]:
        chimera = embed_superspin(instance, CellMode.TRUNCATED4, alpha=1.0, alpha_s=0.5)
        assert verify_local_minima(chimera)[0]


@pytest.mark.parametrize("alpha_s", [1.0, 3.0])
def test_truncated_cells_lose_aligned_minima_at_strong_superspin_coupling(ferromagnet, alpha_s):
    chimera = embed_superspin(ferromagnet, CellMode.TRUNCATED4, alpha=1.0, alpha_s=alpha_s)
    holds, violations = verify_local_minima(chimera)
    assert not holds
    assert all(violation.delta_energy < 0 for violation in violations)


def test_flip_barriers():
    assert min_flip_barrier(CellMode.FULL8) == 16
    assert min_flip_barrier(CellMode.TRUNCATED4) == 4
    assert min_flip_barrier(CellMode.FULL8, Fraction(1, 4)) == Fraction(4)
    assert min_flip_barrier(CellMode.TRUNCATED4, Fraction(1, 3)) == Fraction(4, 3)
