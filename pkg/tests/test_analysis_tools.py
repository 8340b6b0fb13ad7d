import numpy as np
import pytest

from analysis_tools import (FIGURE_NORMALIZATION, DisagreementGrid, FrameMismatchError, IndeterminateSignWarning,
                            MissingClassDataWarning, best_agreement_region, count_defects, defect_report_table,
                            disagreement_grid, equilibrium_defect_curve, equilibrium_signs,
                            final_equilibrium_signs, merge_defect_reports, render_disagreement_svg)
from dynamics_tools import Schedule
from ed_tools import magnetization_grid
from lattice_tools import SQUARE_3X3, SquareLatticeInstance, apply_symmetry, random_symmetry
from sampler_tools import SampleSet, kz_frozen_sample
from transition_tools import SpinType

AXIS = np.linspace(0.5, 2.5, 5)
TYPE_I_ONLY = [SpinType.TYPE_I] * 9


def test_final_signs_of_ferromagnet(ferromagnet):
    np.testing.assert_array_equal(final_equilibrium_signs(ferromagnet, 0.1), -np.ones(9))
    with pytest.raises(ValueError):
        final_equilibrium_signs(ferromagnet, -0.1)


def test_final_signs_without_fields_are_indeterminate():
    symmetric = SquareLatticeInstance(couplers=(1,) * 12, field_magnitude=0.0)
    with pytest.warns(IndeterminateSignWarning):
        signs = final_equilibrium_signs(symmetric, 0.5)
    np.testing.assert_array_equal(signs, np.zeros(9))


def test_final_signs_are_gauge_covariant(classes, rng):
    instance = classes[250]
    element = random_symmetry(rng)
    expected = equilibrium_signs(instance, 0.3)[SQUARE_3X3.inverse_permutations[element.spatial]]
    expected = expected * element.gauge_signs(9)
    np.testing.assert_array_equal(equilibrium_signs(apply_symmetry(element, instance), 0.3), expected)


def test_noiseless_samples_have_no_defects(ferromagnet):
    samples = kz_frozen_sample(ferromagnet, 0.5, 0.5, n_reads=100, seed=1)
    report = count_defects(samples, equilibrium_signs(ferromagnet, 0.5, 0.5), label=20.0)
    assert report.defects == 0
    assert report.eligible_spins == 9
    assert report.rate == 0.0
    assert report.label == 20.0


def test_flip_noise_sets_the_defect_rate(ferromagnet):
    samples = kz_frozen_sample(ferromagnet, 0.5, 0.5, n_reads=10000, flip_noise=0.1, seed=2)
    reference = equilibrium_signs(ferromagnet, 0.5, 0.5)
    report = count_defects(samples, reference)
    assert abs(report.rate - 0.1) < 0.005
    assert report.normalized_rate == pytest.approx(report.rate)
    assert len(report.per_read) == 10000

    normalized = count_defects(samples, reference, normalization=FIGURE_NORMALIZATION)
    assert normalized.normalized_rate == pytest.approx(report.defects / 10000 / FIGURE_NORMALIZATION)


def test_type_filter_and_breakdown():
    samples = SampleSet(signs=[[1, 1, -1], [-1, 1, 1], [1, -1, 1]])
    reference = [1, 1, 1]
    spin_types = [SpinType.TYPE_I, SpinType.TYPE_0, SpinType.TYPE_I]

    headline = count_defects(samples, reference, spin_types)
    assert headline.eligible_spins == 2
    assert headline.defects == 2
    assert headline.per_type == {SpinType.TYPE_I: (2, 6), SpinType.TYPE_0: (1, 3)}
    assert headline.type_rate(SpinType.TYPE_0) == pytest.approx(1 / 3)
    assert headline.type_rate(SpinType.TYPE_III) == 0.0

    everything = count_defects(samples, reference, spin_types, type_filter=None)
    assert everything.defects == 3 and everything.spin_reads == 9


def test_ties_and_indeterminate_references():
    samples = SampleSet(signs=[[0, 1, 1], [1, 1, -1]])
    report = count_defects(samples, [1, -1, 0])
    assert report.eligible_spins == 2
    assert report.defects == 2
    assert report.ties == 1
    np.testing.assert_array_equal(report.per_read, [1, 1])


def test_frame_mismatch():
    samples = SampleSet(signs=[[1, 1]], metadata={"frame": "randomized"})
    with pytest.raises(FrameMismatchError):
        count_defects(samples, [1, 1])
    with pytest.raises(FrameMismatchError):
        count_defects(SampleSet(signs=[[1, 1]]), [1, 1, 1])


def test_merged_reports_and_table():
    first = count_defects(SampleSet(signs=[[1, -1], [1, 1]]), [1, 1], [SpinType.TYPE_I] * 2, label=200.0)
    second = count_defects(SampleSet(signs=[[-1, -1], [1, 1]]), [1, 1], [SpinType.TYPE_I] * 2, label=200.0)
    merged = merge_defect_reports([first, second])
    assert merged.defects == 3
    assert merged.spin_reads == 8
    assert merged.n_reads == 2
    assert merged.label == 200.0
    assert merged.per_type[SpinType.TYPE_I] == (3, 8)

    table = defect_report_table([merged])
    assert list(table["type"]) == ["headline", "I"]
    assert list(table.columns) == ["label", "type", "defects", "spin_reads", "rate", "normalized_rate", "ties"]


def test_equilibrium_curve_ends_at_zero(ferromagnet):
    curve = equilibrium_defect_curve([(ferromagnet, TYPE_I_ONLY)], Schedule.surrogate(20.0), points=6)
    assert list(curve.columns) == ["s", "T", "delta", "type_0", "type_I", "type_II", "type_III", "total"]
    assert curve["s"].iloc[0] == pytest.approx(0.2)
    assert curve["delta"].iloc[-1] == pytest.approx(0.0)
    assert curve["total"].iloc[-1] == 0
    assert np.all(curve["total"] == curve[["type_0", "type_I", "type_II", "type_III"]].sum(axis=1))


def test_noiseless_disagreement_vanishes_at_the_freeze_point(classes):
    class_ids = [3, 150, 400]
    grids = {class_id: magnetization_grid(classes[class_id], AXIS, AXIS) for class_id in class_ids}
    samples = {class_id: kz_frozen_sample(classes[class_id], AXIS[2], AXIS[3], n_reads=51, seed=class_id)
               for class_id in class_ids}
    spin_types = {class_id: TYPE_I_ONLY for class_id in class_ids}

    grid = disagreement_grid(samples, grids, spin_types, AXIS, AXIS)
    assert grid.counts[2, 3] == 0
    assert grid.min_count == 0
    assert grid.denominator == 27
    assert not grid.partial
    assert best_agreement_region(grid)[2, 3]


def test_frame_randomization_does_not_move_the_disagreement(classes):
    instance = classes[77]
    grids = {0: magnetization_grid(instance, AXIS, AXIS)}
    spin_types = {0: TYPE_I_ONLY}
    counts = []
    for frame_randomization in (True, False):
        samples = kz_frozen_sample(instance, AXIS[1], AXIS[1], n_reads=31, seed=4,
                                   frame_randomization=frame_randomization)
        counts.append(disagreement_grid({0: samples}, grids, spin_types, AXIS, AXIS).counts)
    assert counts[0][1, 1] == counts[1][1, 1] == 0
    if np.all(equilibrium_signs(instance, AXIS[1], AXIS[1]) != 0):
        np.testing.assert_array_equal(counts[0], counts[1])


def test_per_read_mode_keeps_the_noise_floor(ferromagnet):
    grids = {0: magnetization_grid(ferromagnet, AXIS, AXIS)}
    samples = {0: kz_frozen_sample(ferromagnet, AXIS[2], AXIS[2], n_reads=10000, flip_noise=0.1, seed=3)}
    per_read = disagreement_grid(samples, grids, {0: TYPE_I_ONLY}, AXIS, AXIS, mode="per_read")
    assert abs(per_read.fractions[2, 2] - 0.1) < 0.01
    assert per_read.counts[2, 2] <= per_read.min_count + 1e-12

    majority = disagreement_grid(samples, grids, {0: TYPE_I_ONLY}, AXIS, AXIS, mode="majority")
    assert majority.min_count == 0


def test_missing_classes_are_reported(ferromagnet):
    grids = {0: magnetization_grid(ferromagnet, AXIS, AXIS)}
    samples = {0: kz_frozen_sample(ferromagnet, AXIS[0], AXIS[0], n_reads=11)}
    with pytest.warns(MissingClassDataWarning):
        grid = disagreement_grid(samples, grids, {0: TYPE_I_ONLY, 1: TYPE_I_ONLY}, AXIS, AXIS)
    assert grid.missing_classes == [1]
    assert grid.partial
    assert grid.denominator == 9


def test_non_transitioning_spins_are_ignored(ferromagnet):
    grids = {0: magnetization_grid(ferromagnet, AXIS, AXIS)}
    samples = {0: SampleSet(signs=np.ones((3, 9)))}
    grid = disagreement_grid(samples, grids, {0: [SpinType.TYPE_0] * 9}, AXIS, AXIS)
    assert grid.denominator == 0
    assert np.all(grid.counts == 0)
    assert np.all(grid.fractions == 0)


def test_unknown_mode_rejected(ferromagnet):
    with pytest.raises(ValueError):
        disagreement_grid({}, {}, {}, AXIS, AXIS, mode="median")


def _synthetic_grid():
    return DisagreementGrid(T_grid=np.array([0.5, 1.0]), delta_grid=np.array([0.5, 1.0]),
                            counts=np.array([[3.0, 1.0], [2.0, 5.0]]), denominator=10)


def test_best_agreement_region():
    grid = _synthetic_grid()
    assert grid.argmin == (0, 1)
    assert grid.argmin_point == (0.5, 1.0)
    np.testing.assert_array_equal(best_agreement_region(grid), [[False, True], [False, False]])
    np.testing.assert_array_equal(best_agreement_region(grid, 1), [[False, True], [True, False]])
    with pytest.raises(ValueError):
        best_agreement_region(grid, -1)
    frame = grid.to_frame()
    assert list(frame.columns) == ["T", "delta", "count", "fraction"]
    assert frame["fraction"].max() == pytest.approx(0.5)


def test_render_disagreement_svg(tmp_path):
    path = tmp_path / "disagreement.svg"
    svg = render_disagreement_svg(_synthetic_grid(), str(path), slack_count=1, freeze_point=(0.75, 0.75),
                                  title="t_f = 20 μs")
    assert "<svg" in svg
    assert path.read_text(encoding="utf-8") == svg
    assert "<svg" in render_disagreement_svg(_synthetic_grid())
