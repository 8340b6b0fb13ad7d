"""
Defect-rate counting and frozen-spin disagreement maps comparing sample sets with the static superspin model
"""
import io
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from dynamics_tools import BathParameters, Schedule, anneal_to_effective
from ed_tools import GROUND_TOLERANCE, TfimProblem, diagonalize, thermal_magnetization, validate_grid
from lattice_tools import CellMode, SquareLatticeInstance
from sampler_tools import SampleSet
from transition_tools import SpinType
from utils import ZERO_TOLERANCE, atomic_write_bytes, signs_with_tolerance

# Headline normalization of the defect rate: the Type I census count, and the figure convention
TYPE_I_CENSUS = 844
FIGURE_NORMALIZATION = 931

DISAGREEMENT_MODES = ("majority", "per_read")


class FrameMismatchError(ValueError):
    """
    Samples and reference signs are expressed in different frames
    """
    pass


class IndeterminateSignWarning(Warning):
    """
    A reference sign is zero within tolerance, so the spin is left out of defect counting
    """
    pass


class MissingClassDataWarning(Warning):
    """
    Some classes have no samples or no magnetization grid, so the disagreement grid is partial
    """
    pass


def equilibrium_signs(instance: SquareLatticeInstance, temperature: float, delta: float = 0.0,
                      ground_tolerance: float = GROUND_TOLERANCE,
                      tolerance: float = ZERO_TOLERANCE) -> np.ndarray:
    spectral = diagonalize(TfimProblem.from_instance(instance, delta))
    return signs_with_tolerance(thermal_magnetization(spectral, temperature, ground_tolerance), tolerance)


def final_equilibrium_signs(instance: SquareLatticeInstance, T_final: float,
                            ground_tolerance: float = GROUND_TOLERANCE,
                            tolerance: float = ZERO_TOLERANCE) -> np.ndarray:
    """
    Predicted end-of-anneal configuration: sign(m_i(T_final, Δ = 0)). Indeterminate spins are 0 and are
    reported with an IndeterminateSignWarning.

    :param instance: Effective Hamiltonian
    :param T_final: Final temperature in effective units (≥ 0)
    :param ground_tolerance: Relative degeneracy tolerance used at T_final = 0
    :param tolerance: Zero tolerance of the sign
    :return: int8 sign vector
    """
    if T_final < 0:
        raise ValueError(f"T_final must be non-negative, got {T_final}")
    signs = equilibrium_signs(instance, T_final, 0.0, ground_tolerance, tolerance)
    indeterminate = np.flatnonzero(signs == 0)
    if len(indeterminate):
        warnings.warn(f"Spins {indeterminate.tolist()} have no definite sign at T={T_final:g} and are excluded "
                      f"from defect counting", IndeterminateSignWarning)
    return signs


@dataclass
class DefectReport:
    """
    Spin-sign defects of one or more sample sets.

    defects / spin_reads is the raw rate over eligible (spin, read) pairs. per_type holds the same counts for
    every spin type regardless of the headline filter. normalized_rate divides the mean number of defects
    per read by the normalization constant.
    """
    label: Optional[object]
    defects: int
    spin_reads: int
    n_reads: int
    eligible_spins: int
    ties: int = 0
    per_read: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    per_type: dict[SpinType, tuple[int, int]] = field(default_factory=dict)
    normalization: Optional[float] = None

    @property
    def rate(self) -> float:
        return self.defects / self.spin_reads if self.spin_reads else 0.0

    @property
    def normalized_rate(self) -> float:
        normalization = self.eligible_spins if self.normalization is None else self.normalization
        if not self.n_reads or not normalization:
            return 0.0
        return self.defects / self.n_reads / normalization

    def type_rate(self, spin_type: SpinType) -> float:
        defects, spin_reads = self.per_type.get(spin_type, (0, 0))
        return defects / spin_reads if spin_reads else 0.0


def count_defects(samples: SampleSet, reference: Sequence[int], spin_types: Optional[Sequence[SpinType]] = None,
                  type_filter: Optional[Iterable[SpinType]] = (SpinType.TYPE_I,), label=None,
                  normalization: Optional[float] = None, reference_frame: str = "canonical") -> DefectReport:
    """
    Counts reads whose spin sign is opposite to the reference, on spins with a definite reference sign whose
    type passes the filter. Tied superspins are counted separately and are not defects.

    :param samples: Sample set
    :param reference: Reference sign vector (0 where indeterminate)
    :param spin_types: Type of each spin of the sampled class (all spins are eligible when omitted)
    :param type_filter: Types counted in the headline rate (None counts every type)
    :param label: Label of the report (anneal time, sweep count)
    :param normalization: Normalization constant of normalized_rate
    :param reference_frame: Frame the reference signs are expressed in
    :return: Defect report
    """
    if samples.frame != reference_frame:
        raise FrameMismatchError(f"Samples are in the '{samples.frame}' frame, reference in '{reference_frame}'")
    reference = np.asarray(reference, dtype=np.int8)
    if reference.shape != (samples.signs.shape[1],):
        raise FrameMismatchError(f"Reference has {len(reference)} spins, samples have {samples.signs.shape[1]}")

    definite = reference != 0
    opposite = samples.signs == -reference[None, :]
    tied = samples.signs == 0

    per_type = {}
    if spin_types is None:
        eligible = definite
    else:
        spin_types = np.array(spin_types, dtype=object)
        for spin_type in SpinType:
            mask = definite & (spin_types == spin_type)
            if mask.any():
                per_type[spin_type] = (int(opposite[:, mask].sum()), int(mask.sum()) * samples.n_reads)
        allowed = set(SpinType) if type_filter is None else set(type_filter)
        eligible = definite & np.array([spin_type in allowed for spin_type in spin_types], dtype=bool)

    per_read = opposite[:, eligible].sum(axis=1).astype(np.int64)
    return DefectReport(label=label, defects=int(per_read.sum()), spin_reads=int(eligible.sum()) * samples.n_reads,
                        n_reads=samples.n_reads, eligible_spins=int(eligible.sum()),
                        ties=int(tied[:, eligible].sum()), per_read=per_read, per_type=per_type,
                        normalization=normalization)


def merge_defect_reports(reports: Sequence[DefectReport], label=None,
                         normalization: Optional[float] = None) -> DefectReport:
    """
    Sums the reports of several classes sampled with the same read count
    """
    per_type = {}
    for report in reports:
        for spin_type, (defects, spin_reads) in report.per_type.items():
            previous = per_type.get(spin_type, (0, 0))
            per_type[spin_type] = (previous[0] + defects, previous[1] + spin_reads)
    return DefectReport(label=label if label is not None else (reports[0].label if reports else None),
                        defects=sum(report.defects for report in reports),
                        spin_reads=sum(report.spin_reads for report in reports),
                        n_reads=max((report.n_reads for report in reports), default=0),
                        eligible_spins=sum(report.eligible_spins for report in reports),
                        ties=sum(report.ties for report in reports),
                        per_read=np.concatenate([report.per_read for report in reports]) if reports else
                        np.zeros(0, dtype=np.int64),
                        per_type=per_type, normalization=normalization)


def defect_report_table(reports: Iterable[DefectReport]) -> pd.DataFrame:
    """
    One row per report and spin type, plus a headline row
    """
    rows = []
    for report in reports:
        rows.append({"label": report.label, "type": "headline", "defects": report.defects,
                     "spin_reads": report.spin_reads, "rate": report.rate, "normalized_rate": report.normalized_rate,
                     "ties": report.ties})
        for spin_type, (defects, spin_reads) in report.per_type.items():
            rows.append({"label": report.label, "type": spin_type.value, "defects": defects,
                         "spin_reads": spin_reads, "rate": defects / spin_reads if spin_reads else 0.0,
                         "normalized_rate": None, "ties": None})
    return pd.DataFrame(rows, columns=["label", "type", "defects", "spin_reads", "rate", "normalized_rate", "ties"])


def equilibrium_defect_curve(entries: Sequence[tuple[SquareLatticeInstance, Sequence[SpinType]]],
                             schedule: Schedule, alpha: float = 0.25, alpha_s: float = 1.0,
                             cell_mode: CellMode = CellMode.TRUNCATED4, T_phys: Optional[float] = None,
                             points: int = 51, ground_tolerance: float = GROUND_TOLERANCE) -> pd.DataFrame:
    """
    Number of spins whose equilibrium sign along the anneal differs from the final equilibrium configuration.

    Each anneal fraction s is placed on the (T, Δ) plane with anneal_to_effective. Fractions where B(s) = 0
    have no effective point and are skipped, so the curve starts at the first s with B > 0.

    :param entries: Instances with the type of each spin
    :param schedule: Annealing schedule
    :param alpha: Overall Ising scale
    :param alpha_s: Superspin scale (> 0)
    :param cell_mode: Cell mode of the embedding
    :param T_phys: Physical temperature in GHz (default bath temperature)
    :param points: Number of anneal fractions in [0, 1]
    :param ground_tolerance: Relative degeneracy tolerance used at T = 0
    :return: DataFrame with columns s, T, delta, one count column per type and total
    """
    T_phys = BathParameters().temperature if T_phys is None else T_phys
    s_values = [s for s in np.linspace(0.0, 1.0, points) if schedule.B_at(s) > 0]
    effective = [anneal_to_effective(schedule, s, alpha, alpha_s, cell_mode, T_phys) for s in s_values]
    T_final = anneal_to_effective(schedule, 1.0, alpha, alpha_s, cell_mode, T_phys)[0]

    counts = {spin_type: np.zeros(len(s_values), dtype=np.int64) for spin_type in SpinType}
    for instance, spin_types in entries:
        reference = final_equilibrium_signs(instance, T_final, ground_tolerance)
        spin_types = np.array(spin_types, dtype=object)
        for index, (T, delta) in enumerate(effective):
            current = equilibrium_signs(instance, T, delta, ground_tolerance)
            differs = (reference != 0) & (current != reference)
            for spin_type in SpinType:
                counts[spin_type][index] += int((differs & (spin_types == spin_type)).sum())

    curve = pd.DataFrame({"s": s_values, "T": [point[0] for point in effective],
                          "delta": [point[1] for point in effective]})
    for spin_type in SpinType:
        curve[f"type_{spin_type.value}"] = counts[spin_type]
    curve["total"] = sum(counts.values())
    return curve


@dataclass
class DisagreementGrid:
    """
    Disagreement counts between observed and predicted signs over a (T, Δ) grid; counts[a, b] belongs to
    (T_grid[a], delta_grid[b]). In per_read mode the counts are mean disagreements per read.
    """
    T_grid: np.ndarray
    delta_grid: np.ndarray
    counts: np.ndarray
    denominator: int
    mode: str = "majority"
    missing_classes: list[int] = field(default_factory=list)

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.denominator if self.denominator else np.zeros_like(self.counts, dtype=float)

    @property
    def min_count(self) -> float:
        return float(self.counts.min())

    @property
    def argmin(self) -> tuple[int, int]:
        a, b = np.unravel_index(int(np.argmin(self.counts)), self.counts.shape)
        return int(a), int(b)

    @property
    def argmin_point(self) -> tuple[float, float]:
        a, b = self.argmin
        return float(self.T_grid[a]), float(self.delta_grid[b])

    @property
    def partial(self) -> bool:
        return len(self.missing_classes) > 0

    def to_frame(self) -> pd.DataFrame:
        T_mesh, delta_mesh = np.meshgrid(self.T_grid, self.delta_grid, indexing="ij")
        return pd.DataFrame({"T": T_mesh.ravel(), "delta": delta_mesh.ravel(), "count": self.counts.ravel(),
                             "fraction": self.fractions.ravel()})


def disagreement_grid(samples: Mapping[int, SampleSet], grids: Mapping[int, np.ndarray],
                      spin_types: Mapping[int, Sequence[SpinType]], T_grid: Sequence[float],
                      delta_grid: Sequence[float], mode: str = "majority",
                      tolerance: float = ZERO_TOLERANCE) -> DisagreementGrid:
    """
    Compares observed signs with sign(m_i(T, Δ)) at every grid point, over the transitioning spins of every
    class in spin_types. A spin whose predicted sign is indeterminate at a grid point does not count as a
    disagreement there.

    In majority mode the observed sign of a spin is the sign of its read total (a tie disagrees with any
    definite prediction). In per_read mode every read is compared and the count is averaged over reads.

    :param samples: Sample set of each class (canonical frame)
    :param grids: Magnetization grid of each class, shape (n_sites, len(T_grid), len(delta_grid))
    :param spin_types: Type of each spin, for every class to be compared
    :param T_grid: Temperatures of the grids
    :param delta_grid: Transverse fields of the grids
    :param mode: "majority" or "per_read"
    :param tolerance: Zero tolerance of the predicted signs
    :return: Disagreement grid
    """
    if mode not in DISAGREEMENT_MODES:
        raise ValueError(f"Unknown disagreement mode '{mode}'")
    T_grid = validate_grid(T_grid, "T_grid")
    delta_grid = validate_grid(delta_grid, "delta_grid")

    counts = np.zeros((len(T_grid), len(delta_grid)))
    denominator = 0
    missing = []
    for class_id in sorted(spin_types):
        if class_id not in samples or class_id not in grids:
            missing.append(class_id)
            continue
        class_samples = samples[class_id]
        if class_samples.frame != "canonical":
            raise FrameMismatchError(f"Samples of class {class_id} are in the '{class_samples.frame}' frame")

        transitioning = np.flatnonzero([spin_type.transitions for spin_type in spin_types[class_id]])
        if len(transitioning) == 0:
            continue
        denominator += len(transitioning)
        predicted = signs_with_tolerance(grids[class_id][transitioning], tolerance)

        if mode == "majority":
            observed = class_samples.majority_signs()[transitioning]
            counts += ((predicted != 0) & (predicted != observed[:, None, None])).sum(axis=0)
        else:
            for sign in (-1, 0, 1):
                # Reads of each spin holding this sign, weighted by how often the prediction differs
                share = (class_samples.signs[:, transitioning] == sign).mean(axis=0)
                counts += (share[:, None, None] * ((predicted != 0) & (predicted != sign))).sum(axis=0)

    if missing:
        warnings.warn(f"No data for classes {missing}; the disagreement grid covers the remaining "
                      f"{denominator} transitioning spins", MissingClassDataWarning)
    return DisagreementGrid(T_grid=T_grid, delta_grid=delta_grid, counts=counts, denominator=denominator,
                            mode=mode, missing_classes=missing)


def best_agreement_region(grid: DisagreementGrid, slack_count: float = 0) -> np.ndarray:
    """
    Mask of grid points whose disagreement count is within slack_count of the minimum
    """
    if slack_count < 0:
        raise ValueError(f"Slack must be non-negative, got {slack_count}")
    return grid.counts <= grid.min_count + slack_count + 1e-9


def render_disagreement_svg(grid: DisagreementGrid, filepath: Optional[str] = None,
                            slack_count: Optional[float] = None,
                            freeze_point: Optional[tuple[float, float]] = None,
                            title: Optional[str] = None) -> str:
    """
    Heat map of the disagreement fraction over (Δ, T), with the argmin marked, the slack region outlined and
    an X at the freeze point.

    :param grid: Disagreement grid
    :param filepath: File to write (the SVG is only returned when omitted)
    :param slack_count: Slack of the outlined best-agreement region
    :param freeze_point: (T*, Δ*) to mark
    :param title: Plot title
    :return: SVG document
    """
    figure, axes = plt.subplots(figsize=(5, 4))
    mesh = axes.pcolormesh(grid.delta_grid, grid.T_grid, grid.fractions, shading="nearest", cmap="viridis")
    figure.colorbar(mesh, ax=axes, label="disagreement fraction")
    if slack_count is not None:
        region = best_agreement_region(grid, slack_count).astype(float)
        if 0 < region.sum() < region.size:
            axes.contour(grid.delta_grid, grid.T_grid, region, levels=[0.5], colors="white", linewidths=1)
    T_best, delta_best = grid.argmin_point
    axes.plot(delta_best, T_best, marker="o", color="white", markeredgecolor="black", linestyle="none")
    if freeze_point is not None:
        axes.plot(freeze_point[1], freeze_point[0], marker="x", color="red", markersize=10, linestyle="none")
    axes.set_xlabel("Δ")
    axes.set_ylabel("T")
    if title:
        axes.set_title(title)

    buffer = io.StringIO()
    figure.savefig(buffer, format="svg", bbox_inches="tight")
    plt.close(figure)
    svg = buffer.getvalue()
    if filepath is not None:
        atomic_write_bytes(filepath, svg.encode("utf-8"))
    return svg
