"""
Spin-sign transitions of the thermal magnetization in the (T, Δ) plane, and the Type 0/I/II/III spin census
"""
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np
import pandas as pd
import scipy.optimize
import scipy.sparse

from ed_tools import (GROUND_TOLERANCE, MagnetizationSurface, TfimProblem, default_grid, diagonalize,
                      magnetization_grid, thermal_magnetization, validate_grid)
from lattice_tools import SquareLatticeInstance
from utils import ZERO_TOLERANCE, signs_with_tolerance

# Transverse field of the small-Δ diagonalization that cross-checks perturbation theory
CHECK_DELTA = 1e-4
CHECK_GROUND_TOLERANCE = 1e-12


class AmbiguousCellWarning(Warning):
    """
    A grid cell has sign changes on all four edges that its centre value cannot resolve
    """
    pass


class PerturbationMismatchWarning(Warning):
    """
    Degenerate perturbation theory and small-Δ diagonalization disagree on a spin's sign
    """
    pass


class SpinType(Enum):
    TYPE_0 = "0"
    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"

    @property
    def transitions(self) -> bool:
        return self != SpinType.TYPE_0


@dataclass(frozen=True)
class SignMap:
    """
    sign(m_i) over the grid; entries with |m_i| below the zero tolerance are 0 (indeterminate)
    """
    signs: np.ndarray
    T_grid: np.ndarray
    delta_grid: np.ndarray
    instance_hash: Optional[str] = None

    def has_both_signs(self, spin: int) -> bool:
        return bool((self.signs[spin] > 0).any() and (self.signs[spin] < 0).any())


def sign_map(grid: np.ndarray, T_grid: Sequence[float], delta_grid: Sequence[float],
             instance: Optional[SquareLatticeInstance] = None, tolerance: float = ZERO_TOLERANCE) -> SignMap:
    return SignMap(signs=signs_with_tolerance(grid, tolerance), T_grid=np.asarray(T_grid, dtype=float),
                   delta_grid=np.asarray(delta_grid, dtype=float),
                   instance_hash=None if instance is None else instance.content_hash())


@dataclass
class TransitionSet:
    """
    Zero curves of each spin's magnetization, as polylines of (T, Δ) vertices.

    crossing_counts[i, a, b] is the number of sign-changing edges of grid cell (a, b) for spin i
    (always even).
    """
    T_grid: np.ndarray
    delta_grid: np.ndarray
    polylines: dict[int, list[np.ndarray]]
    crossing_counts: np.ndarray
    ambiguous_cells: list[tuple[int, int, int]] = field(default_factory=list)
    refined: bool = False

    def n_transitions(self, spin: int) -> int:
        return len(self.polylines.get(spin, []))

    def vertices(self, spin: int) -> np.ndarray:
        lines = self.polylines.get(spin, [])
        return np.concatenate(lines) if lines else np.zeros((0, 2))

    def to_json_records(self, class_id: Optional[int] = None,
                        spin_types: Optional[Sequence["SpinType"]] = None) -> list[dict]:
        records = []
        for spin in sorted(self.polylines):
            record = {"class_id": class_id, "spin": spin,
                      "polylines": [line.tolist() for line in self.polylines[spin]]}
            if spin_types is not None:
                record["type"] = spin_types[spin].value
            records.append(record)
        return records

    @classmethod
    def from_json_records(cls, records: Iterable[dict], T_grid: Sequence[float], delta_grid: Sequence[float]):
        """
        Rebuilds the polylines written by to_json_records (crossing counts are not stored)
        """
        polylines = {int(record["spin"]): [np.asarray(line, dtype=float).reshape(-1, 2)
                                           for line in record["polylines"]]
                     for record in records}
        return cls(T_grid=np.asarray(T_grid, dtype=float), delta_grid=np.asarray(delta_grid, dtype=float),
                   polylines=polylines, crossing_counts=np.zeros((0, 0, 0), dtype=np.int64))


def _edge_vertex(edge: tuple, T_grid: np.ndarray, delta_grid: np.ndarray, values: np.ndarray, spin: int,
                 surface: Optional[MagnetizationSurface], tolerance: float) -> tuple[float, float]:
    """
    Locates the zero of m on a grid edge, by Brent's method on the continuous surface when one is available
    and by linear interpolation otherwise
    """
    direction, i, j = edge
    if direction == "T":
        start, end = (i, j), (i + 1, j)
        a, b = T_grid[i], T_grid[i + 1]
    else:
        start, end = (i, j), (i, j + 1)
        a, b = delta_grid[j], delta_grid[j + 1]
    value_a, value_b = values[start], values[end]

    if abs(value_a) < tolerance:
        root = a
    elif abs(value_b) < tolerance:
        root = b
    elif surface is None:
        root = a + (b - a) * value_a / (value_a - value_b)
    else:
        if direction == "T":
            function = lambda T: surface(spin, T, delta_grid[j])
        else:
            function = lambda delta: surface(spin, T_grid[i], delta)
        root = scipy.optimize.brentq(function, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)

    return (float(root), float(delta_grid[j])) if direction == "T" else (float(T_grid[i]), float(root))


def _cell_segments(positive: np.ndarray, i: int, j: int, centre_positive: Optional[bool]) -> list[tuple]:
    """
    Pairs the sign-changing edges of cell (i, j) into segments.

    Corners run (i, j), (i+1, j), (i+1, j+1), (i, j+1) and edge k joins corner k to corner k+1.
    """
    corners = [positive[i, j], positive[i + 1, j], positive[i + 1, j + 1], positive[i, j + 1]]
    edges = [("T", i, j), ("D", i + 1, j), ("T", i, j + 1), ("D", i, j)]
    crossing = [edges[k] for k in range(4) if corners[k] != corners[(k + 1) % 4]]
    if len(crossing) == 2:
        return [tuple(crossing)]
    if len(crossing) == 0:
        return []

    # Saddle: corners 0 and 2 share a sign, corners 1 and 3 share the other
    if centre_positive == corners[0]:
        # Centre joins corners 0 and 2, cutting off corners 1 and 3
        return [(edges[0], edges[1]), (edges[2], edges[3])]
    return [(edges[3], edges[0]), (edges[1], edges[2])]


def trace_transitions(grid: np.ndarray, T_grid: Sequence[float], delta_grid: Sequence[float],
                      instance: Optional[SquareLatticeInstance] = None, refine: bool = True,
                      tolerance: float = ZERO_TOLERANCE,
                      surface: Optional[MagnetizationSurface] = None) -> TransitionSet:
    """
    Traces the zero curves of every spin's magnetization with marching squares.

    Grid points with m > tolerance count as positive, all others as non-positive. Crossings are placed by
    Brent's method on the continuous m(T, Δ) when an instance (or surface) is given and refine is set,
    and by linear interpolation otherwise. Saddle cells are resolved by the sign at the cell centre.

    :param grid: Magnetizations of shape (n_spins, len(T_grid), len(delta_grid))
    :param T_grid: Temperatures
    :param delta_grid: Transverse fields
    :param instance: Instance the grid was computed for (needed for refinement and saddle resolution)
    :param refine: Refine crossings on the continuous surface
    :param tolerance: Zero tolerance
    :param surface: Existing surface to evaluate (takes precedence over instance)
    :return: Polylines per spin
    """
    T_grid = np.asarray(T_grid, dtype=float)
    delta_grid = np.asarray(delta_grid, dtype=float)
    if surface is None and instance is not None:
        surface = MagnetizationSurface(instance)
    n_spins, n_T, n_delta = grid.shape

    polylines = {}
    crossing_counts = np.zeros((n_spins, max(n_T - 1, 0), max(n_delta - 1, 0)), dtype=np.int8)
    ambiguous_cells = []
    for spin in range(n_spins):
        values = grid[spin]
        positive = values > tolerance

        crossing_counts[spin] = (
            (positive[:-1, :-1] != positive[1:, :-1]).astype(np.int8)
            + (positive[1:, :-1] != positive[1:, 1:])
            + (positive[:-1, 1:] != positive[1:, 1:])
            + (positive[:-1, :-1] != positive[:-1, 1:])
        )

        segment_graph = nx.Graph()
        for i, j in zip(*np.nonzero(crossing_counts[spin])):
            i, j = int(i), int(j)
            centre_positive = None
            if crossing_counts[spin, i, j] == 4:
                centre_T = 0.5 * (T_grid[i] + T_grid[i + 1])
                centre_delta = 0.5 * (delta_grid[j] + delta_grid[j + 1])
                if surface is not None:
                    centre = surface(spin, centre_T, centre_delta)
                else:
                    centre = values[i:i + 2, j:j + 2].mean()
                if abs(centre) < tolerance:
                    warnings.warn(f"Cell ({i}, {j}) of spin {spin} stays ambiguous at its centre",
                                  AmbiguousCellWarning)
                    ambiguous_cells.append((spin, i, j))
                centre_positive = bool(centre > tolerance)
            segment_graph.add_edges_from(_cell_segments(positive, i, j, centre_positive))

        if segment_graph.number_of_nodes() == 0:
            continue

        refining_surface = surface if refine else None
        vertex_of = {node: _edge_vertex(node, T_grid, delta_grid, values, spin, refining_surface, tolerance)
                     for node in segment_graph.nodes}

        spin_polylines = []
        for component in sorted(nx.connected_components(segment_graph), key=min):
            subgraph = segment_graph.subgraph(component)
            ends = sorted(node for node in component if subgraph.degree(node) == 1)
            start = ends[0] if ends else min(component)
            ordered = list(nx.dfs_preorder_nodes(subgraph, start))
            if not ends:
                ordered.append(start)
            spin_polylines.append(np.array([vertex_of[node] for node in ordered]))
        polylines[spin] = spin_polylines

    return TransitionSet(T_grid=T_grid, delta_grid=delta_grid, polylines=polylines,
                         crossing_counts=crossing_counts, ambiguous_cells=ambiguous_cells,
                         refined=refine and surface is not None)


def _classical_ground_manifold(problem: TfimProblem) -> np.ndarray:
    energies = problem.classical_energies
    threshold = GROUND_TOLERANCE * max(float(energies.max() - energies.min()), 1.0)
    return np.flatnonzero(energies <= energies.min() + threshold)


def ground_manifold_balance(instance: SquareLatticeInstance, spin: int) -> tuple[int, int]:
    """
    Counts the classical (Δ = 0) ground states with the spin up and with the spin down.

    :param instance: Effective Hamiltonian
    :param spin: Site index
    :return: (count_up, count_down)
    """
    problem = TfimProblem.from_instance(instance)
    orientations = problem.configurations[_classical_ground_manifold(problem), spin]
    return int((orientations > 0).sum()), int((orientations < 0).sum())


def _lowest_eigenspace(matrix: np.ndarray, tolerance: float) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    scale = max(float(np.abs(values).max()), 1.0)
    return vectors[:, values <= values[0] + tolerance * scale]


def infinitesimal_delta_magnetization(instance: SquareLatticeInstance) -> np.ndarray:
    """
    ⟨σz_i⟩ of the T = 0 state in the limit Δ → 0⁺, by degenerate perturbation theory in −Δ Σ σx within the
    classical ground manifold.

    The first-order block (minus the adjacency of ground states one flip apart) selects its lowest eigenspace;
    the second-order block, built from virtual flips into excited states, then selects within that space.
    Any remaining degeneracy is averaged uniformly.

    :param instance: Effective Hamiltonian
    :return: Magnetization of every spin
    """
    problem = TfimProblem.from_instance(instance)
    ground = _classical_ground_manifold(problem)
    if len(ground) == 1:
        return problem.configurations[ground[0]].astype(float)

    flips = ground[:, None] ^ ground[None, :]
    first_order = -((flips != 0) & ((flips & (flips - 1)) == 0)).astype(float)
    first_space = _lowest_eigenspace(first_order, GROUND_TOLERANCE)

    energies = problem.classical_energies
    ground_energy = energies[ground[0]]
    in_ground = np.zeros(problem.dimension, dtype=bool)
    in_ground[ground] = True
    neighbours = ground[:, None] ^ (1 << np.arange(problem.n))[None, :]
    rows = np.repeat(np.arange(len(ground)), problem.n)
    columns = neighbours.ravel()
    excited = ~in_ground[columns]
    virtual = scipy.sparse.csr_matrix((np.ones(int(excited.sum())), (rows[excited], columns[excited])),
                                      shape=(len(ground), problem.dimension))
    denominators = np.zeros(problem.dimension)
    denominators[~in_ground] = 1.0 / (ground_energy - energies[~in_ground])
    second_order = (virtual @ scipy.sparse.diags(denominators) @ virtual.T).toarray()

    projected = first_space.T @ second_order @ first_space
    coefficients = first_space @ _lowest_eigenspace(projected, GROUND_TOLERANCE)

    probabilities = (coefficients ** 2).mean(axis=1)
    return probabilities @ problem.configurations[ground].astype(float)


def infinitesimal_delta_sign(instance: SquareLatticeInstance, spin: int, check: bool = True) -> int:
    """
    Sign of ⟨σz⟩ for one spin at T = 0 and Δ → 0⁺.

    With check set, the result is compared with a diagonalization at Δ = CHECK_DELTA and a disagreement is
    reported with a PerturbationMismatchWarning. The perturbative sign is returned either way.

    :param instance: Effective Hamiltonian
    :param spin: Site index
    :param check: Cross-check against small-Δ diagonalization
    :return: −1, 0 or +1
    """
    perturbative_sign = int(signs_with_tolerance(infinitesimal_delta_magnetization(instance)[spin]))
    if check and perturbative_sign != 0:
        spectral = diagonalize(TfimProblem.from_instance(instance, CHECK_DELTA))
        numerical = thermal_magnetization(spectral, 0.0, ground_tolerance=CHECK_GROUND_TOLERANCE)[spin]
        numerical_sign = int(signs_with_tolerance(numerical))
        if numerical_sign != 0 and numerical_sign != perturbative_sign:
            warnings.warn(f"Spin {spin}: perturbation theory gives {perturbative_sign:+d} but Δ={CHECK_DELTA} "
                          f"diagonalization gives m={numerical:.3e}", PerturbationMismatchWarning)
    return perturbative_sign


@dataclass(frozen=True)
class SpinTypeRecord:
    class_id: Optional[int]
    spin: int
    spin_type: SpinType
    count_up: int
    count_down: int
    infinitesimal_sign: int
    has_origin_transition: bool
    n_transitions: int = 0

    def to_row(self) -> dict:
        return {"class_id": self.class_id, "spin": self.spin, "type": self.spin_type.value,
                "n_transitions": self.n_transitions, "origin_flag": self.has_origin_transition}

    def to_json_dict(self) -> dict:
        return {**asdict(self), "spin_type": self.spin_type.value}

    @classmethod
    def from_json_dict(cls, data: dict):
        return cls(**{**data, "spin_type": SpinType(data["spin_type"])})


def classify_spin(class_id: Optional[int], spin: int, count_up: int, count_down: int, infinitesimal_sign: int,
                  has_transition: bool, n_transitions: int = 0) -> SpinTypeRecord:
    """
    Assigns the spin type:

    - Type II when the classical ground manifold is balanced (count_up = count_down)
    - Type III when the classical orientation is definite and an infinitesimal Δ reverses it
    - Type I when the spin has any other transition in the window
    - Type 0 otherwise
    """
    ground_orientation = int(np.sign(count_up - count_down))
    if count_up == count_down:
        spin_type = SpinType.TYPE_II
    elif infinitesimal_sign != 0 and infinitesimal_sign == -ground_orientation:
        spin_type = SpinType.TYPE_III
    elif has_transition:
        spin_type = SpinType.TYPE_I
    else:
        spin_type = SpinType.TYPE_0
    return SpinTypeRecord(class_id=class_id, spin=spin, spin_type=spin_type, count_up=count_up,
                          count_down=count_down, infinitesimal_sign=infinitesimal_sign,
                          has_origin_transition=spin_type in (SpinType.TYPE_II, SpinType.TYPE_III),
                          n_transitions=n_transitions)


def classify_instance(instance: SquareLatticeInstance, class_id: Optional[int] = None,
                      T_grid: Optional[Sequence[float]] = None, delta_grid: Optional[Sequence[float]] = None,
                      grid: Optional[np.ndarray] = None, refine: bool = False,
                      tolerance: float = ZERO_TOLERANCE) -> tuple[list[SpinTypeRecord], TransitionSet]:
    """
    Classifies every spin of an instance.

    :param instance: Effective Hamiltonian
    :param class_id: Class id to attach to the records
    :param T_grid: Temperatures (default classification grid)
    :param delta_grid: Transverse fields (default classification grid)
    :param grid: Precomputed magnetization grid on these axes
    :param refine: Refine traced crossings on the continuous surface
    :param tolerance: Zero tolerance
    :return: One record per spin, and the traced transitions
    """
    T_grid = validate_grid(default_grid() if T_grid is None else T_grid, "T_grid")
    delta_grid = validate_grid(default_grid() if delta_grid is None else delta_grid, "delta_grid")
    if grid is None:
        grid = magnetization_grid(instance, T_grid, delta_grid)

    signs = sign_map(grid, T_grid, delta_grid, tolerance=tolerance)
    transitions = trace_transitions(grid, T_grid, delta_grid, instance=instance if refine else None,
                                    refine=refine, tolerance=tolerance)

    records = []
    for spin in range(instance.n_sites):
        count_up, count_down = ground_manifold_balance(instance, spin)
        if count_up == count_down:
            infinitesimal_sign = 0
        else:
            infinitesimal_sign = infinitesimal_delta_sign(instance, spin)
        records.append(classify_spin(class_id, spin, count_up, count_down, infinitesimal_sign,
                                     has_transition=signs.has_both_signs(spin),
                                     n_transitions=transitions.n_transitions(spin)))
    return records, transitions


def census_counts(records: Iterable[SpinTypeRecord]) -> dict[SpinType, int]:
    counts = Counter(record.spin_type for record in records)
    return {spin_type: counts.get(spin_type, 0) for spin_type in SpinType}


def census_table(records: Iterable[SpinTypeRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records],
                        columns=["class_id", "spin", "type", "n_transitions", "origin_flag"])


def census_summary(records: Iterable[SpinTypeRecord]) -> str:
    """
    Markdown table of the type counts, with the transitioning total
    """
    counts = census_counts(records)
    summary = pd.DataFrame({
        "Type": [f"Type {spin_type.value}" for spin_type in SpinType] + ["Transitioning", "Total"],
        "Spins": [counts[spin_type] for spin_type in SpinType]
                 + [sum(count for spin_type, count in counts.items() if spin_type.transitions),
                    sum(counts.values())],
    })
    return summary.to_markdown(index=False)


@dataclass(frozen=True)
class TransitionDensity:
    T_edges: np.ndarray
    delta_edges: np.ndarray
    counts: dict[SpinType, np.ndarray]

    def total(self) -> np.ndarray:
        return sum(self.counts.values())

    def to_frame(self) -> pd.DataFrame:
        T_centres = 0.5 * (self.T_edges[:-1] + self.T_edges[1:])
        delta_centres = 0.5 * (self.delta_edges[:-1] + self.delta_edges[1:])
        T_mesh, delta_mesh = np.meshgrid(T_centres, delta_centres, indexing="ij")
        frame = pd.DataFrame({"T": T_mesh.ravel(), "delta": delta_mesh.ravel()})
        for spin_type, counts in self.counts.items():
            frame[f"type_{spin_type.value}"] = counts.ravel()
        return frame


def transition_density(entries: Iterable[tuple[TransitionSet, Sequence[SpinType]]],
                       window: tuple[float, float] = (5.0, 5.0), bins: int = 50) -> TransitionDensity:
    """
    Histograms transition polyline vertices over the (T, Δ) window, separately per spin type.

    :param entries: Traced transitions of each instance, with the type of each spin
    :param window: Upper T and Δ limits
    :param bins: Bins along each axis
    :return: Density per spin type
    """
    T_edges = np.linspace(0.0, window[0], bins + 1)
    delta_edges = np.linspace(0.0, window[1], bins + 1)
    counts = {spin_type: np.zeros((bins, bins)) for spin_type in SpinType}
    for transitions, spin_types in entries:
        for spin, spin_type in enumerate(spin_types):
            vertices = transitions.vertices(spin)
            if len(vertices) == 0:
                continue
            histogram, _, _ = np.histogram2d(vertices[:, 0], vertices[:, 1], bins=[T_edges, delta_edges])
            counts[spin_type] += histogram
    return TransitionDensity(T_edges=T_edges, delta_edges=delta_edges, counts=counts)


def off_origin_fraction(entries: Iterable[tuple[TransitionSet, Sequence[SpinType]]], spin_type: SpinType,
                        radius: float) -> float:
    """
    Fraction of a spin type's transition vertices lying farther than radius from the origin
    """
    distances = []
    for transitions, spin_types in entries:
        for spin, current_type in enumerate(spin_types):
            if current_type == spin_type:
                distances.append(np.hypot(*transitions.vertices(spin).T))
    distances = np.concatenate(distances) if distances else np.zeros(0)
    return float((distances > radius).mean()) if len(distances) else 0.0
