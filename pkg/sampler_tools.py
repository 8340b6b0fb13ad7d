"""
Synthetic annealer sample sets: a frozen-at-(T*, Δ*) sampler, and classical Metropolis and spin-vector annealers
on the embedded Chimera Hamiltonian
"""
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import networkx as nx
import numpy as np
import pandas as pd

from dynamics_tools import BathParameters, Schedule
from ed_tools import GROUND_TOLERANCE, TfimProblem, diagonalize, thermal_magnetization
from lattice_tools import (IDENTITY, SQUARE_3X3, CellMode, ChimeraIsing, LatticeGeometry, SquareLatticeInstance,
                           SymmetryElement, apply_symmetry, embed_superspin, random_symmetry)
from utils import TOOL_VERSION, atomic_write_text, signs_with_tolerance

DEFAULT_READS = 1000
DEFAULT_FRAMES = 8


class SamplerConfigError(ValueError):
    """
    Sampler parameters are out of range
    """
    pass


@dataclass
class SampleSet:
    """
    Superspin signs of each read (−1, +1, or 0 for a tied cell), already mapped back to the canonical frame.
    elements[r] is the symmetry element read r was generated under.
    """
    signs: np.ndarray
    class_id: Optional[int] = None
    metadata: dict = field(default_factory=dict)
    elements: list[SymmetryElement] = field(default_factory=list)

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=np.int8)
        self.metadata.setdefault("frame", "canonical")
        if not self.elements:
            self.elements = [IDENTITY] * len(self.signs)

    @property
    def n_reads(self) -> int:
        return len(self.signs)

    @property
    def frame(self) -> str:
        return self.metadata["frame"]

    @property
    def n_ties(self) -> int:
        return int((self.signs == 0).sum())

    def mean_signs(self) -> np.ndarray:
        return self.signs.mean(axis=0)

    def majority_signs(self) -> np.ndarray:
        """
        Per-spin sign of the read total; 0 where the reads are evenly split
        """
        return np.sign(self.signs.astype(np.int64).sum(axis=0)).astype(np.int8)

    def to_text(self) -> str:
        header = {"class_id": self.class_id, "tool_version": TOOL_VERSION, **self.metadata}
        body = pd.DataFrame(self.signs, columns=[f"s{site}" for site in range(self.signs.shape[1])])
        body.insert(0, "read_id", np.arange(self.n_reads))
        body["spatial"] = [element.spatial for element in self.elements]
        body["gauge"] = [sum(1 << site for site in element.gauge) for element in self.elements]
        return json.dumps(header, sort_keys=True) + "\n" + body.to_csv(index=False)

    def to_file(self, filepath: str):
        atomic_write_text(filepath, self.to_text())

    @classmethod
    def from_text(cls, text: str):
        header_line, body_text = text.split("\n", 1)
        metadata = json.loads(header_line)
        class_id = metadata.pop("class_id", None)
        metadata.pop("tool_version", None)
        body = pd.read_csv(io.StringIO(body_text)).sort_values("read_id")
        sign_columns = [column for column in body.columns if column.startswith("s") and column[1:].isdigit()]
        n_sites = len(sign_columns)
        elements = [SymmetryElement(spatial=int(spatial),
                                    gauge=frozenset(site for site in range(n_sites) if (int(gauge) >> site) & 1))
                    for spatial, gauge in zip(body["spatial"], body["gauge"])]
        return cls(signs=body[sign_columns].to_numpy(), class_id=class_id, metadata=metadata, elements=elements)

    @classmethod
    def from_file(cls, filepath: str):
        with open(filepath, "r", encoding="utf-8") as sample_file:
            return cls.from_text(sample_file.read())


def _element_arrays(elements: Sequence[SymmetryElement],
                    geometry: LatticeGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    spatial = np.array([element.spatial for element in elements], dtype=np.intp)
    gauge = np.stack([element.gauge_signs(geometry.n_sites) for element in elements]) if len(elements) \
        else np.zeros((0, geometry.n_sites), dtype=np.int8)
    return geometry.permutations[spatial], geometry.inverse_permutations[spatial], gauge


def randomize_frames(reads: np.ndarray, elements: Sequence[SymmetryElement],
                     geometry: LatticeGeometry = SQUARE_3X3) -> np.ndarray:
    """
    Carries each read into the frame of its element: site i moves to p[i], then gauge sites are flipped
    """
    _, inverse, gauge = _element_arrays(elements, geometry)
    return (np.take_along_axis(np.asarray(reads), inverse, axis=1) * gauge).astype(np.int8)


def restore_frames(reads: np.ndarray, elements: Sequence[SymmetryElement],
                   geometry: LatticeGeometry = SQUARE_3X3) -> np.ndarray:
    permutation, _, gauge = _element_arrays(elements, geometry)
    return np.take_along_axis(np.asarray(reads) * gauge, permutation, axis=1).astype(np.int8)


def randomize_frame(read, element: SymmetryElement, geometry: LatticeGeometry = SQUARE_3X3) -> np.ndarray:
    return randomize_frames(np.atleast_2d(read), [element], geometry)[0]


def restore_frame(read, element: SymmetryElement, geometry: LatticeGeometry = SQUARE_3X3) -> np.ndarray:
    return restore_frames(np.atleast_2d(read), [element], geometry)[0]


def _check_reads(n_reads: int):
    if n_reads <= 0:
        raise SamplerConfigError(f"Number of reads must be positive, got {n_reads}")


def kz_frozen_sample(instance: SquareLatticeInstance, T_star: float, delta_star: float,
                     n_reads: int = DEFAULT_READS, flip_noise: float = 0.0, seed: int = 0,
                     frame_randomization: bool = True, class_id: Optional[int] = None,
                     ground_tolerance: float = GROUND_TOLERANCE) -> SampleSet:
    """
    Reads of an anneal that froze instantly at (T*, Δ*): every read reports sign(m_i(T*, Δ*)), with
    indeterminate signs decided by a fair coin and each sign flipped independently with probability flip_noise.

    Each read is generated in a randomly transformed frame and mapped back to the canonical frame.

    :param instance: Effective Hamiltonian (canonical frame)
    :param T_star: Freeze temperature
    :param delta_star: Freeze transverse field
    :param n_reads: Number of reads
    :param flip_noise: Independent flip probability in [0, 0.5]
    :param seed: Random seed
    :param frame_randomization: Draw a random symmetry element per read
    :param class_id: Class id to record
    :param ground_tolerance: Relative degeneracy tolerance used at T* = 0
    :return: Sample set
    """
    _check_reads(n_reads)
    if not 0 <= flip_noise <= 0.5:
        raise SamplerConfigError(f"flip_noise must lie in [0, 0.5], got {flip_noise}")
    if T_star < 0 or delta_star < 0:
        raise SamplerConfigError(f"Freeze point must be non-negative, got T={T_star}, Δ={delta_star}")

    geometry = instance.geometry
    rng = np.random.default_rng(seed)
    spectral = diagonalize(TfimProblem.from_instance(instance, delta_star))
    predicted = signs_with_tolerance(thermal_magnetization(spectral, T_star, ground_tolerance))

    elements = [random_symmetry(rng, geometry) if frame_randomization else IDENTITY for _ in range(n_reads)]
    reads = randomize_frames(np.tile(predicted, (n_reads, 1)), elements, geometry)
    coins = rng.choice(np.array([-1, 1], dtype=np.int8), size=reads.shape)
    reads = np.where(reads == 0, coins, reads)
    flips = rng.random(reads.shape) < flip_noise
    reads = np.where(flips, -reads, reads)

    metadata = {"generator": "kz_frozen", "seed": seed, "T_star": T_star, "delta_star": delta_star,
                "flip_noise": flip_noise, "n_reads": n_reads}
    return SampleSet(signs=restore_frames(reads, elements, geometry), class_id=class_id, metadata=metadata,
                     elements=elements)


def color_classes(chimera: ChimeraIsing) -> list[np.ndarray]:
    """
    Groups spins into classes with no couplers inside a class, so each class can be updated at once
    """
    coloring = nx.coloring.greedy_color(chimera.graph(), strategy="largest_first")
    classes = {}
    for spin in range(chimera.n_spins):
        classes.setdefault(coloring.get(spin, 0), []).append(spin)
    return [np.array(members, dtype=np.intp) for _, members in sorted(classes.items())]


def cell_majority(chimera: ChimeraIsing, spins: np.ndarray) -> np.ndarray:
    """
    Superspin readout: sign of each cell's total, 0 for a tied cell
    """
    membership = np.zeros((chimera.n_spins, chimera.n_cells))
    membership[np.arange(chimera.n_spins), chimera.cell_of_spin] = 1
    return np.sign(np.asarray(spins, dtype=float) @ membership).astype(np.int8)


def _accept(delta_energy: np.ndarray, temperature: float, rng: np.random.Generator) -> np.ndarray:
    if temperature <= 0:
        return delta_energy < 0
    return rng.random(delta_energy.shape) < np.exp(np.minimum(0.0, -delta_energy / temperature))


def metropolis_sweeps(coupling_matrix: np.ndarray, field_vector: np.ndarray, temperatures: Sequence[float],
                      spins: np.ndarray, rng: np.random.Generator,
                      classes: Optional[list[np.ndarray]] = None) -> np.ndarray:
    """
    Single-spin-flip Metropolis sweeps of E = h·s − ½ sᵀJs, one sweep per temperature, all reads at once.
    At T = 0 only strictly downhill flips are accepted.

    :param coupling_matrix: Symmetric couplings with zero diagonal
    :param field_vector: Fields
    :param temperatures: Temperature of each sweep
    :param spins: Initial spins, shape (n_reads, n_spins) (updated in place)
    :param rng: Random generator
    :param classes: Spin classes without internal couplers (default: one spin per class)
    :return: Final spins
    """
    if classes is None:
        classes = [np.array([spin]) for spin in range(spins.shape[1])]
    for temperature in temperatures:
        for members in classes:
            current = spins[:, members]
            delta_energy = 2 * current * (spins @ coupling_matrix[:, members] - field_vector[members])
            spins[:, members] = np.where(_accept(delta_energy, temperature, rng), -current, current)
    return spins


def rotor_sweeps(coupling_matrix: np.ndarray, field_vector: np.ndarray, a_values: Sequence[float],
                 b_values: Sequence[float], temperature: float, angles: np.ndarray, rng: np.random.Generator,
                 classes: Optional[list[np.ndarray]] = None) -> np.ndarray:
    """
    Metropolis sweeps of classical rotors θ ∈ [0, π] with E = −A Σ sin θ_i + B·E_Ising(cos θ), one sweep per
    (A, B) pair. Proposals are drawn uniformly from [0, π].

    :param angles: Initial angles, shape (n_reads, n_spins) (updated in place)
    :return: Final angles
    """
    if classes is None:
        classes = [np.array([spin]) for spin in range(angles.shape[1])]
    for a, b in zip(a_values, b_values):
        for members in classes:
            current = angles[:, members]
            proposal = rng.uniform(0.0, np.pi, size=current.shape)
            local = np.cos(angles) @ coupling_matrix[:, members] - field_vector[members]
            delta_energy = (-a * (np.sin(proposal) - np.sin(current))
                            - b * local * (np.cos(proposal) - np.cos(current)))
            angles[:, members] = np.where(_accept(delta_energy, temperature, rng), proposal, current)
    return angles


def temperature_ladder(temp_schedule, sweeps: int) -> np.ndarray:
    """
    Expands (T_hot, T_cold) into a geometric ladder of one temperature per sweep; explicit ladders pass through
    """
    if sweeps <= 0:
        raise SamplerConfigError(f"Number of sweeps must be positive, got {sweeps}")
    ladder = np.asarray(temp_schedule, dtype=float)
    if ladder.shape == (2,) and sweeps != 2:
        hot, cold = ladder
        if hot <= 0 or cold <= 0:
            return np.linspace(hot, cold, sweeps)
        return np.geomspace(hot, cold, sweeps)
    if len(ladder) != sweeps:
        raise SamplerConfigError(f"Temperature ladder has {len(ladder)} entries for {sweeps} sweeps")
    if np.any(ladder < 0):
        raise SamplerConfigError("Temperatures must be non-negative")
    return ladder


def _initial_spins(chimera: ChimeraIsing, n_reads: int, rng: np.random.Generator, initial) -> np.ndarray:
    if initial is None:
        return rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_reads, chimera.n_spins))
    initial = np.asarray(initial, dtype=np.int8)
    return np.array(np.broadcast_to(initial, (n_reads, chimera.n_spins)))


def _chimera_metadata(chimera: ChimeraIsing) -> dict:
    return {"alpha": chimera.alpha, "alpha_s": chimera.alpha_s, "cell_mode": chimera.cell_mode.name}


def metropolis_anneal(chimera: ChimeraIsing, temp_schedule=(5.0, 0.05), sweeps: int = 1000,
                      n_reads: int = DEFAULT_READS, seed=0, initial=None,
                      class_id: Optional[int] = None) -> SampleSet:
    """
    Classical simulated annealing of the spin-level Hamiltonian, read out by cell majority.

    :param chimera: Embedded Hamiltonian
    :param temp_schedule: (T_hot, T_cold) for a geometric ladder, or one temperature per sweep
    :param sweeps: Number of sweeps
    :param n_reads: Number of reads
    :param seed: Random seed (int or SeedSequence)
    :param initial: Initial spin configuration(s); random when omitted
    :param class_id: Class id to record
    :return: Sample set in the frame of the given Hamiltonian
    """
    _check_reads(n_reads)
    temperatures = temperature_ladder(temp_schedule, sweeps)
    rng = np.random.default_rng(seed)
    spins = _initial_spins(chimera, n_reads, rng, initial)
    spins = metropolis_sweeps(chimera.coupling_matrix, chimera.field_vector, temperatures, spins, rng,
                              color_classes(chimera))
    metadata = {"generator": "metropolis", "seed": _seed_value(seed), "sweeps": sweeps, "n_reads": n_reads,
                "T_hot": float(temperatures[0]), "T_cold": float(temperatures[-1]), **_chimera_metadata(chimera)}
    return SampleSet(signs=cell_majority(chimera, spins), class_id=class_id, metadata=metadata)


def svmc_anneal(chimera: ChimeraIsing, schedule: Schedule, sweeps: int = 1000, n_reads: int = DEFAULT_READS,
                seed=0, temperature: Optional[float] = None, class_id: Optional[int] = None) -> SampleSet:
    """
    Spin-vector Monte Carlo: classical rotors swept through the annealing schedule from s = 0 to s = 1,
    starting from θ = π/2, read out by the sign of cos θ and cell majority.

    :param chimera: Embedded Hamiltonian
    :param schedule: Annealing functions A(s), B(s) in GHz
    :param sweeps: Number of sweeps (one per s step)
    :param n_reads: Number of reads
    :param seed: Random seed (int or SeedSequence)
    :param temperature: Temperature in GHz (default bath temperature)
    :param class_id: Class id to record
    :return: Sample set in the frame of the given Hamiltonian
    """
    _check_reads(n_reads)
    if sweeps <= 0:
        raise SamplerConfigError(f"Number of sweeps must be positive, got {sweeps}")
    temperature = BathParameters().temperature if temperature is None else temperature
    rng = np.random.default_rng(seed)
    s_values = np.linspace(0.0, 1.0, sweeps)
    a_values = [schedule.A_at(s) for s in s_values]
    b_values = [schedule.B_at(s) for s in s_values]

    angles = np.full((n_reads, chimera.n_spins), np.pi / 2)
    angles = rotor_sweeps(chimera.coupling_matrix, chimera.field_vector, a_values, b_values, temperature, angles,
                          rng, color_classes(chimera))
    spins = np.where(np.cos(angles) >= 0, 1, -1).astype(np.int8)
    metadata = {"generator": "svmc", "seed": _seed_value(seed), "sweeps": sweeps, "n_reads": n_reads,
                "t_f": schedule.t_f, "temperature": temperature, **_chimera_metadata(chimera)}
    return SampleSet(signs=cell_majority(chimera, spins), class_id=class_id, metadata=metadata)


def _seed_value(seed):
    return seed if isinstance(seed, int) else str(seed)


def sample_instance(instance: SquareLatticeInstance, generator: Callable[..., SampleSet],
                    n_reads: int = DEFAULT_READS, seed: int = 0, frames: int = DEFAULT_FRAMES,
                    cell_mode: CellMode = CellMode.TRUNCATED4, alpha: float = 0.25, alpha_s: float = 1.0,
                    class_id: Optional[int] = None, **generator_kwargs) -> SampleSet:
    """
    Runs a spin-level generator over randomly transformed copies of an instance and maps every read back to
    the canonical frame. Reads are split evenly across the frames.

    :param instance: Effective Hamiltonian (canonical frame)
    :param generator: metropolis_anneal or svmc_anneal
    :param n_reads: Total number of reads
    :param seed: Random seed
    :param frames: Number of random symmetry elements
    :param cell_mode: Cell mode of the embedding
    :param alpha: Overall Ising scale
    :param alpha_s: Superspin scale
    :param class_id: Class id to record
    :param generator_kwargs: Passed on to the generator
    :return: Combined sample set in the canonical frame
    """
    _check_reads(n_reads)
    if frames <= 0:
        raise SamplerConfigError(f"Number of frames must be positive, got {frames}")
    geometry = instance.geometry
    rng = np.random.default_rng(seed)
    frame_seeds = np.random.SeedSequence(seed).spawn(frames)

    signs, elements, metadata = [], [], {}
    for frame_seed, frame_reads in zip(frame_seeds, np.array_split(np.arange(n_reads), frames)):
        element = random_symmetry(rng, geometry)
        if len(frame_reads) == 0:
            continue
        chimera = embed_superspin(apply_symmetry(element, instance), cell_mode, alpha, alpha_s)
        frame_samples = generator(chimera, n_reads=len(frame_reads), seed=frame_seed, **generator_kwargs)
        signs.append(restore_frames(frame_samples.signs, [element] * len(frame_reads), geometry))
        elements += [element] * len(frame_reads)
        metadata = frame_samples.metadata

    metadata = {**metadata, "seed": seed, "n_reads": n_reads, "frames": frames}
    return SampleSet(signs=np.concatenate(signs), class_id=class_id, metadata=metadata, elements=elements)
