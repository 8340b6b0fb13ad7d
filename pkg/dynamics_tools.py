"""
Kibble-Zurek freeze-time estimation on the K(4) reduction of truncated-cell superspins: quench rate from
eigenvector overlaps, relaxation time from an Ohmic bath coupled through σz
"""
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from lattice_tools import (SQUARE_3X3, CellMode, SquareLatticeInstance, SymmetryElement, apply_symmetry)

# 1 K expressed as a frequency k_B·T/h in GHz
KELVIN_TO_GHZ = 20.836619
DEFAULT_BATH_TEMPERATURE_K = 0.017
DEFAULT_ANNEAL_TIMES = (20.0, 200.0, 990.0)

DEGENERACY_GAP = 1e-10
RESIDUAL_TOLERANCE = 1e-8
DENSE_LIMIT = 256
RATE_FLOOR = 1e-300

# Collective spin-2 of a 4-spin cell; basis index k has S_z = 2 − k
SPIN2_SZ = np.array([2, 1, 0, -1, -2], dtype=np.int8)


class ScheduleFormatError(ValueError):
    """
    Schedule table is malformed or violates the annealing schedule invariants
    """
    pass


class ScheduleRangeError(ValueError):
    """
    Effective parameters are undefined at this point of the schedule
    """
    pass


class EigensolverConvergenceError(Exception):
    """
    Krylov eigensolver did not converge to the required residual
    """

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class RelaxationError(ValueError):
    """
    Relaxation rate is undefined for the given pair of states
    """
    pass


class DegenerateStatesWarning(Warning):
    """
    Ground and first excited states are degenerate, so the overlap is taken in their common subspace
    """
    pass


class SurrogateScheduleWarning(Warning):
    """
    No schedule file was found, so the surrogate schedule stands in for the device schedule
    """
    pass


@dataclass(frozen=True, eq=False)
class Schedule:
    """
    Annealing functions A(s), B(s) in GHz tabulated over s = t/t_f ∈ [0, 1], with total anneal time t_f in μs
    """
    t_f: float
    s: np.ndarray
    A: np.ndarray
    B: np.ndarray
    source: str = "surrogate"

    def __post_init__(self):
        s, A, B = (np.asarray(values, dtype=float) for values in (self.s, self.A, self.B))
        if self.t_f <= 0:
            raise ScheduleFormatError(f"Anneal time must be positive, got {self.t_f}")
        if not (s.ndim == 1 and len(s) >= 2 and len(s) == len(A) == len(B)):
            raise ScheduleFormatError("Schedule columns must be 1-D and of equal length (at least 2 rows)")
        if np.any(np.diff(s) <= 0):
            raise ScheduleFormatError("Schedule s values must be strictly increasing")
        if abs(s[0]) > 1e-9 or abs(s[-1] - 1) > 1e-9:
            raise ScheduleFormatError(f"Schedule must cover [0, 1], got [{s[0]}, {s[-1]}]")
        if np.any(np.diff(A) > 1e-12):
            raise ScheduleFormatError("A(s) must be non-increasing")
        if np.any(np.diff(B) < -1e-12):
            raise ScheduleFormatError("B(s) must be non-decreasing")
        if np.any(A < 0) or np.any(B < 0):
            raise ScheduleFormatError("A(s) and B(s) must be non-negative")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def surrogate(cls, t_f: float, a0: float = 10.0, b0: float = 10.0, points: int = 1001):
        """
        A(s) = a0·(1 − s)², B(s) = b0·s
        """
        s = np.linspace(0.0, 1.0, points)
        return cls(t_f=t_f, s=s, A=a0 * (1 - s) ** 2, B=b0 * s, source="surrogate")

    @classmethod
    def from_csv(cls, filepath: str, t_f: float):
        """
        Reads a schedule table with columns s, A, B (A and B in GHz).

        :param filepath: Path to the CSV file
        :param t_f: Anneal time in μs
        :return: Schedule
        """
        table = pd.read_csv(filepath, comment="#")
        missing = {"s", "A", "B"} - set(table.columns)
        if missing:
            raise ScheduleFormatError(f"Schedule file {filepath} is missing columns {sorted(missing)}")
        return cls(t_f=t_f, s=table["s"].to_numpy(), A=table["A"].to_numpy(), B=table["B"].to_numpy(),
                   source=str(filepath))

    def with_anneal_time(self, t_f: float) -> "Schedule":
        return Schedule(t_f=t_f, s=self.s, A=self.A, B=self.B, source=self.source)

    def A_at(self, s: float) -> float:
        return float(np.interp(s, self.s, self.A))

    def B_at(self, s: float) -> float:
        return float(np.interp(s, self.s, self.B))


def load_schedule(filepath: Optional[str], t_f: float) -> Schedule:
    """
    Reads a schedule file, falling back to the surrogate schedule (with a SurrogateScheduleWarning) when no
    file is configured or the file does not exist
    """
    if filepath is None or not os.path.isfile(filepath):
        warnings.warn(f"Schedule file {filepath!r} not found, using the surrogate A = 10(1 - s)², B = 10s. "
                      f"Freeze points are qualitative only.", SurrogateScheduleWarning)
        return Schedule.surrogate(t_f)
    return Schedule.from_csv(filepath, t_f)


@dataclass(frozen=True)
class BathParameters:
    """
    Ohmic bath: coupling eta, cutoff omega_c (GHz) and temperature (GHz)
    """
    eta: float = 0.08
    omega_c: float = 80.0
    temperature: float = DEFAULT_BATH_TEMPERATURE_K * KELVIN_TO_GHZ


@dataclass(frozen=True)
class K4Params:
    """
    internal_coupling selects J_int: "total" keeps the K(2,2) binding energy (6·J_int = 4·alpha),
    "edge" keeps the per-edge strength (J_int = alpha)
    """
    alpha: float = 0.25
    alpha_s: float = 1.0
    internal_coupling: str = "total"
    include_fields: bool = True

    @property
    def internal_strength(self) -> float:
        if self.internal_coupling == "total":
            return 2 * self.alpha / 3
        if self.internal_coupling == "edge":
            return self.alpha
        raise ValueError(f"Unknown internal coupling convention '{self.internal_coupling}'")


def collective_transverse() -> np.ndarray:
    """
    2S_x of a spin-2 in the S_z basis (equal to Σ σx over the 4 spins of the symmetric sector)
    """
    transverse = np.zeros((5, 5))
    for k in range(1, 5):
        m = SPIN2_SZ[k]
        transverse[k - 1, k] = transverse[k, k - 1] = np.sqrt(float(6 - m * (m + 1)))
    return transverse


class K4Model:
    """
    Each truncated cell approximated as a fully connected 4-spin K(4) graph and kept in its permutation-symmetric
    (collective spin-2) sector, giving 5 states per cell.

    H(s) = −A(s) Σ_c 2S_x^c + B(s)·D, with the diagonal Ising part
    D = Σ_c [−J_int (2 (S_z^c)² − 2) + alpha·alpha_s·h_c S_z^c] − Σ_(c,d) (alpha·alpha_s/2) J_cd S_z^c S_z^d.
    """

    def __init__(self, instance: SquareLatticeInstance, params: K4Params = K4Params()):
        self.instance = instance
        self.params = params
        self.n_cells = instance.n_sites
        self.dimension = 5 ** self.n_cells

    @cached_property
    def cell_digits(self) -> np.ndarray:
        states = np.arange(self.dimension, dtype=np.int64)
        strides = 5 ** np.arange(self.n_cells - 1, -1, -1, dtype=np.int64)
        return np.stack([(states // stride) % 5 for stride in strides]).astype(np.int8)

    @cached_property
    def cell_sz(self) -> np.ndarray:
        """
        S_z of every cell in every basis state, shape (n_cells, dimension)
        """
        return SPIN2_SZ[self.cell_digits]

    @cached_property
    def ising_diagonal(self) -> np.ndarray:
        scale = self.params.alpha * self.params.alpha_s
        sz = self.cell_sz.astype(float)
        diagonal = -self.params.internal_strength * (2 * sz ** 2 - 2).sum(axis=0)
        if self.params.include_fields:
            diagonal += scale * (self.instance.field_values() @ sz)
        for (u, v), sign in self.instance.coupler_map.items():
            diagonal -= 0.5 * scale * sign * sz[u] * sz[v]
        return diagonal

    @cached_property
    def transverse(self) -> scipy.sparse.csr_matrix:
        transverse = collective_transverse()
        identity = scipy.sparse.identity(5, format="csr")
        total = scipy.sparse.csr_matrix((self.dimension, self.dimension))
        for cell in range(self.n_cells):
            term = scipy.sparse.identity(1, format="csr")
            for other in range(self.n_cells):
                term = scipy.sparse.kron(term, transverse if other == cell else identity, format="csr")
            total = total + term
        return total.tocsr()

    def couplings(self) -> list[np.ndarray]:
        """
        Diagonals of the bath coupling operators 2S_z, one per cell
        """
        return [2 * self.cell_sz[cell].astype(float) for cell in range(self.n_cells)]

    def hamiltonian(self, schedule: Schedule, s: float) -> scipy.sparse.csr_matrix:
        return (-schedule.A_at(s) * self.transverse
                + scipy.sparse.diags(schedule.B_at(s) * self.ising_diagonal, format="csr")).tocsr()

    def _apply_transverse(self, vector: np.ndarray) -> np.ndarray:
        transverse = collective_transverse()
        tensor = vector.reshape((5,) * self.n_cells)
        result = np.zeros_like(tensor)
        for cell in range(self.n_cells):
            result += np.moveaxis(np.tensordot(transverse, tensor, axes=([1], [cell])), 0, cell)
        return result.reshape(-1)

    def operator(self, schedule: Schedule, s: float) -> scipy.sparse.linalg.LinearOperator:
        """
        Matrix-free H(s), applying each cell's 2S_x along its own tensor axis
        """
        a, diagonal = schedule.A_at(s), schedule.B_at(s) * self.ising_diagonal
        return scipy.sparse.linalg.LinearOperator(
            (self.dimension, self.dimension), dtype=float,
            matvec=lambda vector: -a * self._apply_transverse(np.ravel(vector)) + diagonal * np.ravel(vector))

    @cached_property
    def stabilizer_maps(self) -> list[np.ndarray]:
        """
        Basis permutations of the spatial symmetries that leave the instance unchanged
        """
        geometry = self.instance.geometry
        strides = 5 ** np.arange(self.n_cells - 1, -1, -1, dtype=np.int64)
        maps = []
        for spatial, permutation in enumerate(geometry.spatial):
            if apply_symmetry(SymmetryElement(spatial=spatial), self.instance) != self.instance:
                continue
            moved = np.zeros(self.dimension, dtype=np.int64)
            for cell in range(self.n_cells):
                moved += self.cell_digits[cell].astype(np.int64) * strides[permutation[cell]]
            maps.append(np.argsort(moved).astype(np.int32))
        return maps

    def symmetric_projection(self, vector: np.ndarray) -> np.ndarray:
        return sum(vector[mapping] for mapping in self.stabilizer_maps) / len(self.stabilizer_maps)

    def sector_operator(self, schedule: Schedule, s: float) -> scipy.sparse.linalg.LinearOperator:
        """
        P(H − c)P + c for the projector P onto states invariant under the instance's spatial stabilizer.
        With c above the spectrum, the lowest eigenpairs are those of the symmetric sector.
        """
        hamiltonian = self.operator(schedule, s)
        shift = (4 * self.n_cells * schedule.A_at(s) + schedule.B_at(s) * np.abs(self.ising_diagonal).max() + 1.0)

        def matvec(vector):
            vector = np.ravel(vector)
            projected = self.symmetric_projection(vector)
            return self.symmetric_projection(hamiltonian @ projected - shift * projected) + shift * vector

        return scipy.sparse.linalg.LinearOperator((self.dimension, self.dimension), dtype=float, matvec=matvec)


def build_k4(instance: SquareLatticeInstance, schedule: Schedule, s: float,
             params: K4Params = K4Params()) -> scipy.sparse.csr_matrix:
    """
    Sparse K(4) Hamiltonian H(s) for an instance (see K4Model)
    """
    return K4Model(instance, params).hamiltonian(schedule, s)


def _residuals(hamiltonian, eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> np.ndarray:
    applied = np.column_stack([hamiltonian @ eigenvectors[:, k] for k in range(eigenvectors.shape[1])])
    return np.linalg.norm(applied - eigenvectors * eigenvalues, axis=0)


def lowest_states(hamiltonian, k: int = 2, seed: int = 0, v0: Optional[np.ndarray] = None, tol: float = 0.0,
                  maxiter: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Lowest k eigenpairs of a sparse Hermitian matrix or LinearOperator, by implicitly restarted Lanczos.
    Small matrices are diagonalized densely.

    :param hamiltonian: Sparse matrix or LinearOperator
    :param k: Number of eigenpairs
    :param seed: Seed of the random starting vector
    :param v0: Starting vector (overrides seed)
    :param tol: ARPACK relative tolerance (0 is machine precision)
    :param maxiter: ARPACK iteration budget
    :return: Ascending eigenvalues and eigenvectors as columns
    """
    dimension = hamiltonian.shape[0]
    if dimension <= DENSE_LIMIT:
        matrix = hamiltonian.toarray() if scipy.sparse.issparse(hamiltonian) \
            else hamiltonian @ np.eye(dimension)
        eigenvalues, eigenvectors = scipy.linalg.eigh(matrix)
        return eigenvalues[:k], eigenvectors[:, :k]

    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(dimension)
    try:
        eigenvalues, eigenvectors = scipy.sparse.linalg.eigsh(hamiltonian, k=k, which="SA", v0=v0, tol=tol,
                                                              maxiter=maxiter)
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        residual = None
        if len(e.eigenvalues):
            residual = float(_residuals(hamiltonian, e.eigenvalues, e.eigenvectors).max())
        raise EigensolverConvergenceError(f"Lanczos did not converge ({len(e.eigenvalues)} of {k} pairs, "
                                          f"residual {residual})", residual) from e

    order = np.argsort(eigenvalues)
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]
    residual = float(_residuals(hamiltonian, eigenvalues, eigenvectors).max())
    scale = max(float(np.abs(eigenvalues).max()), 1.0)
    if residual > RESIDUAL_TOLERANCE * scale:
        raise EigensolverConvergenceError(f"Eigenpair residual {residual:.3e} exceeds "
                                          f"{RESIDUAL_TOLERANCE * scale:.3e}", residual)
    return eigenvalues, eigenvectors


def fix_phase(vector: np.ndarray) -> np.ndarray:
    """
    Multiplies a real eigenvector by ±1 so its largest-magnitude component is positive
    """
    return vector * np.sign(vector[np.argmax(np.abs(vector))])


def quench_overlap(states: tuple[np.ndarray, np.ndarray], next_states: tuple[np.ndarray, np.ndarray]) -> float:
    """
    |⟨ψ0(s)|ψ1(s + ds)⟩| from the two lowest eigenpairs at s and s + ds.

    When either pair is degenerate the basis at s + ds is first rotated onto the one at s
    (orthogonal Procrustes), so the overlap is taken within their common two-dimensional subspace.
    """
    (energies, vectors), (next_energies, next_vectors) = states, next_states
    vectors = np.column_stack([fix_phase(vectors[:, k]) for k in range(2)])
    next_vectors = np.column_stack([fix_phase(next_vectors[:, k]) for k in range(2)])

    if energies[1] - energies[0] < DEGENERACY_GAP or next_energies[1] - next_energies[0] < DEGENERACY_GAP:
        warnings.warn("Degenerate ground and first excited states; aligning the two-state subspaces",
                      DegenerateStatesWarning)
        rotation, _ = scipy.linalg.orthogonal_procrustes(next_vectors, vectors)
        next_vectors = next_vectors @ rotation
    return float(abs(vectors[:, 0] @ next_vectors[:, 1]))


def quench_rate(hamiltonian_at: Callable[[float], object], schedule: Schedule, s: float, ds: float = 1e-3,
                seed: int = 0) -> float:
    """
    Quench rate |⟨ψ0(s)|ψ1(s + ds)⟩| / Δt with Δt = t_f·ds.

    :param hamiltonian_at: Function returning H at a given s
    :param schedule: Schedule supplying t_f (μs)
    :param s: Anneal fraction
    :param ds: Step in s (the default makes Δt = t_f/1000)
    :param seed: Lanczos starting vector seed
    :return: Rate in 1/μs
    """
    states = lowest_states(hamiltonian_at(s), k=2, seed=seed)
    next_states = lowest_states(hamiltonian_at(s + ds), k=2, v0=states[1].sum(axis=1))
    return quench_overlap(states, next_states) / (schedule.t_f * ds)


def ohmic_spectral_density(frequency, bath: BathParameters = BathParameters()):
    """
    S(ω) = 2π η ω e^(−|ω|/ω_c) / (1 − e^(−ω/T)) with ω = 2π·frequency, ω_c and T converted the same way.

    Positive frequencies are emission (downward) and negative ones absorption, so S(ω)/S(−ω) = e^(ω/T).

    :param frequency: Transition frequency in GHz (scalar or array)
    :param bath: Bath parameters
    :return: Spectral density in 1/ns
    """
    frequency = np.asarray(frequency, dtype=float)
    angular = 2 * np.pi * frequency
    cutoff = np.exp(-np.abs(frequency) / bath.omega_c)
    if bath.temperature == 0:
        thermal = np.where(frequency > 0, angular, 0.0)
    else:
        safe = np.where(frequency == 0, 1.0, frequency)
        thermal = np.where(frequency == 0, 2 * np.pi * bath.temperature,
                           2 * np.pi * safe / -np.expm1(-safe / bath.temperature))
    density = 2 * np.pi * bath.eta * thermal * cutoff
    return float(density) if density.ndim == 0 else density


def relaxation_rate(states: tuple[np.ndarray, np.ndarray], couplings: list[np.ndarray],
                    bath: BathParameters = BathParameters()) -> float:
    """
    Golden-rule decay rate Γ = Σ_c |⟨ψ0|O_c|ψ1⟩|² S(ω10) from the first excited state to the ground state.

    :param states: Two lowest eigenpairs
    :param couplings: Diagonals of the bath coupling operators
    :param bath: Bath parameters
    :return: Rate in 1/ns
    """
    energies, vectors = states
    gap = float(energies[1] - energies[0])
    if gap <= 0:
        raise RelaxationError(f"Transition frequency must be positive, got {gap}")
    matrix_elements = sum(float(vectors[:, 0] @ (coupling * vectors[:, 1])) ** 2 for coupling in couplings)
    return matrix_elements * ohmic_spectral_density(gap, bath)


def relaxation_time(states: tuple[np.ndarray, np.ndarray], couplings: list[np.ndarray],
                    bath: BathParameters = BathParameters()) -> float:
    """
    1/Γ in μs, or infinity when the rate vanishes (for instance by a selection rule)
    """
    rate = relaxation_rate(states, couplings, bath)
    if rate < RATE_FLOOR:
        return float("inf")
    return 1e-3 / rate


def anneal_to_effective(schedule: Schedule, s: float, alpha: float, alpha_s: float, cell_mode: CellMode,
                        T_phys: float) -> tuple[float, float]:
    """
    Places a point of the anneal on the dimensionless (T, Δ) plane of the superspin model, in units of the
    superspin coupling E_s = |J_s|·B(s).

    :param schedule: Schedule
    :param s: Anneal fraction
    :param alpha: Overall Ising scale
    :param alpha_s: Superspin scale
    :param cell_mode: Cell mode of the embedding
    :param T_phys: Physical temperature in GHz
    :return: (T, Δ)
    """
    energy_unit = cell_mode.cell_size / 2 * alpha * alpha_s * schedule.B_at(s)
    if energy_unit <= 0:
        raise ScheduleRangeError(f"Superspin energy scale vanishes at s={s}")
    return T_phys / energy_unit, schedule.A_at(s) / energy_unit


@dataclass
class FreezeEstimate:
    t_f: float
    freeze_fraction: Optional[float]
    regime: str
    T_star: Optional[float] = None
    delta_star: Optional[float] = None
    diagnostics: pd.DataFrame = field(default_factory=pd.DataFrame, repr=False)


def freeze_diagnostics(model: K4Model, schedule: Schedule, bath: BathParameters = BathParameters(),
                       points: int = 200, ds: float = 1e-3, seed: int = 0,
                       sector: str = "full") -> pd.DataFrame:
    """
    Sweeps s over linspace(0, 1 − ds, points), recording the quench overlap and the relaxation time.
    Neither depends on t_f, so one sweep serves every anneal time.

    :param model: K(4) model
    :param schedule: Schedule (its t_f is not used)
    :param bath: Bath parameters
    :param points: Number of s values
    :param ds: Step used for the quench overlap
    :param seed: Lanczos starting vector seed
    :param sector: "full" space or the "symmetric" sector of the instance's spatial stabilizer
    :return: DataFrame with columns s, gap, overlap, relaxation_time (μs)
    """
    if sector not in ("full", "symmetric"):
        raise ValueError(f"Unknown sector '{sector}'")
    hamiltonian_at = model.sector_operator if sector == "symmetric" else model.operator
    couplings = model.couplings()

    rows = []
    start = None
    for s in np.linspace(0.0, 1.0 - ds, points):
        states = lowest_states(hamiltonian_at(schedule, s), k=2, seed=seed, v0=start)
        next_states = lowest_states(hamiltonian_at(schedule, s + ds), k=2, v0=states[1].sum(axis=1))
        start = next_states[1].sum(axis=1)
        gap = float(states[0][1] - states[0][0])
        rows.append({"s": s, "gap": gap, "overlap": quench_overlap(states, next_states),
                     "relaxation_time": relaxation_time(states, couplings, bath) if gap > 0 else float("inf")})
    diagnostics = pd.DataFrame(rows)
    diagnostics.attrs["ds"] = ds
    return diagnostics


def inverse_quench_rate(diagnostics: pd.DataFrame, t_f: float, ds: Optional[float] = None) -> np.ndarray:
    ds = diagnostics.attrs.get("ds", 1e-3) if ds is None else ds
    with np.errstate(divide="ignore"):
        return t_f * ds / diagnostics["overlap"].to_numpy()


def freeze_from_diagnostics(diagnostics: pd.DataFrame, schedule: Schedule, bath: BathParameters = BathParameters(),
                            params: K4Params = K4Params(), cell_mode: CellMode = CellMode.TRUNCATED4,
                            ds: Optional[float] = None) -> FreezeEstimate:
    """
    Finds the earliest s where the relaxation time reaches the inverse quench rate, interpolating
    log(τ) − log(1/rate) linearly between sweep points.
    """
    s_values = diagnostics["s"].to_numpy()
    inverse_rates = inverse_quench_rate(diagnostics, schedule.t_f, ds)
    relaxation_times = diagnostics["relaxation_time"].to_numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(relaxation_times) - np.log(inverse_rates)
    # No relaxation and no quench at once counts as frozen
    log_ratio = np.where(np.isnan(log_ratio), np.inf, log_ratio)

    table = pd.DataFrame({"s": s_values, "inv_quench_rate": inverse_rates, "relaxation_time": relaxation_times})
    frozen = np.flatnonzero(log_ratio >= 0)
    if len(frozen) == 0:
        return FreezeEstimate(t_f=schedule.t_f, freeze_fraction=None, regime="always adiabatic", diagnostics=table)

    index = int(frozen[0])
    if index == 0:
        freeze_fraction, regime = float(s_values[0]), "always frozen"
    else:
        before, after = log_ratio[index - 1], log_ratio[index]
        weight = 1.0 if np.isinf(after) else -before / (after - before)
        freeze_fraction = float(s_values[index - 1] + weight * (s_values[index] - s_values[index - 1]))
        regime = "crossing"

    T_star = delta_star = None
    if schedule.B_at(freeze_fraction) > 0 and params.alpha_s > 0:
        T_star, delta_star = anneal_to_effective(schedule, freeze_fraction, params.alpha, params.alpha_s,
                                                 cell_mode, bath.temperature)
    return FreezeEstimate(t_f=schedule.t_f, freeze_fraction=freeze_fraction, regime=regime, T_star=T_star,
                          delta_star=delta_star, diagnostics=table)


def freeze_time(schedule: Schedule, bath: BathParameters = BathParameters(),
                instance: Optional[SquareLatticeInstance] = None, params: K4Params = K4Params(),
                points: int = 200, ds: float = 1e-3, seed: int = 0, sector: str = "full") -> FreezeEstimate:
    """
    Freeze point of an anneal: the earliest s at which the inverse quench rate becomes at least the
    relaxation time. The instance defaults to the all-ferromagnetic 3×3 lattice.
    """
    instance = SquareLatticeInstance.ferromagnetic(SQUARE_3X3) if instance is None else instance
    diagnostics = freeze_diagnostics(K4Model(instance, params), schedule, bath, points, ds, seed, sector)
    return freeze_from_diagnostics(diagnostics, schedule, bath, params, ds=ds)
