"""
Exact diagonalization of small transverse-field Ising Hamiltonians and thermal single-spin magnetizations
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from lattice_tools import SquareLatticeInstance, all_configurations
from utils import DEFAULT_GRID_POINTS, DEFAULT_WINDOW

MAX_ED_SPINS = 14

# Relative tolerances (in units of the spectral width / norm)
GROUND_TOLERANCE = 1e-9
RESIDUAL_TOLERANCE = 1e-10


class DimensionOverflowError(ValueError):
    """
    Problem is too large for dense exact diagonalization
    """
    pass


class EigensolverError(Exception):
    """
    The eigensolver failed or returned eigenpairs with too large a residual
    """
    pass


@dataclass(frozen=True)
class TfimProblem:
    """
    H = −Δ Σ σx_i + Σ h_i σz_i − Σ J_ij σz_i σz_j on n spins.

    Basis state x has σz_i = +1 where bit i of x is 0.
    """
    n: int
    fields: tuple[float, ...]
    couplers: tuple[tuple[int, int, float], ...] = ()
    delta: float = 0.0

    @classmethod
    def from_instance(cls, instance: SquareLatticeInstance, delta: float = 0.0):
        couplers = tuple((u, v, float(sign)) for (u, v), sign in instance.coupler_map.items())
        return cls(n=instance.n_sites, fields=tuple(instance.field_values()), couplers=couplers, delta=float(delta))

    @property
    def dimension(self) -> int:
        return 2 ** self.n

    @cached_property
    def configurations(self) -> np.ndarray:
        return all_configurations(self.n)

    @cached_property
    def classical_energies(self) -> np.ndarray:
        spins = self.configurations.astype(float)
        energies = spins @ np.asarray(self.fields, dtype=float)
        for u, v, value in self.couplers:
            energies -= value * spins[:, u] * spins[:, v]
        return energies

    def hamiltonian(self) -> np.ndarray:
        if self.n > MAX_ED_SPINS:
            raise DimensionOverflowError(f"{self.n} spins exceeds the dense limit of {MAX_ED_SPINS}")
        hamiltonian = np.diag(self.classical_energies)
        states = np.arange(self.dimension)
        for spin in range(self.n):
            hamiltonian[states, states ^ (1 << spin)] -= self.delta
        return hamiltonian


@dataclass(frozen=True)
class SpectralData:
    """
    Full spectrum of a TfimProblem. sigma_z[i, k] is ⟨k|σz_i|k⟩ for eigenstate k.
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sigma_z: np.ndarray

    @property
    def spectral_width(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0])

    def ground_manifold(self, ground_tolerance: float = GROUND_TOLERANCE) -> np.ndarray:
        """
        Indices of the eigenstates degenerate with the ground state
        """
        threshold = ground_tolerance * max(self.spectral_width, 1.0)
        return np.flatnonzero(self.eigenvalues <= self.eigenvalues[0] + threshold)


def diagonalize(problem: TfimProblem) -> SpectralData:
    """
    Computes the full spectrum of a transverse-field Ising problem.

    :param problem: Problem with at most MAX_ED_SPINS spins
    :return: Eigenvalues (ascending), eigenvectors and per-eigenstate σz expectations
    """
    if problem.n > MAX_ED_SPINS:
        raise DimensionOverflowError(f"{problem.n} spins exceeds the dense limit of {MAX_ED_SPINS}")

    spins = problem.configurations.astype(float)
    if problem.delta == 0:
        # Diagonal in the computational basis
        order = np.argsort(problem.classical_energies, kind="stable")
        eigenvectors = np.eye(problem.dimension)[:, order]
        return SpectralData(eigenvalues=problem.classical_energies[order], eigenvectors=eigenvectors,
                            sigma_z=spins[order].T.copy())

    hamiltonian = problem.hamiltonian()
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(hamiltonian)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"Dense eigensolver failed: {e}") from e

    scale = max(float(np.abs(eigenvalues).max()), 1.0)
    residual = float(np.linalg.norm(hamiltonian @ eigenvectors - eigenvectors * eigenvalues, axis=0).max())
    if residual > RESIDUAL_TOLERANCE * scale:
        raise EigensolverError(f"Eigenpair residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE * scale:.3e}")

    sigma_z = (eigenvectors ** 2).T @ spins
    return SpectralData(eigenvalues=eigenvalues, eigenvectors=eigenvectors, sigma_z=sigma_z.T.copy())


def thermal_magnetizations(spectral: SpectralData, temperatures: Sequence[float],
                           ground_tolerance: float = GROUND_TOLERANCE) -> np.ndarray:
    """
    Thermal ⟨σz_i⟩ for a list of temperatures (k_B = 1). T = 0 gives the unweighted average over the
    ground manifold.

    :param spectral: Spectrum from diagonalize
    :param temperatures: Temperatures ≥ 0
    :param ground_tolerance: Relative degeneracy tolerance of the ground manifold
    :return: Array of shape (n, len(temperatures))
    """
    temperatures = np.atleast_1d(np.asarray(temperatures, dtype=float))
    if np.any(temperatures < 0):
        raise ValueError("Temperatures must be non-negative")

    n = spectral.sigma_z.shape[0]
    magnetizations = np.zeros((n, len(temperatures)))

    zero = temperatures == 0
    if np.any(zero):
        manifold = spectral.ground_manifold(ground_tolerance)
        magnetizations[:, zero] = spectral.sigma_z[:, manifold].mean(axis=1)[:, None]

    if np.any(~zero):
        # Shifted by the ground energy so every exponent is ≤ 0
        excitations = spectral.eigenvalues - spectral.eigenvalues[0]
        weights = np.exp(-excitations[None, :] / temperatures[~zero, None])
        magnetizations[:, ~zero] = (spectral.sigma_z @ weights.T) / weights.sum(axis=1)
    return magnetizations


def thermal_magnetization(spectral: SpectralData, temperature: float,
                          ground_tolerance: float = GROUND_TOLERANCE) -> np.ndarray:
    return thermal_magnetizations(spectral, [temperature], ground_tolerance)[:, 0]


def default_grid(points: int = DEFAULT_GRID_POINTS, window: float = DEFAULT_WINDOW) -> np.ndarray:
    """
    Uniform grid on [0, window)
    """
    return np.linspace(0.0, window, points, endpoint=False)


def validate_grid(values: Sequence[float], name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ValueError(f"{name} must be a non-empty 1-D grid")
    if np.any(np.diff(values) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if values[0] < 0:
        raise ValueError(f"{name} must be non-negative")
    return values


def magnetization_grid(instance: SquareLatticeInstance, T_grid: Optional[Sequence[float]] = None,
                       delta_grid: Optional[Sequence[float]] = None,
                       ground_tolerance: float = GROUND_TOLERANCE) -> np.ndarray:
    """
    Computes m_i(T, Δ) on a grid, diagonalizing once per Δ and reusing the spectrum for every T.

    :param instance: Effective superspin Hamiltonian
    :param T_grid: Temperatures (strictly increasing, defaults to the classification grid)
    :param delta_grid: Transverse fields (strictly increasing, defaults to the classification grid)
    :param ground_tolerance: Relative degeneracy tolerance used at T = 0
    :return: Array of shape (n_sites, len(T_grid), len(delta_grid))
    """
    T_grid = validate_grid(default_grid() if T_grid is None else T_grid, "T_grid")
    delta_grid = validate_grid(default_grid() if delta_grid is None else delta_grid, "delta_grid")

    grid = np.zeros((instance.n_sites, len(T_grid), len(delta_grid)))
    for column, delta in enumerate(delta_grid):
        spectral = diagonalize(TfimProblem.from_instance(instance, delta))
        grid[:, :, column] = thermal_magnetizations(spectral, T_grid, ground_tolerance)
    return grid


def magnetization_frame(grid: np.ndarray, T_grid: Sequence[float], delta_grid: Sequence[float]) -> pd.DataFrame:
    """
    Flattens a magnetization grid into (spin, T, delta, m) rows, row-major over [spin][T][Δ] like the binary cache
    """
    T_grid = validate_grid(T_grid, "T_grid")
    delta_grid = validate_grid(delta_grid, "delta_grid")
    grid = np.asarray(grid, dtype=float)
    if grid.shape[1:] != (len(T_grid), len(delta_grid)):
        raise ValueError(f"Grid of shape {grid.shape} does not match {len(T_grid)} temperatures and "
                         f"{len(delta_grid)} transverse fields")
    spins, T_index, delta_index = np.indices(grid.shape).reshape(3, -1)
    return pd.DataFrame({"spin": spins, "T": T_grid[T_index], "delta": delta_grid[delta_index], "m": grid.ravel()})


class MagnetizationSurface:
    """
    Evaluates m_i(T, Δ) at arbitrary points of the plane, keeping recent spectra so that points sharing a Δ
    need only one diagonalization.
    """

    def __init__(self, instance: SquareLatticeInstance, ground_tolerance: float = GROUND_TOLERANCE,
                 max_cached_spectra: int = 256):
        self.instance = instance
        self.ground_tolerance = ground_tolerance
        self.max_cached_spectra = max_cached_spectra
        self._spectra: dict[float, SpectralData] = {}
        self.diagonalizations = 0

    def spectrum(self, delta: float) -> SpectralData:
        delta = float(delta)
        if delta not in self._spectra:
            if len(self._spectra) >= self.max_cached_spectra:
                self._spectra.pop(next(iter(self._spectra)))
            self._spectra[delta] = diagonalize(TfimProblem.from_instance(self.instance, delta))
            self.diagonalizations += 1
        return self._spectra[delta]

    def magnetization(self, temperature: float, delta: float) -> np.ndarray:
        return thermal_magnetization(self.spectrum(delta), temperature, self.ground_tolerance)

    def __call__(self, spin: int, temperature: float, delta: float) -> float:
        return float(self.magnetization(temperature, delta)[spin])
