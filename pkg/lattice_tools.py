"""
Square-lattice Ising instances for the superspin model: symmetry canonicalization, class enumeration,
and embedding onto full or truncated Chimera unit cells
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Optional, Sequence

import networkx as nx
import numpy as np

from utils import content_hash


class InvalidInstanceError(ValueError):
    """
    Instance does not match its lattice geometry
    """
    pass


class EmbeddingScaleError(ValueError):
    """
    Embedding scales are out of range
    """
    pass


class MissingSpinError(KeyError):
    """
    A spin configuration does not cover every spin of the Hamiltonian
    """
    pass


def all_configurations(n: int) -> np.ndarray:
    """
    Every ±1 configuration of n spins, in computational-basis order: row x holds s_i = +1 where bit i of x is 0.

    :param n: Number of spins
    :return: int8 array of shape (2**n, n)
    """
    bits = (np.arange(2 ** n, dtype=np.int64)[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def _grid_maps(rows: int, cols: int) -> list:
    # (row, col) -> (row, col) maps for the symmetries of the rectangle
    maps = [
        lambda r, c: (r, c),
        lambda r, c: (rows - 1 - r, c),
        lambda r, c: (r, cols - 1 - c),
        lambda r, c: (rows - 1 - r, cols - 1 - c),
    ]
    if rows == cols:
        n = rows
        maps += [
            lambda r, c: (c, n - 1 - r),
            lambda r, c: (n - 1 - c, r),
            lambda r, c: (c, r),
            lambda r, c: (n - 1 - c, n - 1 - r),
        ]
    return maps


@dataclass(frozen=True)
class LatticeGeometry:
    """
    Rectangular grid of superspin sites with its spatial symmetry group.

    Sites are numbered row-major, edges are sorted (u, v) pairs with u < v, and each spatial symmetry is
    stored as a site permutation p (site i moves to site p[i]). The identity is always element 0.
    """
    rows: int
    cols: int
    edges: tuple[tuple[int, int], ...]
    spatial: tuple[tuple[int, ...], ...]

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def group_order(self) -> int:
        return len(self.spatial) * 2 ** self.n_sites

    def site(self, row: int, col: int) -> int:
        return row * self.cols + col

    def coordinates(self, site: int) -> tuple[int, int]:
        return divmod(site, self.cols)

    def is_horizontal(self, edge: tuple[int, int]) -> bool:
        return self.coordinates(edge[0])[0] == self.coordinates(edge[1])[0]

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {edge: index for index, edge in enumerate(self.edges)}

    @cached_property
    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        endpoints = np.array(self.edges, dtype=np.intp).reshape(-1, 2)
        return endpoints[:, 0], endpoints[:, 1]

    @cached_property
    def permutations(self) -> np.ndarray:
        return np.array(self.spatial, dtype=np.intp).reshape(len(self.spatial), self.n_sites)

    @cached_property
    def inverse_permutations(self) -> np.ndarray:
        return np.argsort(self.permutations, axis=1)

    @cached_property
    def edge_maps(self) -> np.ndarray:
        """
        edge_maps[k, e] is the index of the edge that edge e is carried onto by spatial element k
        """
        edge_maps = np.zeros((len(self.spatial), self.n_edges), dtype=np.intp)
        for k, permutation in enumerate(self.spatial):
            for e, (u, v) in enumerate(self.edges):
                moved = (min(permutation[u], permutation[v]), max(permutation[u], permutation[v]))
                edge_maps[k, e] = self.edge_index[moved]
        return edge_maps

    @cached_property
    def inverse_edge_maps(self) -> np.ndarray:
        return np.argsort(self.edge_maps, axis=1)

    @cached_property
    def spatial_lookup(self) -> dict[tuple[int, ...], int]:
        return {permutation: index for index, permutation in enumerate(self.spatial)}

    def graph(self) -> nx.Graph:
        lattice_graph = nx.Graph()
        lattice_graph.add_nodes_from(range(self.n_sites))
        lattice_graph.add_edges_from(self.edges)
        return lattice_graph


@lru_cache(maxsize=None)
def grid_geometry(rows: int, cols: int) -> LatticeGeometry:
    """
    Builds a rows × cols grid with nearest-neighbour edges. Square grids get the 8 dihedral symmetries,
    other rectangles get the 4 symmetries of the rectangle (duplicates removed for degenerate shapes).

    :param rows: Number of rows
    :param cols: Number of columns
    :return: Lattice geometry
    """
    if rows < 1 or cols < 1:
        raise InvalidInstanceError(f"Grid must have at least one row and column, got {rows}×{cols}")

    edges = []
    for row in range(rows):
        for col in range(cols):
            site = row * cols + col
            if col + 1 < cols:
                edges.append((site, site + 1))
            if row + 1 < rows:
                edges.append((site, site + cols))

    spatial = []
    for site_map in _grid_maps(rows, cols):
        permutation = []
        for site in range(rows * cols):
            row, col = site_map(*divmod(site, cols))
            permutation.append(row * cols + col)
        permutation = tuple(permutation)
        if permutation not in spatial:
            spatial.append(permutation)

    return LatticeGeometry(rows=rows, cols=cols, edges=tuple(sorted(edges)), spatial=tuple(spatial))


SQUARE_3X3 = grid_geometry(3, 3)


@dataclass(frozen=True)
class SquareLatticeInstance:
    """
    Signed couplers and fields of an effective superspin Hamiltonian H = Σ h_i s_i − Σ J_ij s_i s_j.

    Couplers are listed in the order of geometry.edges. Fields default to all +1 and are scaled by
    field_magnitude (1 keeps |h_s| = |J_s|).
    """
    couplers: tuple[int, ...]
    fields: Optional[tuple[int, ...]] = None
    field_magnitude: float = 1.0
    geometry: LatticeGeometry = field(default=SQUARE_3X3, repr=False)

    def __post_init__(self):
        couplers = tuple(int(sign) for sign in self.couplers)
        fields = (1,) * self.geometry.n_sites if self.fields is None else tuple(int(sign) for sign in self.fields)
        if len(couplers) != self.geometry.n_edges:
            raise InvalidInstanceError(f"Expected {self.geometry.n_edges} couplers, got {len(couplers)}")
        if len(fields) != self.geometry.n_sites:
            raise InvalidInstanceError(f"Expected {self.geometry.n_sites} fields, got {len(fields)}")
        if any(sign not in (-1, 1) for sign in couplers + fields):
            raise InvalidInstanceError("Couplers and fields must all be ±1")
        object.__setattr__(self, "couplers", couplers)
        object.__setattr__(self, "fields", fields)

    @classmethod
    def from_mappings(cls, couplers: Mapping[tuple[int, int], int], fields: Optional[Mapping[int, int]] = None,
                      field_magnitude: float = 1.0, geometry: LatticeGeometry = SQUARE_3X3):
        normalized = {(min(u, v), max(u, v)): sign for (u, v), sign in couplers.items()}
        if set(normalized) != set(geometry.edges):
            raise InvalidInstanceError("Coupler edges do not match the grid graph")
        coupler_signs = tuple(normalized[edge] for edge in geometry.edges)
        field_signs = None if fields is None else tuple(fields[site] for site in range(geometry.n_sites))
        return cls(couplers=coupler_signs, fields=field_signs, field_magnitude=field_magnitude, geometry=geometry)

    @classmethod
    def ferromagnetic(cls, geometry: LatticeGeometry = SQUARE_3X3, field_sign: int = 1):
        return cls(couplers=(1,) * geometry.n_edges, fields=(field_sign,) * geometry.n_sites, geometry=geometry)

    @property
    def coupler_map(self) -> dict[tuple[int, int], int]:
        return dict(zip(self.geometry.edges, self.couplers))

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    def field_values(self) -> np.ndarray:
        return np.asarray(self.fields, dtype=float) * self.field_magnitude

    def key(self) -> int:
        return int(_encoding_keys(np.array([self.fields]), np.array([self.couplers]))[0])

    def to_json_dict(self) -> dict:
        return {
            "couplers": [{"u": u, "v": v, "sign": sign} for (u, v), sign in self.coupler_map.items()],
            "fields": list(self.fields),
            "field_magnitude": self.field_magnitude,
        }

    @classmethod
    def from_json_dict(cls, data: dict, geometry: LatticeGeometry = SQUARE_3X3):
        try:
            couplers = {(entry["u"], entry["v"]): entry["sign"] for entry in data["couplers"]}
            fields = dict(enumerate(data.get("fields", [1] * geometry.n_sites)))
        except (KeyError, TypeError) as e:
            raise InvalidInstanceError(f"Malformed instance record: {e}") from e
        return cls.from_mappings(couplers, fields, data.get("field_magnitude", 1.0), geometry)

    def content_hash(self) -> str:
        return content_hash({"rows": self.geometry.rows, "cols": self.geometry.cols, **self.to_json_dict()})


@dataclass(frozen=True)
class SymmetryElement:
    """
    Spatial symmetry (index into geometry.spatial) followed by a gauge flip of the listed sites
    """
    spatial: int = 0
    gauge: frozenset[int] = frozenset()

    def gauge_signs(self, n_sites: int) -> np.ndarray:
        signs = np.ones(n_sites, dtype=np.int8)
        signs[list(self.gauge)] = -1
        return signs

    def to_json_dict(self) -> dict:
        return {"spatial": self.spatial, "gauge": sorted(self.gauge)}

    @classmethod
    def from_json_dict(cls, data: dict):
        return cls(spatial=int(data["spatial"]), gauge=frozenset(int(site) for site in data["gauge"]))


IDENTITY = SymmetryElement()


def compose_symmetry(first: SymmetryElement, second: SymmetryElement,
                     geometry: LatticeGeometry = SQUARE_3X3) -> SymmetryElement:
    """
    Element equivalent to applying first, then second
    """
    first_permutation = geometry.spatial[first.spatial]
    second_permutation = geometry.spatial[second.spatial]
    composed = tuple(second_permutation[first_permutation[site]] for site in range(geometry.n_sites))
    moved_gauge = frozenset(second_permutation[site] for site in first.gauge)
    return SymmetryElement(spatial=geometry.spatial_lookup[composed], gauge=moved_gauge ^ second.gauge)


def invert_symmetry(element: SymmetryElement, geometry: LatticeGeometry = SQUARE_3X3) -> SymmetryElement:
    inverse = tuple(int(site) for site in geometry.inverse_permutations[element.spatial])
    return SymmetryElement(spatial=geometry.spatial_lookup[inverse],
                           gauge=frozenset(inverse[site] for site in element.gauge))


def random_symmetry(rng: np.random.Generator, geometry: LatticeGeometry = SQUARE_3X3) -> SymmetryElement:
    spatial = int(rng.integers(len(geometry.spatial)))
    flips = rng.integers(0, 2, size=geometry.n_sites)
    return SymmetryElement(spatial=spatial, gauge=frozenset(int(site) for site in np.flatnonzero(flips)))


def _encoding_keys(fields: np.ndarray, couplers: np.ndarray) -> np.ndarray:
    """
    Integer keys whose ordering is the lexicographic ordering of the serialization
    (fields row-major, then couplers in edge order, bit 1 for a −1 entry)
    """
    bits = np.concatenate([fields < 0, couplers < 0], axis=1).astype(np.int64)
    weights = np.left_shift(np.int64(1), np.arange(bits.shape[1] - 1, -1, -1, dtype=np.int64))
    return bits @ weights


def _spatial_transform(fields: np.ndarray, couplers: np.ndarray, geometry: LatticeGeometry,
                       spatial: int) -> tuple[np.ndarray, np.ndarray]:
    return fields[:, geometry.inverse_permutations[spatial]], couplers[:, geometry.inverse_edge_maps[spatial]]


def _apply_gauge(fields: np.ndarray, couplers: np.ndarray, gauge_signs: np.ndarray,
                 geometry: LatticeGeometry) -> tuple[np.ndarray, np.ndarray]:
    u, v = geometry.edge_endpoints
    return fields * gauge_signs, couplers * gauge_signs[..., u] * gauge_signs[..., v]


def apply_symmetry(element: SymmetryElement, instance: SquareLatticeInstance) -> SquareLatticeInstance:
    """
    Applies a symmetry element to an instance: sites are permuted, then the gauge sites are flipped
    (negating their fields and every incident coupler).
    """
    geometry = instance.geometry
    fields, couplers = _spatial_transform(np.array([instance.fields]), np.array([instance.couplers]),
                                          geometry, element.spatial)
    fields, couplers = _apply_gauge(fields, couplers, element.gauge_signs(geometry.n_sites), geometry)
    return SquareLatticeInstance(couplers=tuple(couplers[0]), fields=tuple(fields[0]),
                                 field_magnitude=instance.field_magnitude, geometry=geometry)


def _canonical_keys(fields: np.ndarray, couplers: np.ndarray,
                    geometry: LatticeGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Canonical keys of a batch of instances.

    The lexicographic minimum always has every field equal to +1, so for each spatial element the gauge is
    fixed by flipping the sites carrying −1 fields; only the spatial elements then need comparing.

    :return: Canonical keys, chosen spatial element per instance, gauge signs per instance
    """
    best_keys = None
    for spatial in range(len(geometry.spatial)):
        moved_fields, moved_couplers = _spatial_transform(fields, couplers, geometry, spatial)
        gauge_signs = np.where(moved_fields < 0, -1, 1).astype(np.int8)
        fixed_fields, fixed_couplers = _apply_gauge(moved_fields, moved_couplers, gauge_signs, geometry)
        keys = _encoding_keys(fixed_fields, fixed_couplers)
        if best_keys is None:
            best_keys = keys
            best_spatial = np.zeros(len(keys), dtype=np.intp)
            best_gauge = gauge_signs
            continue
        improved = keys < best_keys
        best_keys = np.where(improved, keys, best_keys)
        best_spatial = np.where(improved, spatial, best_spatial)
        best_gauge = np.where(improved[:, None], gauge_signs, best_gauge)
    return best_keys, best_spatial, best_gauge


def _decode_key(key: int, geometry: LatticeGeometry, field_magnitude: float = 1.0) -> SquareLatticeInstance:
    width = geometry.n_sites + geometry.n_edges
    bits = [(key >> (width - 1 - position)) & 1 for position in range(width)]
    signs = [1 - 2 * bit for bit in bits]
    return SquareLatticeInstance(couplers=tuple(signs[geometry.n_sites:]), fields=tuple(signs[:geometry.n_sites]),
                                 field_magnitude=field_magnitude, geometry=geometry)


def canonicalize(instance: SquareLatticeInstance) -> tuple[SquareLatticeInstance, SymmetryElement]:
    """
    Finds the lexicographically minimal member of an instance's orbit under spatial symmetries × gauge flips.

    :param instance: Instance to canonicalize
    :return: Canonical instance, and the element that maps the instance onto it
    """
    geometry = instance.geometry
    keys, spatial, gauge_signs = _canonical_keys(np.array([instance.fields]), np.array([instance.couplers]),
                                                 geometry)
    element = SymmetryElement(spatial=int(spatial[0]),
                              gauge=frozenset(int(site) for site in np.flatnonzero(gauge_signs[0] < 0)))
    return _decode_key(int(keys[0]), geometry, instance.field_magnitude), element


def canonical_key(instance: SquareLatticeInstance) -> int:
    keys, _, _ = _canonical_keys(np.array([instance.fields]), np.array([instance.couplers]), instance.geometry)
    return int(keys[0])


@lru_cache(maxsize=None)
def _enumerated_keys(geometry: LatticeGeometry, include_field_signs: bool) -> tuple[int, ...]:
    n_edges = geometry.n_edges
    couplers = 1 - 2 * ((np.arange(2 ** n_edges, dtype=np.int64)[:, None]
                         >> np.arange(n_edges - 1, -1, -1, dtype=np.int64)) & 1)
    couplers = couplers.astype(np.int8)
    field_patterns = all_configurations(geometry.n_sites) if include_field_signs \
        else np.ones((1, geometry.n_sites), dtype=np.int8)

    found = set()
    for field_pattern in field_patterns:
        fields = np.broadcast_to(field_pattern, (len(couplers), geometry.n_sites))
        keys, _, _ = _canonical_keys(fields, couplers, geometry)
        found.update(np.unique(keys).tolist())
    return tuple(sorted(found))


def enumerate_classes(geometry: LatticeGeometry = SQUARE_3X3,
                      include_field_signs: bool = False) -> list[SquareLatticeInstance]:
    """
    Enumerates one canonical representative per symmetry class, ordered by canonical encoding.
    The list index is the class id.

    :param geometry: Lattice geometry
    :param include_field_signs: Also iterate over every field sign pattern (the full 2^(sites+edges) set)
    :return: Canonical representatives
    """
    return [_decode_key(key, geometry) for key in _enumerated_keys(geometry, include_field_signs)]


def class_index(instance: SquareLatticeInstance, classes: Sequence[SquareLatticeInstance]) -> int:
    """
    Looks up the class id of any member of a class.

    :param instance: Instance in any frame
    :param classes: Canonical representatives from enumerate_classes
    :return: Index into classes
    """
    target = canonical_key(instance)
    keys = [representative.key() for representative in classes]
    position = int(np.searchsorted(keys, target))
    if position == len(keys) or keys[position] != target:
        raise InvalidInstanceError("Instance does not belong to any of the given classes")
    return position


def orbit_size(instance: SquareLatticeInstance) -> int:
    """
    Number of distinct instances reachable from this one under the full symmetry group
    """
    geometry = instance.geometry
    all_gauges = all_configurations(geometry.n_sites)
    reachable = set()
    for spatial in range(len(geometry.spatial)):
        moved_fields, moved_couplers = _spatial_transform(np.array([instance.fields]), np.array([instance.couplers]),
                                                          geometry, spatial)
        fields, couplers = _apply_gauge(moved_fields, moved_couplers, all_gauges, geometry)
        reachable.update(_encoding_keys(fields, couplers).tolist())
    return len(reachable)


def superspin_energy(instance: SquareLatticeInstance, configurations) -> np.ndarray:
    """
    Energies of superspin configurations under H = Σ h_i s_i − Σ J_ij s_i s_j.

    :param instance: Effective Hamiltonian
    :param configurations: Array of shape (..., n_sites) of ±1
    :return: Energies, one per configuration
    """
    configurations = np.asarray(configurations, dtype=float)
    u, v = instance.geometry.edge_endpoints
    couplers = np.asarray(instance.couplers, dtype=float)
    return configurations @ instance.field_values() - (configurations[..., u] * configurations[..., v]) @ couplers


def write_class_list(classes: Sequence[SquareLatticeInstance]) -> list[dict]:
    return [{"class_id": class_id, **instance.to_json_dict()} for class_id, instance in enumerate(classes)]


def read_class_list(records: Iterable[dict], geometry: LatticeGeometry = SQUARE_3X3) -> list[SquareLatticeInstance]:
    records = sorted(records, key=lambda record: record["class_id"])
    return [SquareLatticeInstance.from_json_dict(record, geometry) for record in records]


def load_instance(filepath: str) -> SquareLatticeInstance:
    with open(filepath, "r", encoding="utf-8") as instance_file:
        return SquareLatticeInstance.from_json_dict(json.load(instance_file))


class CellMode(Enum):
    FULL8 = 8
    TRUNCATED4 = 4

    @property
    def cell_size(self) -> int:
        return self.value


# Local indices 0-3 carry the couplers to the cells above and below, 4-7 those to the cells left and right
VERTICAL_SIDE = (0, 1, 2, 3)
HORIZONTAL_SIDE = (4, 5, 6, 7)
TRUNCATED_CELL_SPINS = (0, 1, 4, 5)


@dataclass(frozen=True)
class ChimeraIsing:
    """
    Spin-level Ising Hamiltonian of superspins embedded onto Chimera unit cells.

    Spins are numbered cell by cell; spin_labels[i] is the (cell, local Chimera index) of spin i.
    Energies follow E = Σ h_i s_i − Σ J_ij s_i s_j.
    """
    cell_mode: CellMode
    alpha: float
    alpha_s: float
    couplers: dict[tuple[int, int], float]
    fields: dict[int, float]
    cell_membership: dict[int, int]
    spin_labels: tuple[tuple[int, int], ...]
    geometry: LatticeGeometry = field(default=SQUARE_3X3, repr=False)

    @property
    def n_spins(self) -> int:
        return len(self.spin_labels)

    @property
    def n_cells(self) -> int:
        return self.geometry.n_sites

    @property
    def superspin_scale(self) -> float:
        """
        Summed field (and summed inter-cell coupling) of one superspin
        """
        return self.cell_mode.cell_size / 2 * self.alpha * self.alpha_s

    @cached_property
    def field_vector(self) -> np.ndarray:
        return np.array([self.fields.get(spin, 0.0) for spin in range(self.n_spins)], dtype=float)

    @cached_property
    def coupling_matrix(self) -> np.ndarray:
        coupling_matrix = np.zeros((self.n_spins, self.n_spins))
        for (u, v), value in self.couplers.items():
            coupling_matrix[u, v] = value
            coupling_matrix[v, u] = value
        return coupling_matrix

    @cached_property
    def cell_of_spin(self) -> np.ndarray:
        return np.array([self.cell_membership[spin] for spin in range(self.n_spins)], dtype=np.intp)

    def cell_spins(self, cell: int) -> list[int]:
        return [spin for spin in range(self.n_spins) if self.cell_membership[spin] == cell]

    def graph(self) -> nx.Graph:
        chimera_graph = nx.Graph()
        chimera_graph.add_nodes_from(range(self.n_spins))
        chimera_graph.add_weighted_edges_from((u, v, value) for (u, v), value in self.couplers.items())
        return chimera_graph

    def aligned_configuration(self, superspins) -> np.ndarray:
        return np.asarray(superspins)[..., self.cell_of_spin]


def embed_superspin(instance: SquareLatticeInstance, cell_mode: CellMode, alpha: float, alpha_s: float,
                    truncated_spins: Sequence[int] = TRUNCATED_CELL_SPINS) -> ChimeraIsing:
    """
    Embeds an effective square-lattice Hamiltonian onto Chimera unit cells.

    Intra-cell couplers are ferromagnetic with strength alpha. Each lattice edge becomes one physical
    coupler per spin pair on the matching side of the two cells (horizontal edges use local indices 4-7,
    vertical edges 0-3), with value alpha·alpha_s·J. Every spin gets the field ½·alpha·alpha_s·h.

    :param instance: Effective Hamiltonian
    :param cell_mode: Full 8-spin cells or truncated 4-spin cells
    :param alpha: Overall Ising scale (> 0)
    :param alpha_s: Superspin scale (≥ 0, where 0 leaves isolated cells)
    :param truncated_spins: Local indices kept by truncated cells (two from each side)
    :return: Spin-level Hamiltonian
    """
    if alpha <= 0:
        raise EmbeddingScaleError(f"alpha must be positive, got {alpha}")
    if alpha_s < 0:
        raise EmbeddingScaleError(f"alpha_s must be non-negative, got {alpha_s}")

    if cell_mode == CellMode.FULL8:
        local_spins = VERTICAL_SIDE + HORIZONTAL_SIDE
    else:
        local_spins = tuple(sorted(truncated_spins))
        vertical = [index for index in local_spins if index in VERTICAL_SIDE]
        horizontal = [index for index in local_spins if index in HORIZONTAL_SIDE]
        if len(local_spins) != 4 or len(vertical) != 2 or len(horizontal) != 2:
            raise EmbeddingScaleError(f"Truncated cells need two spins from each side, got {truncated_spins}")

    geometry = instance.geometry
    spin_labels = tuple((cell, local) for cell in range(geometry.n_sites) for local in local_spins)
    spin_of = {label: spin for spin, label in enumerate(spin_labels)}
    cell_membership = {spin: cell for spin, (cell, _) in enumerate(spin_labels)}

    couplers = {}
    for cell in range(geometry.n_sites):
        for u in (index for index in local_spins if index in VERTICAL_SIDE):
            for v in (index for index in local_spins if index in HORIZONTAL_SIDE):
                couplers[(spin_of[(cell, u)], spin_of[(cell, v)])] = float(alpha)

    for (cell_a, cell_b), sign in instance.coupler_map.items():
        side = HORIZONTAL_SIDE if geometry.is_horizontal((cell_a, cell_b)) else VERTICAL_SIDE
        for local in (index for index in local_spins if index in side):
            couplers[(spin_of[(cell_a, local)], spin_of[(cell_b, local)])] = alpha * alpha_s * sign

    field_values = instance.field_values()
    fields = {spin: 0.5 * alpha * alpha_s * field_values[cell] for spin, (cell, _) in enumerate(spin_labels)}

    return ChimeraIsing(cell_mode=cell_mode, alpha=alpha, alpha_s=alpha_s, couplers=couplers, fields=fields,
                        cell_membership=cell_membership, spin_labels=spin_labels, geometry=geometry)


def _configuration_array(chimera: ChimeraIsing, config) -> np.ndarray:
    if isinstance(config, Mapping):
        missing = [spin for spin in range(chimera.n_spins) if spin not in config]
        if missing:
            raise MissingSpinError(f"Configuration is missing spins {missing}")
        return np.array([config[spin] for spin in range(chimera.n_spins)], dtype=float)
    config = np.asarray(config, dtype=float)
    if config.shape[-1] != chimera.n_spins:
        raise MissingSpinError(f"Configuration covers {config.shape[-1]} of {chimera.n_spins} spins")
    return config


def classical_energy(chimera: ChimeraIsing, config) -> float | np.ndarray:
    """
    Classical Ising energy E = Σ h_i s_i − Σ J_ij s_i s_j.

    :param chimera: Spin-level Hamiltonian
    :param config: Mapping spin → ±1, or array of shape (..., n_spins)
    :return: Energy (array of energies for a batch of configurations)
    """
    spins = _configuration_array(chimera, config)
    energy = spins @ chimera.field_vector - 0.5 * np.einsum("...i,ij,...j->...", spins, chimera.coupling_matrix, spins)
    return float(energy) if np.ndim(energy) == 0 else energy


@dataclass(frozen=True)
class LocalMinimumViolation:
    superspins: tuple[int, ...]
    spin: int
    delta_energy: float


def verify_local_minima(chimera: ChimeraIsing, tolerance: float = 1e-12) -> tuple[bool, list[LocalMinimumViolation]]:
    """
    Checks that every configuration with all spins of each cell aligned is a (weak) local minimum under
    single-spin flips.

    This is not guaranteed. A spin on the edge of a cell is held by its intra-cell couplers (2α truncated,
    4α full) and pushed by up to 2.5·α·α_s of inter-cell coupling plus field, so aligned states stay minimal
    only for α_s ≤ 0.8 with truncated cells and α_s ≤ 1.6 with full cells. A ferromagnetic truncated
    embedding at α_s = 1 already has violating flips, for any α.

    :param chimera: Spin-level Hamiltonian
    :param tolerance: Allowed negative flip energy due to rounding
    :return: Whether all aligned configurations are local minima, and every violating flip
    """
    superspins = all_configurations(chimera.n_cells)
    spins = chimera.aligned_configuration(superspins).astype(float)
    flip_costs = 2 * spins * (spins @ chimera.coupling_matrix - chimera.field_vector)

    violations = []
    for row, spin in zip(*np.nonzero(flip_costs < -tolerance)):
        violations.append(LocalMinimumViolation(superspins=tuple(int(s) for s in superspins[row]), spin=int(spin),
                                                delta_energy=float(flip_costs[row, spin])))
    return len(violations) == 0, violations


def isolated_cell_graph(cell_mode: CellMode) -> nx.Graph:
    """
    Intra-cell coupling graph of a single cell: K(4,4) for full cells, K(2,2) for truncated cells
    """
    side = cell_mode.cell_size // 2
    return nx.complete_bipartite_graph(side, side)


def min_flip_barrier(cell: CellMode | nx.Graph, alpha=1):
    """
    Lowest possible maximum energy excess along any single-flip path taking an isolated ferromagnetic cell
    from all spins up to all spins down.

    The minimax path always lies on a minimum spanning tree of the configuration hypercube when edges are
    weighted by the higher energy of their endpoints.

    :param cell: Cell mode, or any graph of unit ferromagnetic couplers
    :param alpha: Coupler strength (a Fraction gives exact rational output)
    :return: Barrier height in units of alpha's type
    """
    cell_graph = isolated_cell_graph(cell) if isinstance(cell, CellMode) else cell
    cell_graph = nx.convert_node_labels_to_integers(cell_graph)
    n = cell_graph.number_of_nodes()

    # Integer energies in units of the coupler strength
    configurations = all_configurations(n).astype(np.int64)
    u, v = np.array(list(cell_graph.edges()), dtype=np.intp).reshape(-1, 2).T
    energies = -(configurations[:, u] * configurations[:, v]).sum(axis=1)

    hypercube = nx.Graph()
    for state in range(2 ** n):
        for bit in range(n):
            neighbour = state ^ (1 << bit)
            if neighbour > state:
                hypercube.add_edge(state, neighbour, weight=int(max(energies[state], energies[neighbour])))

    start, end = 0, 2 ** n - 1
    tree = nx.minimum_spanning_tree(hypercube)
    path = nx.shortest_path(tree, start, end)
    peak = max(tree[a][b]["weight"] for a, b in zip(path, path[1:]))
    return (int(peak) - int(energies[start])) * alpha
