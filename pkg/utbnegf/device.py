# Copyright (C) 2026 The utb-negf developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; version 3 of the License.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

"""Device geometry, alloy disorder, surface roughness and H(k)."""

__all__ = [
    'AlloyAssignment',
    'BlockTridiagonalOperator',
    'Bond',
    'DeviceGraph',
    'DeviceSpec',
    'DisorderMode',
    'InvalidDeviceError',
    'InvalidRoughnessError',
    'MaterialParams',
    'RoughnessSpec',
    'Site',
    'Species',
    'apply_surface_roughness',
    'assemble_hamiltonian',
    'assign_alloy',
    'build_device',
    'contact_blocks',
    ]


import math
import logging
import numpy as np

from collections import deque, namedtuple
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from scipy.special import ndtr
from utbnegf.helpers import check_length


log = logging.getLogger('utbnegf')

NL = '\n'


class InvalidDeviceError(Exception):
    """The device description violates one or more constraints."""

    def __init__(self, problems):
        super().__init__(problems)
        self.problems = list(problems)

    def __str__(self):
        return NL.join(self.problems)


class InvalidRoughnessError(Exception):
    """The roughness settings cannot be applied to the device."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason

    def __str__(self):
        return 'invalid roughness: {0.reason}'.format(self)


class DisorderMode(Enum):
    vca = 'vca'
    random = 'random'


class Species(Enum):
    si = 'Si'
    ge = 'Ge'


@dataclass(frozen=True)
class MaterialParams:
    onsite_si: float
    onsite_ge: float
    hopping_si: float
    hopping_ge: float
    hopping_sige: float
    # Second orbital, used only when orbitals_per_site == 2.
    orbital_splitting: float = 0.0
    interorbital_hopping: float = 0.0


@dataclass(frozen=True)
class RoughnessSpec:
    amplitude: int
    correlation_length: float
    seed: int = 0


@dataclass(frozen=True)
class DeviceSpec:
    """Geometry and disorder of one device.

    A slab is `layers` atomic layers thick (the confinement direction) and
    `sites_per_slab // layers` columns wide along the periodic transverse
    direction.
    """
    n_slabs: int
    sites_per_slab: int
    lattice_constant: float = 0.543
    cross_section_area: float = 0.0737
    orbitals_per_site: int = 1
    alloy_fraction: float = 0.0
    disorder_mode: DisorderMode = DisorderMode.vca
    rng_seed: int = 0
    roughness: RoughnessSpec = None
    layers: int = 1

    @property
    def width(self):
        return self.sites_per_slab // self.layers

    @property
    def transverse_period(self):
        """The period W of the transverse direction, in nm."""
        return self.width * self.lattice_constant

    def problems(self):
        problems = []
        if self.n_slabs < 3:
            problems.append('n_slabs must be at least 3: {}'.format(
                self.n_slabs))
        if self.sites_per_slab < 1:
            problems.append('sites_per_slab must be at least 1: {}'.format(
                self.sites_per_slab))
        if self.layers < 1 or self.sites_per_slab % max(self.layers, 1) != 0:
            problems.append(
                'sites_per_slab ({}) must be a multiple of layers ({})'.format(
                    self.sites_per_slab, self.layers))
        if not 0 <= self.alloy_fraction <= 1:
            problems.append('alloy fraction must be within [0, 1]: {}'.format(
                self.alloy_fraction))
        if self.cross_section_area <= 0:
            problems.append('cross section area must be positive: {}'.format(
                self.cross_section_area))
        if self.lattice_constant <= 0:
            problems.append('lattice constant must be positive: {}'.format(
                self.lattice_constant))
        if self.orbitals_per_site not in (1, 2):
            problems.append('orbitals_per_site must be 1 or 2: {}'.format(
                self.orbitals_per_site))
        return problems


# `transverse` is the index within the slab, layer * width + column.
Site = namedtuple('Site', 'slab transverse species active')
Bond = namedtuple('Bond', 'site_i site_j inter_slab wrap')


@dataclass(frozen=True)
class DeviceGraph:
    spec: DeviceSpec
    sites: tuple
    bonds: tuple

    @property
    def n_sites(self):
        return len(self.sites)

    def site_id(self, slab, layer, column):
        spec = self.spec
        return slab * spec.sites_per_slab + layer * spec.width + column

    def coordinates(self, site_id):
        """Return (slab, layer, column) of a site."""
        slab, transverse = divmod(site_id, self.spec.sites_per_slab)
        layer, column = divmod(transverse, self.spec.width)
        return slab, layer, column

    @cached_property
    def slab_members(self):
        """Per slab, the ids of its active sites in matrix order."""
        members = [[] for slab in range(self.spec.n_slabs)]
        for site_id, site in enumerate(self.sites):
            if site.active:
                members[site.slab].append(site_id)
        return tuple(tuple(ids) for ids in members)

    @cached_property
    def active_sites(self):
        """All active site ids, ordered slab by slab."""
        return tuple(site_id for ids in self.slab_members for site_id in ids)

    @cached_property
    def _positions(self):
        positions = {}
        for ids in self.slab_members:
            for position, site_id in enumerate(ids):
                positions[site_id] = position
        return positions

    def ranks(self):
        """The block rank of every slab."""
        norb = self.spec.orbitals_per_site
        return [len(ids) * norb for ids in self.slab_members]

    def is_connected(self):
        """True when the active sites form a single connected graph."""
        active = self.active_sites
        if len(active) == 0:
            return False
        neighbors = {site_id: [] for site_id in active}
        for bond in self.bonds:
            if bond.site_i in neighbors and bond.site_j in neighbors:
                neighbors[bond.site_i].append(bond.site_j)
                neighbors[bond.site_j].append(bond.site_i)
        seen = {active[0]}
        queue = deque([active[0]])
        while queue:
            for other in neighbors[queue.popleft()]:
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        return len(seen) == len(active)


def build_device(spec):
    """Build the site and bond graph of a pristine device."""
    problems = spec.problems()
    if len(problems) > 0:
        raise InvalidDeviceError(problems)
    width = spec.width
    sites = []
    for slab in range(spec.n_slabs):
        for transverse in range(spec.sites_per_slab):
            sites.append(Site(slab, transverse, Species.si, True))
    graph = DeviceGraph(spec, tuple(sites), ())
    bonds = []
    for slab in range(spec.n_slabs):
        for layer in range(spec.layers):
            for column in range(width):
                here = graph.site_id(slab, layer, column)
                if column + 1 < width:
                    bonds.append(Bond(
                        here, graph.site_id(slab, layer, column + 1),
                        False, False))
                elif width > 1:
                    # Periodic image of column 0 in the next transverse cell.
                    bonds.append(Bond(
                        here, graph.site_id(slab, layer, 0), False, True))
                if layer + 1 < spec.layers:
                    bonds.append(Bond(
                        here, graph.site_id(slab, layer + 1, column),
                        False, False))
                if slab + 1 < spec.n_slabs:
                    bonds.append(Bond(
                        here, graph.site_id(slab + 1, layer, column),
                        True, False))
    return replace(graph, bonds=tuple(bonds))


@dataclass(frozen=True, eq=False)
class AlloyAssignment:
    """Per-site species or virtual crystal parameters."""
    params: MaterialParams
    alloy_fraction: float
    mode: DisorderMode
    # True where a site is Ge.  Only meaningful in random mode.
    is_ge: np.ndarray = field(repr=False)

    def onsite(self, site_id):
        params = self.params
        if self.mode is DisorderMode.vca:
            x = self.alloy_fraction
            return (1 - x) * params.onsite_si + x * params.onsite_ge
        return params.onsite_ge if self.is_ge[site_id] else params.onsite_si

    def hopping(self, site_i, site_j):
        params = self.params
        if self.mode is DisorderMode.vca:
            x = self.alloy_fraction
            return (1 - x) * params.hopping_si + x * params.hopping_ge
        ge_i = self.is_ge[site_i]
        ge_j = self.is_ge[site_j]
        if ge_i and ge_j:
            return params.hopping_ge
        if ge_i or ge_j:
            return params.hopping_sige
        return params.hopping_si

    def species(self, site_id):
        return Species.ge if self.is_ge[site_id] else Species.si


def assign_alloy(graph, params, x, mode, seed):
    """Assign the alloy, either as a virtual crystal or at random.

    In random mode every site is independently Ge with probability `x`; the
    draw depends only on the seed and the number of sites.
    """
    if not 0 <= x <= 1:
        raise InvalidDeviceError(
            ['alloy fraction must be within [0, 1]: {}'.format(x)])
    mode = DisorderMode(mode)
    if mode is DisorderMode.random:
        rng = np.random.default_rng(seed)
        is_ge = rng.random(graph.n_sites) < x
    else:
        is_ge = np.zeros(graph.n_sites, dtype=bool)
    is_ge.setflags(write=False)
    return AlloyAssignment(params, x, mode, is_ge)


def roughness_depths(spec, roughness):
    """Return the deletion depth in layers of every (slab, column).

    Along the transport direction each column follows a unit Gaussian
    process with correlation exp(-|dx| / correlation_length); the depth is
    the field pushed through the normal CDF and binned into the depths
    0 .. `amplitude`, each equally likely.
    Contact slabs are never thinned.
    """
    depths = np.zeros((spec.n_slabs, spec.width), dtype=int)
    if roughness is None or roughness.amplitude == 0:
        return depths
    rng = np.random.default_rng(roughness.seed)
    rho = math.exp(-spec.lattice_constant / roughness.correlation_length)
    innovation = math.sqrt(max(0.0, 1.0 - rho * rho))
    noise = rng.standard_normal((spec.n_slabs, spec.width))
    profile = np.empty_like(noise)
    profile[0] = noise[0]
    for slab in range(1, spec.n_slabs):
        profile[slab] = rho * profile[slab - 1] + innovation * noise[slab]
    levels = roughness.amplitude + 1
    interior = np.floor(levels * ndtr(profile[1:-1])).astype(int)
    depths[1:-1] = np.clip(interior, 0, roughness.amplitude)
    return depths


def apply_surface_roughness(graph, roughness):
    """Remove top-surface sites following a correlated random profile."""
    spec = graph.spec
    if roughness is None or roughness.amplitude == 0:
        return graph
    if roughness.amplitude >= spec.layers:
        raise InvalidRoughnessError(
            'amplitude {} must be less than the body thickness of {} '
            'layers'.format(roughness.amplitude, spec.layers))
    if roughness.correlation_length <= 0:
        raise InvalidRoughnessError(
            'correlation length must be positive: {}'.format(
                roughness.correlation_length))
    depths = roughness_depths(spec, roughness)
    sites = list(graph.sites)
    for site_id, site in enumerate(sites):
        slab, layer, column = graph.coordinates(site_id)
        if layer >= spec.layers - depths[slab, column]:
            sites[site_id] = site._replace(active=False)
    rough = replace(graph, sites=tuple(sites))
    if any(len(ids) == 0 for ids in rough.slab_members):
        raise InvalidRoughnessError('profile empties a slab')
    if not rough.is_connected():
        raise InvalidRoughnessError('profile disconnects the device')
    removed = graph.n_sites - len(rough.active_sites)
    log.debug('Roughness removed {} of {} sites', removed, graph.n_sites)
    return rough


class BlockTridiagonalOperator:
    """A Hermitian block tridiagonal matrix.

    `diagonal_blocks[i]` is block (i, i) and `coupling_blocks[i]` is block
    (i, i+1); block (i+1, i) is its conjugate transpose.
    """

    def __init__(self, diagonal_blocks, coupling_blocks):
        if len(coupling_blocks) != max(len(diagonal_blocks) - 1, 0):
            raise ValueError('{} diagonal blocks need {} couplings, got {}'
                             .format(len(diagonal_blocks),
                                     len(diagonal_blocks) - 1,
                                     len(coupling_blocks)))
        for i, block in enumerate(coupling_blocks):
            expected = (diagonal_blocks[i].shape[0],
                        diagonal_blocks[i + 1].shape[0])
            if block.shape != expected:
                raise ValueError('coupling block {}: shape {} != {}'.format(
                    i, block.shape, expected))
        self.diagonal_blocks = list(diagonal_blocks)
        self.coupling_blocks = list(coupling_blocks)

    def __len__(self):
        return len(self.diagonal_blocks)

    def __repr__(self):                             # pragma: no cover
        return '<BlockTridiagonalOperator ranks={}>'.format(self.ranks)

    @property
    def ranks(self):
        return [block.shape[0] for block in self.diagonal_blocks]

    def upper(self, i):
        return self.coupling_blocks[i]

    def lower(self, i):
        """Block (i+1, i)."""
        return self.coupling_blocks[i].conj().T

    def offsets(self):
        offsets = [0]
        for rank in self.ranks:
            offsets.append(offsets[-1] + rank)
        return offsets

    def to_dense(self):
        offsets = self.offsets()
        dense = np.zeros((offsets[-1], offsets[-1]), dtype=complex)
        for i, block in enumerate(self.diagonal_blocks):
            dense[offsets[i]:offsets[i+1], offsets[i]:offsets[i+1]] = block
        for i, block in enumerate(self.coupling_blocks):
            rows = slice(offsets[i], offsets[i+1])
            cols = slice(offsets[i+1], offsets[i+2])
            dense[rows, cols] = block
            dense[cols, rows] = block.conj().T
        return dense

    def shifted(self, potential):
        """Return a copy with every diagonal block shifted by `potential`.

        `potential` holds one real value per slab block row; each is
        subtracted from that block's diagonal.
        """
        check_length(potential, len(self), 'potential')
        blocks = [block - value * np.eye(block.shape[0])
                  for block, value in zip(self.diagonal_blocks, potential)]
        return BlockTridiagonalOperator(blocks, self.coupling_blocks)


def _onsite_block(energy, params, norb):
    if norb == 1:
        return np.array([[energy]], dtype=complex)
    return np.diag([energy, energy + params.orbital_splitting]).astype(
        complex)


def _hopping_block(hopping, params, norb):
    if norb == 1:
        return np.array([[hopping]], dtype=complex)
    t_x = params.interorbital_hopping
    return np.array([[hopping, t_x], [t_x, hopping]], dtype=complex)


def assemble_hamiltonian(graph, assignment, k, phi):
    """Assemble H(k) - e*phi over the active sites.

    `phi` gives the electrostatic potential in V of every active site, in
    `graph.active_sites` order.
    """
    active = graph.active_sites
    check_length(phi, len(active), 'phi')
    spec = graph.spec
    norb = spec.orbitals_per_site
    params = assignment.params
    positions = graph._positions
    ranks = graph.ranks()
    diagonal = [np.zeros((rank, rank), dtype=complex) for rank in ranks]
    coupling = [np.zeros((ranks[i], ranks[i+1]), dtype=complex)
                for i in range(len(ranks) - 1)]
    for site_id, potential in zip(active, phi):
        slab = graph.sites[site_id].slab
        at = positions[site_id] * norb
        diagonal[slab][at:at+norb, at:at+norb] += _onsite_block(
            assignment.onsite(site_id) - potential, params, norb)
    phase = np.exp(1j * k * spec.transverse_period)
    for bond in graph.bonds:
        if bond.site_i not in positions or bond.site_j not in positions:
            continue
        block = _hopping_block(
            assignment.hopping(bond.site_i, bond.site_j), params, norb)
        slab = graph.sites[bond.site_i].slab
        at_i = positions[bond.site_i] * norb
        at_j = positions[bond.site_j] * norb
        if bond.inter_slab:
            coupling[slab][at_i:at_i+norb, at_j:at_j+norb] += block
            continue
        if bond.wrap:
            block = block * phase
        diagonal[slab][at_i:at_i+norb, at_j:at_j+norb] += block
        diagonal[slab][at_j:at_j+norb, at_i:at_i+norb] += block.conj().T
    return BlockTridiagonalOperator(diagonal, coupling)


def contact_blocks(spec, params, k):
    """Return (h00, h01) of the pristine virtual crystal lead at `k`.

    The leads are always virtual crystals, even for random-alloy devices.
    """
    lead_spec = replace(spec, n_slabs=3, roughness=None,
                        disorder_mode=DisorderMode.vca)
    graph = build_device(lead_spec)
    assignment = assign_alloy(
        graph, params, spec.alloy_fraction, DisorderMode.vca, 0)
    operator = assemble_hamiltonian(
        graph, assignment, k, np.zeros(len(graph.active_sites)))
    return operator.diagonal_blocks[0], operator.coupling_blocks[0]
