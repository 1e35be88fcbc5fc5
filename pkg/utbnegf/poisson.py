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

"""Electrostatics on the device cross section and the outer SCF loop.

The mesh is two dimensional: one node per (slab, layer) of the body, plus
oxide rows above and below it.  Sites that differ only in their position
along the periodic direction share a node.  The gates are Dirichlet nodes on
the outermost oxide rows and the contact slabs may be held at their lead
potentials.  Every other boundary is zero flux.
"""

__all__ = [
    'MeshError',
    'PoissonMesh',
    'PoissonSettings',
    'ScfResult',
    'assemble_and_solve',
    'density_from_G',
    'device_mesh',
    'gauss_residual',
    'node_density',
    'outer_scf',
    ]


import math
import logging
import numpy as np

from dataclasses import dataclass, field
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve
from utbnegf.ekgrid import integrate_energy, weighted_sum
from utbnegf.helpers import check_length
from utbnegf.units import E_OVER_EPS0


log = logging.getLogger('utbnegf')

SOLVE_TOLERANCE = 1e-10


class MeshError(Exception):
    """The Poisson problem is not well posed."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason

    def __str__(self):
        return 'bad Poisson mesh: {0.reason}'.format(self)


@dataclass(frozen=True, eq=False)
class PoissonMesh:
    """A rectangular finite volume mesh.

    Node (i, j) has index i * shape[1] + j; i runs along transport and j
    across the body.  `dirichlet` maps node indices to fixed potentials in
    V.  `site_map[s]` is the node of the s-th active device site.
    """
    shape: tuple
    spacing: tuple
    permittivity: np.ndarray
    doping: np.ndarray
    dirichlet: dict
    site_map: np.ndarray = field(default=None)

    @property
    def n_nodes(self):
        return self.shape[0] * self.shape[1]

    @property
    def node_volume(self):
        """Volume per unit depth of one node, in nm^2."""
        return self.spacing[0] * self.spacing[1]

    def node(self, i, j):
        return i * self.shape[1] + j

    def validate(self):
        check_length(self.permittivity, self.n_nodes, 'permittivity')
        check_length(self.doping, self.n_nodes, 'doping')
        if len(self.dirichlet) == 0:
            raise MeshError('no Dirichlet node; the potential is undefined')
        if np.any(np.asarray(self.permittivity) <= 0):
            raise MeshError('permittivity must be positive')
        if min(self.spacing) <= 0:
            raise MeshError('spacing must be positive: {}'.format(
                self.spacing))
        if any(not 0 <= node < self.n_nodes for node in self.dirichlet):
            raise MeshError('Dirichlet node outside the mesh')

    def faces(self):
        """Yield (a, b, coefficient) for every face between two nodes.

        The coefficient is the harmonic mean permittivity times face length
        over node distance.
        """
        nx, nz = self.shape
        dx, dz = self.spacing
        eps = self.permittivity
        for i in range(nx):
            for j in range(nz):
                here = self.node(i, j)
                neighbors = []
                if i + 1 < nx:
                    neighbors.append((self.node(i + 1, j), dz / dx))
                if j + 1 < nz:
                    neighbors.append((self.node(i, j + 1), dx / dz))
                for there, ratio in neighbors:
                    mean = 2 * eps[here] * eps[there] / (
                        eps[here] + eps[there])
                    yield here, there, mean * ratio


@dataclass(frozen=True)
class PoissonSettings:
    oxide_layers: int
    oxide_permittivity: float
    body_permittivity: float
    donor_density: float
    gate_start_slab: int
    gate_end_slab: int


def device_mesh(graph, settings, gate_potential, source_potential=None,
                drain_potential=None):
    """Build the mesh of a device with a double gate at `gate_potential`.

    When given, the body nodes of the first and last slab are held at the
    source and drain potentials so that the device matches its leads.
    """
    spec = graph.spec
    oxide = settings.oxide_layers
    nx = spec.n_slabs
    nz = spec.layers + 2 * oxide
    if oxide < 1:
        raise MeshError('the gates need at least one oxide layer')
    if not 0 <= settings.gate_start_slab <= settings.gate_end_slab < nx:
        raise MeshError('gate slabs [{}, {}] outside the device'.format(
            settings.gate_start_slab, settings.gate_end_slab))
    permittivity = np.full(nx * nz, settings.oxide_permittivity)
    doping = np.zeros(nx * nz)
    for i in range(nx):
        for j in range(oxide, oxide + spec.layers):
            permittivity[i * nz + j] = settings.body_permittivity
            doping[i * nz + j] = settings.donor_density
    dirichlet = {}
    for i in range(settings.gate_start_slab, settings.gate_end_slab + 1):
        dirichlet[i * nz] = gate_potential
        dirichlet[i * nz + nz - 1] = gate_potential
    for slab, potential in ((0, source_potential),
                            (nx - 1, drain_potential)):
        if potential is None:
            continue
        for j in range(oxide, oxide + spec.layers):
            dirichlet[slab * nz + j] = potential
    site_map = []
    for site_id in graph.active_sites:
        slab, layer, column = graph.coordinates(site_id)
        site_map.append(slab * nz + oxide + layer)
    mesh = PoissonMesh(
        shape=(nx, nz),
        spacing=(spec.lattice_constant, spec.lattice_constant),
        permittivity=permittivity,
        doping=doping,
        dirichlet=dirichlet,
        site_map=np.array(site_map, dtype=int),
        )
    mesh.validate()
    return mesh


def density_from_G(occupations, grid, area, orbitals_per_site=1,
                   spin_degeneracy=2.0):
    """Electron density per active site, in 1/nm^3.

    `occupations[t]` is Im diag G^< of tuple t, one entry per orbital.
    n = g_s (2 pi)^-2 sum_E w_E sum_k w_k Im G^<_ss / A, where the momentum
    weights carry the inverse transverse period.
    """
    check_length(occupations, grid.n_tuples, 'occupations')
    rows = []
    for e in range(grid.n_energies):
        start = grid.tuple_index(e, 0)
        rows.append(weighted_sum(
            grid.momentum_weights,
            [np.asarray(values, dtype=float)
             for values in occupations[start:start + grid.n_momenta]]))
    total = integrate_energy(rows, grid)
    per_orbital = spin_degeneracy * total / ((2 * math.pi) ** 2 * area)
    return per_orbital.reshape(-1, orbitals_per_site).sum(axis=1)


def node_density(mesh, site_density):
    """Average the site densities onto their nodes."""
    check_length(site_density, len(mesh.site_map), 'site density')
    totals = np.bincount(mesh.site_map, weights=site_density,
                         minlength=mesh.n_nodes)
    counts = np.bincount(mesh.site_map, minlength=mesh.n_nodes)
    density = np.zeros(mesh.n_nodes)
    filled = counts > 0
    density[filled] = totals[filled] / counts[filled]
    return density


def _system(mesh, density):
    """The finite volume rows of the free nodes, Dirichlet eliminated."""
    free = [node for node in range(mesh.n_nodes)
            if node not in mesh.dirichlet]
    position = {node: row for row, node in enumerate(free)}
    rows, cols, values = [], [], []
    rhs = (E_OVER_EPS0 * (np.asarray(density) - mesh.doping)
           * mesh.node_volume)[free]
    for a, b, coefficient in mesh.faces():
        for here, there in ((a, b), (b, a)):
            if here not in position:
                continue
            row = position[here]
            rows.append(row)
            cols.append(row)
            values.append(-coefficient)
            if there in position:
                rows.append(row)
                cols.append(position[there])
                values.append(coefficient)
            else:
                rhs[row] -= coefficient * mesh.dirichlet[there]
    size = len(free)
    matrix = coo_matrix((values, (rows, cols)), shape=(size, size)).tocsr()
    return free, matrix, rhs


def assemble_and_solve(mesh, density, potential_boundary=None):
    """Solve div(eps grad phi) = e (n - N_D) / eps0 for phi in V.

    `density` holds n per node in 1/nm^3.  `potential_boundary` optionally
    overrides the mesh's Dirichlet values.
    """
    mesh.validate()
    check_length(density, mesh.n_nodes, 'density')
    if potential_boundary is not None:
        mesh = PoissonMesh(mesh.shape, mesh.spacing, mesh.permittivity,
                           mesh.doping, dict(potential_boundary),
                           mesh.site_map)
        mesh.validate()
    free, matrix, rhs = _system(mesh, density)
    phi = np.zeros(mesh.n_nodes)
    for node, value in mesh.dirichlet.items():
        phi[node] = value
    if len(free) == 0:
        return phi
    solution = spsolve(matrix, rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    residual = np.linalg.norm(matrix @ solution - rhs) / scale
    if residual > SOLVE_TOLERANCE and np.linalg.norm(rhs) > 0:
        log.warning('Poisson solve residual {:.3e}', residual)
    phi[free] = solution
    return phi


def gauss_residual(mesh, phi, density):
    """Relative mismatch between enclosed charge and boundary flux.

    Summed over the free nodes the interior fluxes cancel; what is left is
    the flux into the Dirichlet nodes, which must match the total charge.
    """
    charge = 0.0
    for node in range(mesh.n_nodes):
        if node not in mesh.dirichlet:
            charge += (E_OVER_EPS0 * (density[node] - mesh.doping[node])
                       * mesh.node_volume)
    flux = 0.0
    for a, b, coefficient in mesh.faces():
        for here, there in ((a, b), (b, a)):
            if here not in mesh.dirichlet and there in mesh.dirichlet:
                flux += coefficient * (phi[there] - phi[here])
    scale = max(abs(charge), abs(flux))
    if scale == 0:
        return 0.0
    return abs(charge - flux) / scale


@dataclass(eq=False)
class ScfResult:
    converged: bool
    iterations: int
    potential: np.ndarray
    site_potential: np.ndarray
    density: np.ndarray
    # Max |delta phi| of every outer iteration, in V.
    trace: list
    inner: object
    inner_iterations: list

    @property
    def total_iterations(self):
        return self.iterations + sum(self.inner_iterations)


def outer_scf(mesh, inner, *, mixing=0.1, tolerance=1e-5, max_iterations=100,
              initial_density=None, density_override=None):
    """Iterate NEGF and Poisson to charge self-consistency.

    `inner(site_potential)` solves transport at fixed potential and returns
    (site_density, result); `result.iterations`, when present, counts its
    own iterations.  With `density_override` the density is held fixed and
    `inner` is never called.
    """
    if not 0 < mixing <= 1:
        raise ValueError('mixing must be within (0, 1]: {}'.format(mixing))
    n_sites = len(mesh.site_map)
    if density_override is not None:
        initial_density = density_override
    if initial_density is None:
        initial_density = np.zeros(n_sites)
    phi = assemble_and_solve(mesh, node_density(mesh, initial_density))
    trace = []
    counts = []
    best = None
    result = None
    density = np.asarray(initial_density, dtype=float)
    converged = False
    for iteration in range(1, max_iterations + 1):
        site_phi = phi[mesh.site_map]
        if density_override is not None:
            density = np.asarray(density_override, dtype=float)
        else:
            density, result = inner(site_phi)
            counts.append(getattr(result, 'iterations', 1))
        phi_new = assemble_and_solve(mesh, node_density(mesh, density))
        delta = float(np.max(np.abs(phi_new - phi)))
        trace.append(delta)
        log.info('Outer iteration {}: max |dphi| {:.3e} V', iteration, delta)
        if best is None or delta < best[0]:
            best = (delta, phi, density, result)
        phi = (1 - mixing) * phi + mixing * phi_new
        if delta < tolerance:
            converged = True
            best = (delta, phi, density, result)
            break
    if not converged:
        log.warning('Outer loop did not converge in {} iterations '
                    '(best max |dphi| {:.3e} V)', max_iterations, best[0])
    delta, phi, density, result = best
    return ScfResult(
        converged=converged,
        iterations=len(trace),
        potential=phi,
        site_potential=phi[mesh.site_map],
        density=density,
        trace=trace,
        inner=result,
        inner_iterations=counts,
        )
