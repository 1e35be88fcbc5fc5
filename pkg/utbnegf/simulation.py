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

"""Assemble a device from the run configuration and solve one bias point."""

__all__ = [
    'BiasPointResult',
    'DeviceState',
    'IvRecord',
    'Mode',
    'RunSettings',
    'build_state',
    'lead_self_energies',
    'make_grid',
    'operators',
    'run_bias_point',
    ]


import logging
import numpy as np

from collections import namedtuple
from dataclasses import dataclass, replace
from enum import Enum
from time import perf_counter
from utbnegf.device import (
    DeviceSpec, DisorderMode, MaterialParams, RoughnessSpec,
    apply_surface_roughness, assemble_hamiltonian, assign_alloy,
    build_device, contact_blocks)
from utbnegf.ekgrid import build_homogeneous, refine_adaptive
from utbnegf.leads import lead_pair
from utbnegf.observables import (
    current_density, density_of_states, nonuniformity)
from utbnegf.parallel import WorkerPool
from utbnegf.poisson import (
    PoissonSettings, density_from_G, device_mesh, outer_scf)
from utbnegf.scattering import (
    BornProblem, CouplingConstants, ScatteringParams, born_iteration,
    coupling_constants)


log = logging.getLogger('utbnegf')


class Mode(Enum):
    ballistic = 'ballistic'
    scattered = 'scattered'


@dataclass(frozen=True)
class RunSettings:
    """The typed view of a Configuration that the solvers work from."""
    device: DeviceSpec
    materials: MaterialParams
    scattering: ScatteringParams
    scattering_enabled: bool
    acoustic_scale: float
    optical_scale: float
    energy_min: float
    energy_max: float
    points_per_optical: int
    padding_optical: float
    momenta: int
    adaptive_budget: int
    gate_voltages: tuple
    drain_voltage: float
    source_mu: float
    gate_workfunction: float
    poisson: PoissonSettings
    born_mixing: float
    born_tolerance: float
    born_max_iterations: int
    scf_mixing: float
    scf_tolerance: float
    scf_max_iterations: int
    lead_eta: float
    lead_tolerance: float
    lead_max_iterations: int
    device_eta: float
    spin_degeneracy: float
    workers: int
    transport: str
    timeout: float
    samples: int
    base_seed: int

    @classmethod
    def from_config(cls, config):
        device = config.device
        amplitude = config.roughness.amplitude_layers
        roughness = None
        if amplitude > 0:
            roughness = RoughnessSpec(
                amplitude, config.roughness.correlation_length_nm,
                config.roughness.seed)
        spec = DeviceSpec(
            n_slabs=device.n_slabs,
            sites_per_slab=device.sites_per_slab,
            lattice_constant=device.lattice_constant_nm,
            cross_section_area=device.cross_section_area_nm2,
            orbitals_per_site=device.orbitals_per_site,
            alloy_fraction=device.alloy_fraction,
            disorder_mode=DisorderMode(device.disorder_mode),
            rng_seed=device.seed,
            roughness=roughness,
            layers=device.layers,
            )
        materials = config.materials
        phonons = config.scattering
        grid = config.grid
        bias = config.bias
        poisson = config.poisson
        solver = config.solver
        return cls(
            device=spec,
            materials=MaterialParams(
                onsite_si=materials.onsite_si_ev,
                onsite_ge=materials.onsite_ge_ev,
                hopping_si=materials.hopping_si_ev,
                hopping_ge=materials.hopping_ge_ev,
                hopping_sige=materials.hopping_sige_ev,
                orbital_splitting=materials.orbital_splitting_ev,
                interorbital_hopping=materials.interorbital_hopping_ev,
                ),
            scattering=ScatteringParams(
                acoustic_potential=phonons.acoustic_potential_ev,
                sound_velocity=phonons.sound_velocity_nm_per_ps,
                debye_energy=phonons.debye_energy_ev,
                optical_energy=phonons.optical_energy_ev,
                optical_potential=phonons.optical_potential_ev_per_nm,
                mass_density=phonons.mass_density_amu_per_nm3,
                area=device.cross_section_area_nm2,
                temperature=phonons.temperature_k,
                ),
            scattering_enabled=phonons.enabled,
            acoustic_scale=phonons.acoustic_scale,
            optical_scale=phonons.optical_scale,
            energy_min=grid.energy_min_ev,
            energy_max=grid.energy_max_ev,
            points_per_optical=grid.points_per_optical,
            padding_optical=grid.padding_optical,
            momenta=grid.momenta,
            adaptive_budget=grid.adaptive_budget,
            gate_voltages=tuple(bias.gate_voltages_v),
            drain_voltage=bias.drain_voltage_v,
            source_mu=bias.source_mu_ev,
            gate_workfunction=bias.gate_workfunction_v,
            poisson=PoissonSettings(
                oxide_layers=poisson.oxide_layers,
                oxide_permittivity=poisson.oxide_permittivity,
                body_permittivity=poisson.body_permittivity,
                donor_density=poisson.donor_density_per_nm3,
                gate_start_slab=poisson.gate_start_slab,
                gate_end_slab=poisson.gate_end_slab,
                ),
            born_mixing=solver.born_mixing,
            born_tolerance=solver.born_tolerance,
            born_max_iterations=solver.born_max_iterations,
            scf_mixing=solver.scf_mixing,
            scf_tolerance=solver.scf_tolerance_v,
            scf_max_iterations=solver.scf_max_iterations,
            lead_eta=solver.lead_eta_ev,
            lead_tolerance=solver.lead_tolerance,
            lead_max_iterations=solver.lead_max_iterations,
            device_eta=solver.device_eta_ev,
            spin_degeneracy=solver.spin_degeneracy,
            workers=config.parallel.workers,
            transport=config.parallel.transport,
            timeout=config.parallel.timeout,
            samples=config.ensemble.samples,
            base_seed=config.ensemble.base_seed,
            )

    def with_seed(self, seed):
        """The same run with the alloy (and roughness) drawn from `seed`."""
        roughness = self.device.roughness
        if roughness is not None:
            roughness = replace(roughness, seed=seed)
        device = replace(self.device, rng_seed=seed, roughness=roughness)
        return replace(self, device=device)

    def couplings(self, mode):
        """K_ac and K_op of a mode; zero for ballistic runs."""
        if mode is Mode.ballistic or not self.scattering_enabled:
            return CouplingConstants(0.0, 0.0)
        constants = coupling_constants(
            self.scattering, self.device.lattice_constant,
            self.device.transverse_period)
        return constants.scaled(self.acoustic_scale, self.optical_scale)


@dataclass(frozen=True, eq=False)
class DeviceState:
    settings: RunSettings
    graph: object
    assignment: object


def build_state(settings):
    """Build the device graph, its roughness and its alloy."""
    spec = settings.device
    graph = build_device(spec)
    graph = apply_surface_roughness(graph, spec.roughness)
    assignment = assign_alloy(graph, settings.materials, spec.alloy_fraction,
                              spec.disorder_mode, spec.rng_seed)
    log.debug('Device: {} slabs, block ranks {}', spec.n_slabs,
              graph.ranks())
    return DeviceState(settings, graph, assignment)


def make_grid(settings, indicator_grid=None, indicator=None):
    """The homogeneous grid, padded by whole optical energies at both ends.

    With an adaptive budget and an indicator sampled on `indicator_grid`,
    the grid is refined where the indicator is large.
    """
    optical = settings.scattering.optical_energy
    padding = settings.padding_optical * optical
    grid = build_homogeneous(
        settings.energy_min - padding, settings.energy_max + padding,
        optical, settings.points_per_optical, settings.momenta,
        settings.device.transverse_period)
    if settings.adaptive_budget > 0 and indicator is not None:
        grid = refine_adaptive(indicator_grid or grid, indicator,
                               settings.adaptive_budget)
    window = 2 * settings.scattering.debye_energy
    spacing = float(np.min(np.diff(grid.energies), initial=np.inf))
    if settings.scattering_enabled and spacing < window:
        log.warning('Energy spacing {:.4f} eV is below the Debye window '
                    '{:.4f} eV; acoustic scattering is taken at E only',
                    spacing, window)
    return grid


def lead_self_energies(state, grid, drain_voltage):
    """Per tuple, the (left, right) lead self-energies at one bias.

    The source sits at mu_s and zero potential; the drain at mu_s - V_d with
    its bands shifted down by V_d.
    """
    settings = state.settings
    mu = settings.source_mu
    temperature = settings.scattering.temperature
    leads = []
    pairs = []
    for k in grid.momenta:
        h00, h01 = contact_blocks(settings.device, settings.materials, k)
        pairs.append(lead_pair(h00, h01, mu, mu - drain_voltage,
                               0.0, drain_voltage))
    for index in range(grid.n_tuples):
        e, k = grid.split(index)
        left, right = pairs[k]
        options = dict(eta=settings.lead_eta, tol=settings.lead_tolerance,
                       max_iterations=settings.lead_max_iterations)
        energy = grid.energies[e]
        momentum = grid.momenta[k]
        leads.append((
            left.self_energy(energy, momentum, temperature, **options),
            right.self_energy(energy, momentum, temperature, **options)))
    return leads


def operators(state, grid, site_potential):
    return [assemble_hamiltonian(state.graph, state.assignment, k,
                                 site_potential)
            for k in grid.momenta]


# One row of the IV table.
IvRecord = namedtuple(
    'IvRecord',
    'vg vd sample_seed mode current outer_iters inner_iters_total '
    'max_current_nonuniformity status wall_s')


@dataclass(eq=False)
class BiasPointResult:
    record: IvRecord
    scf: object
    born: object
    interfaces: np.ndarray
    spectrum: np.ndarray
    dos: np.ndarray
    grid: object

    @property
    def converged(self):
        return self.record.status == 'ok'


def run_bias_point(state, grid, gate_voltage, drain_voltage, mode, *,
                   pool=None, leads=None, sample_seed=None, profile=True,
                   density_override=None):
    """Solve one bias point to charge self-consistency.

    `leads` may carry precomputed lead self-energies for this drain
    voltage; they do not depend on the gate.
    """
    started = perf_counter()
    settings = state.settings
    if pool is None:
        pool = WorkerPool(settings.workers, settings.transport,
                          timeout=settings.timeout)
    if leads is None:
        leads = lead_self_energies(state, grid, drain_voltage)
    couplings = settings.couplings(mode)
    n0 = settings.scattering.n0
    mesh = device_mesh(state.graph, settings.poisson,
                       gate_voltage - settings.gate_workfunction,
                       source_potential=0.0, drain_potential=drain_voltage)
    previous = []

    def inner(site_potential):
        problem = BornProblem(operators(state, grid, site_potential), leads,
                              settings.device_eta)
        born = born_iteration(
            problem, grid, couplings, n0,
            mixing=settings.born_mixing,
            tolerance=settings.born_tolerance,
            max_iterations=settings.born_max_iterations,
            pool=pool,
            initial=previous[-1].sigma if previous else None,
            profile=profile)
        previous.append(born)
        density = density_from_G(
            [values.occupation for values in born.observables], grid,
            settings.device.cross_section_area,
            settings.device.orbitals_per_site, settings.spin_degeneracy)
        return density, born

    scf = outer_scf(mesh, inner,
                    mixing=settings.scf_mixing,
                    tolerance=settings.scf_tolerance,
                    max_iterations=settings.scf_max_iterations,
                    density_override=density_override)
    born = scf.inner
    if born is None:
        # The density was held fixed; solve transport once in that field.
        density, born = inner(scf.site_potential)
    currents = current_density(
        [values.bond_currents for values in born.observables], grid,
        settings.spin_degeneracy)
    dos = density_of_states([values.dos for values in born.observables],
                            grid)
    converged = scf.converged and born.converged
    record = IvRecord(
        vg=gate_voltage,
        vd=drain_voltage,
        sample_seed=sample_seed,
        mode=mode.value,
        current=float(np.mean(currents.interfaces)),
        outer_iters=scf.iterations,
        inner_iters_total=sum(scf.inner_iterations) or born.iterations,
        max_current_nonuniformity=nonuniformity(currents.interfaces),
        status='ok' if converged else 'unconverged',
        wall_s=perf_counter() - started,
        )
    log.info('Bias point Vg={} Vd={} {}: I={:.6e} A/nm ({})',
             gate_voltage, drain_voltage, mode.value, record.current,
             record.status)
    return BiasPointResult(
        record=record,
        scf=scf,
        born=born,
        interfaces=currents.interfaces,
        spectrum=currents.spectrum,
        dos=dos,
        grid=grid,
        )
