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

"""Phonon self-energies and the self-consistent Born iteration.

Acoustic phonons scatter elastically: their self-energy at E integrates the
diagonals at E over all momenta.  Optical phonons of energy E_op connect E
to E +/- E_op.  Neither depends on the momentum it is evaluated at, so each
is computed once per energy row and shared by all momenta of that row.
"""

__all__ = [
    'BornProblem',
    'BornResult',
    'CouplingConstants',
    'PhononSelfEnergy',
    'ScatteringParams',
    'SelfEnergySet',
    'TagMismatchError',
    'acoustic_self_energy',
    'assemble_total',
    'born_iteration',
    'bose_occupation',
    'coupling_constants',
    'optical_lesser_self_energy',
    'optical_retarded_self_energy',
    'phonon_row',
    'solve_tuple',
    ]


import math
import logging
import numpy as np

from dataclasses import dataclass
from time import perf_counter
from utbnegf.ekgrid import weighted_sum
from utbnegf.helpers import check_length
from utbnegf.negf import OperationCounter, solve_lesser, solve_retarded
from utbnegf.observables import tuple_observables
from utbnegf.parallel import (
    WorkerPool, allreduce_max, build_comm_schedule, estimate_cost,
    execute_round, partition_tuples)
from utbnegf.profiler import Profiler
from utbnegf.transport import PayloadKind
from utbnegf.units import AMU_TO_EV_PS2_PER_NM2, HBAR_EV_PS, thermal_energy


log = logging.getLogger('utbnegf')
worker_log = logging.getLogger('utbnegf.worker')

# Floor of the relative Born residual, in eV.
RESIDUAL_FLOOR = 1e-12


class TagMismatchError(ValueError):
    """Self-energy parts from different (E, k) tuples were combined."""

    def __init__(self, expected, got):
        super().__init__(expected, got)
        self.expected = expected
        self.got = got

    def __str__(self):
        return 'self-energy for {0.got} combined with {0.expected}'.format(
            self)


def bose_occupation(energy, temperature):
    """n0 = 1 / (exp(E / k_B T) - 1)."""
    if energy <= 0:
        raise ValueError('phonon energy must be positive: {}'.format(energy))
    if temperature <= 0:
        raise ValueError('temperature must be positive: {}'.format(
            temperature))
    return 1.0 / math.expm1(energy / thermal_energy(temperature))


@dataclass(frozen=True)
class ScatteringParams:
    acoustic_potential: float           # D, eV
    sound_velocity: float               # v, nm/ps
    debye_energy: float                 # hbar omega_D, eV
    optical_energy: float               # E_op = hbar omega_0, eV
    optical_potential: float            # epsilon, eV/nm
    mass_density: float                 # rho, amu/nm^3
    area: float                         # A, nm^2
    temperature: float                  # T, K

    @property
    def n0(self):
        return bose_occupation(self.optical_energy, self.temperature)

    def problems(self):
        problems = []
        for name in ('sound_velocity', 'debye_energy', 'optical_energy',
                     'mass_density', 'area', 'temperature'):
            if getattr(self, name) <= 0:
                problems.append('{} must be positive: {}'.format(
                    name, getattr(self, name)))
        for name in ('acoustic_potential', 'optical_potential'):
            if getattr(self, name) < 0:
                problems.append('{} must not be negative: {}'.format(
                    name, getattr(self, name)))
        return problems


@dataclass(frozen=True)
class CouplingConstants:
    acoustic: float                     # K_ac, eV nm
    optical: float                      # K_op, eV^2 nm
    debye_window: float = 0.0           # 2 hbar omega_D, eV

    @property
    def ballistic(self):
        return self.acoustic == 0 and self.optical == 0

    @property
    def elastic_acoustic(self):
        """K_ac times the Debye window integral of G with G held at E."""
        return self.acoustic * self.debye_window

    def scaled(self, acoustic=1.0, optical=1.0):
        return CouplingConstants(self.acoustic * acoustic,
                                 self.optical * optical,
                                 self.debye_window)


def coupling_constants(params, lattice_constant, period):
    """Reduce the phonon parameters to K_ac and K_op.

    Acoustic scattering integrates G over the window [E - hbar omega_D,
    E + hbar omega_D]; optical scattering is Sigma = K_op * sum_k' w_k'
    diag G at E +/- E_op.  The momentum weights integrate over the
    transverse zone of length 2 pi / W, and one site has volume A a:

        K_ac = D^2 k_B T / (2 hbar omega_D rho v^2 A) * W / (2 pi a)
        K_op = hbar^2 eps^2 / (2 rho E_op A a) * W / (2 pi)

    The window is taken narrower than the energy spacing, so the acoustic
    integral is 2 hbar omega_D diag G(E) and Sigma_ac = K_ac * 2 hbar
    omega_D * sum_k' w_k' diag G.  The model assumes equipartition, which
    needs k_B T above the Debye energy.
    """
    problems = params.problems()
    if len(problems) > 0:
        raise ValueError('; '.join(problems))
    if lattice_constant <= 0 or period <= 0:
        raise ValueError('lattice constant and period must be positive')
    kt = thermal_energy(params.temperature)
    if kt < params.debye_energy:
        log.warning('k_B T = {:.4f} eV is below the Debye energy {:.4f} eV; '
                    'the elastic acoustic model overestimates scattering',
                    kt, params.debye_energy)
    rho = params.mass_density * AMU_TO_EV_PS2_PER_NM2
    window = 2 * params.debye_energy
    zone = period / (2 * math.pi)
    acoustic = (params.acoustic_potential ** 2 * kt
                / (window * rho * params.sound_velocity ** 2 * params.area)
                * zone / lattice_constant)
    optical = (HBAR_EV_PS ** 2 * params.optical_potential ** 2
               / (2 * rho * params.optical_energy
                  * params.area * lattice_constant)
               * zone)
    constants = CouplingConstants(acoustic, optical, window)
    log.info('Coupling constants K_ac={:.6e} eV nm K_op={:.6e} eV^2 nm, '
             'Debye window {:.4f} eV, n0={:.6f}',
             acoustic, optical, window, params.n0)
    return constants


def acoustic_self_energy(g_diags, k_weights, coupling):
    """coupling * sum_k' w_k' diag G(k', E), for either G^R or G^<.

    With the Debye window integrated at E, `coupling` is
    `CouplingConstants.elastic_acoustic`.
    """
    check_length(g_diags, len(k_weights), 'momentum diagonals')
    return coupling * weighted_sum(k_weights, g_diags)


def _momentum_sum(diags, k_weights):
    if diags is None:
        return None
    check_length(diags, len(k_weights), 'momentum diagonals')
    return weighted_sum(k_weights, diags)


def _optical_lesser(coupling, n0, lesser_plus, lesser_minus, zero):
    total = zero
    if lesser_plus is not None:
        total = total + (1 + n0) * lesser_plus
    if lesser_minus is not None:
        total = total + n0 * lesser_minus
    return coupling * total


def _optical_retarded(coupling, n0, retarded_plus, retarded_minus,
                      lesser_plus, lesser_minus, zero):
    # The principal value part is dropped.
    total = zero
    if retarded_minus is not None:
        total = total + (1 + n0) * retarded_minus + 0.5 * lesser_minus
    if retarded_plus is not None:
        total = total + n0 * retarded_plus - 0.5 * lesser_plus
    return coupling * total


def optical_lesser_self_energy(lesser_plus, lesser_minus, k_weights,
                               coupling, n0):
    """Sigma^<_op(E) = K_op sum_k' w_k' [(1 + n0) diag G^<(k', E + E_op)
                                        + n0 diag G^<(k', E - E_op)]

    Either side is None where E +/- E_op falls outside the grid; it then
    contributes nothing.
    """
    plus = _momentum_sum(lesser_plus, k_weights)
    minus = _momentum_sum(lesser_minus, k_weights)
    if plus is None and minus is None:
        return 0.0
    zero = 0.0 * (plus if plus is not None else minus)
    return _optical_lesser(coupling, n0, plus, minus, zero)


def optical_retarded_self_energy(retarded_plus, retarded_minus, lesser_plus,
                                 lesser_minus, k_weights, coupling, n0):
    """Sigma^R_op(E) = K_op sum_k' w_k' [(1 + n0) diag G^R(k', E - E_op)
                                        + n0 diag G^R(k', E + E_op)
                                        + diag G^<(k', E - E_op) / 2
                                        - diag G^<(k', E + E_op) / 2]
    """
    if (retarded_plus is None) != (lesser_plus is None) or (
            (retarded_minus is None) != (lesser_minus is None)):
        raise ValueError('retarded and lesser sides must both be present')
    r_plus = _momentum_sum(retarded_plus, k_weights)
    r_minus = _momentum_sum(retarded_minus, k_weights)
    l_plus = _momentum_sum(lesser_plus, k_weights)
    l_minus = _momentum_sum(lesser_minus, k_weights)
    if r_plus is None and r_minus is None:
        return 0.0
    zero = 0.0 * (r_plus if r_plus is not None else r_minus)
    return _optical_retarded(
        coupling, n0, r_plus, r_minus, l_plus, l_minus, zero)


@dataclass(frozen=True, eq=False)
class PhononSelfEnergy:
    """The phonon diagonals at one energy row, per orbital in matrix order.
    """
    energy_index: int
    sigma_R: np.ndarray
    sigma_lesser: np.ndarray


def phonon_row(energy_index, sums, grid, couplings, n0):
    """Both phonon self-energies at one energy row.

    `sums` maps energy rows to their RowSums: sum_k' w_k' diag G^R and
    diag G^< in canonical momentum order.  Shifted rows of an interpolated
    grid are the linear blend of the two neighboring rows.
    """
    here = sums[energy_index]
    zero = 0.0 * here.retarded
    retarded = {row: value.retarded for row, value in sums.items()}
    lesser = {row: value.lesser for row, value in sums.items()}
    plus = grid.shift_plus[energy_index]
    minus = grid.shift_minus[energy_index]
    r_plus = l_plus = r_minus = l_minus = None
    if plus is not None:
        r_plus, l_plus = plus.apply(retarded), plus.apply(lesser)
    if minus is not None:
        r_minus, l_minus = minus.apply(retarded), minus.apply(lesser)
    sigma_R = (couplings.elastic_acoustic * here.retarded
               + _optical_retarded(couplings.optical, n0, r_plus, r_minus,
                                   l_plus, l_minus, zero))
    sigma_lesser = (couplings.elastic_acoustic * here.lesser
                    + _optical_lesser(couplings.optical, n0, l_plus, l_minus,
                                      zero))
    return PhononSelfEnergy(energy_index, sigma_R, sigma_lesser)


@dataclass(eq=False)
class SelfEnergySet:
    """The phonon self-energies of every energy row."""
    rows: list

    @classmethod
    def zeros(cls, n_energies, size):
        return cls([PhononSelfEnergy(e, np.zeros(size, dtype=complex),
                                     np.zeros(size, dtype=complex))
                    for e in range(n_energies)])

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, energy_index):
        return self.rows[energy_index]

    def is_dissipative(self, tolerance=1e-12):
        """Im Sigma^R <= 0 and Im Sigma^< >= 0 entrywise, within tolerance.
        """
        return all(
            np.all(row.sigma_R.imag <= tolerance)
            and np.all(row.sigma_lesser.imag >= -tolerance)
            for row in self.rows)

    def max_lesser_real(self):
        """Largest |Re Sigma^<|; zero up to rounding for a valid set."""
        return max(float(np.max(np.abs(row.sigma_lesser.real)))
                   for row in self.rows)


def _split_blocks(diagonal, ranks):
    blocks = []
    offset = 0
    for rank in ranks:
        blocks.append(np.diag(diagonal[offset:offset + rank]))
        offset += rank
    return blocks


def assemble_total(leads, phonon, ranks, energy_index=None, momentum=None):
    """Combine lead and phonon self-energies into per-slab blocks.

    `leads` is the (left, right) LeadSelfEnergy pair of one tuple, or None
    for a closed system; `phonon` is a PhononSelfEnergy or None for
    ballistic transport.  Returns the Sigma^R and Sigma^< block lists.
    """
    size = sum(ranks)
    if leads is not None:
        left, right = leads
        if (left.energy, left.momentum) != (right.energy, right.momentum):
            raise TagMismatchError((left.energy, left.momentum),
                                   (right.energy, right.momentum))
        if momentum is not None and left.momentum != momentum:
            raise TagMismatchError(momentum, left.momentum)
    if phonon is not None:
        if energy_index is not None and phonon.energy_index != energy_index:
            raise TagMismatchError(energy_index, phonon.energy_index)
        check_length(phonon.sigma_R, size, 'phonon diagonal')
        sigma_R = _split_blocks(phonon.sigma_R, ranks)
        sigma_lesser = _split_blocks(phonon.sigma_lesser, ranks)
    else:
        sigma_R = [np.zeros((rank, rank), dtype=complex) for rank in ranks]
        sigma_lesser = [np.zeros((rank, rank), dtype=complex)
                        for rank in ranks]
    if leads is not None:
        sigma_R[0] = sigma_R[0] + left.sigma_R
        sigma_lesser[0] = sigma_lesser[0] + left.sigma_lesser
        sigma_R[-1] = sigma_R[-1] + right.sigma_R
        sigma_lesser[-1] = sigma_lesser[-1] + right.sigma_lesser
    return sigma_R, sigma_lesser


@dataclass(frozen=True, eq=False)
class BornProblem:
    """Everything a worker needs to solve the tuples of one bias point.

    `operators[k]` is H(k) including the electrostatic potential and
    `leads[t]` the (left, right) LeadSelfEnergy pair of tuple t.
    """
    operators: list
    leads: list
    eta: float = 0.0

    @property
    def ranks(self):
        return self.operators[0].ranks

    @property
    def size(self):
        return sum(self.ranks)


def solve_tuple(problem, grid, tuple_index, phonon, counter=None):
    """Solve G^R and G^< of one tuple under the given phonon self-energy."""
    e, k = grid.split(tuple_index)
    operator = problem.operators[k]
    sigma_R, sigma_lesser = assemble_total(
        problem.leads[tuple_index], phonon, operator.ranks, e,
        grid.momenta[k])
    energy = grid.energies[e]
    if problem.eta > 0:
        energy = energy + 1j * problem.eta
    retarded = solve_retarded(operator, sigma_R, energy, grid.momenta[k],
                              counter)
    return solve_lesser(retarded, sigma_lesser, counter)


@dataclass(frozen=True, eq=False)
class _BornJob:
    problem: BornProblem
    grid: object
    partition: object
    schedule: object
    couplings: CouplingConstants
    n0: float
    mixing: float
    tolerance: float
    max_iterations: int
    initial: SelfEnergySet
    profile: bool


@dataclass(eq=False)
class _WorkerResult:
    rank: int
    converged: bool
    iterations: int
    residuals: list
    best_iteration: int
    observables: dict
    sigma: dict
    multiplies: int
    busy_seconds: float
    profile: object


def _residual(old, new):
    worst = 0.0
    for before, after in ((old.sigma_R, new.sigma_R),
                          (old.sigma_lesser, new.sigma_lesser)):
        change = np.abs(after - before) / (np.abs(after) + RESIDUAL_FLOOR)
        if change.size > 0:
            worst = max(worst, float(np.max(change)))
    return worst


def _mix(old, new, mixing):
    if mixing == 1:
        return new
    return PhononSelfEnergy(
        old.energy_index,
        (1 - mixing) * old.sigma_R + mixing * new.sigma_R,
        (1 - mixing) * old.sigma_lesser + mixing * new.sigma_lesser)


def _born_worker(rank, endpoint, job):
    grid = job.grid
    problem = job.problem
    owned = job.partition.tuples_of(rank)
    my_rows = sorted({grid.split(index)[0] for index in owned})
    sigma = {e: job.initial[e] for e in my_rows}
    profiler = Profiler(rank, enabled=job.profile)
    counter = OperationCounter()
    weights = grid.momentum_weights
    residuals = []
    best = None
    busy = 0.0
    converged = False
    worker_log.debug('Worker {} owns {} tuples in {} rows',
                     rank, len(owned), len(my_rows))
    profiler.tic('born')
    for iteration in range(1, job.max_iterations + 1):
        profiler.tic('iteration')
        terms = {}
        observables = {}
        profiler.tic('solve')
        started = perf_counter()
        for index in owned:
            e, k = grid.split(index)
            greens = solve_tuple(problem, grid, index, sigma[e], counter)
            observables[index] = tuple_observables(
                problem.operators[k], greens)
            if not job.couplings.ballistic:
                terms[index] = {
                    PayloadKind.gr_diag: weights[k] * greens.diagonal('R'),
                    PayloadKind.gl_diag: weights[k] * greens.diagonal('L'),
                    }
        busy += perf_counter() - started
        profiler.toc('solve')
        if job.couplings.ballistic:
            new = {e: sigma[e] for e in my_rows}
            local_residual = 0.0
        else:
            profiler.tic('exchange')
            sums = execute_round(job.schedule, rank, terms, endpoint, grid,
                                 job.partition)
            profiler.toc('exchange')
            profiler.tic('self-energy')
            new = {e: phonon_row(e, sums, grid, job.couplings, job.n0)
                   for e in my_rows}
            local_residual = max(
                [_residual(sigma[e], new[e]) for e in my_rows], default=0.0)
            profiler.toc('self-energy')
        profiler.tic('allreduce')
        residual = allreduce_max(endpoint, rank, job.partition.n_workers,
                                 local_residual, iteration)
        profiler.toc('allreduce')
        residuals.append(residual)
        if best is None or residual < best[0]:
            best = (residual, iteration, observables, dict(sigma))
        profiler.toc('iteration')
        if residual < job.tolerance:
            converged = True
            break
        sigma = {e: _mix(sigma[e], new[e], job.mixing) for e in my_rows}
    profiler.toc('born')
    residual, best_iteration, observables, best_sigma = best
    return _WorkerResult(
        rank=rank,
        converged=converged,
        iterations=len(residuals),
        residuals=residuals,
        best_iteration=best_iteration,
        observables=observables,
        sigma=best_sigma,
        multiplies=counter.multiplies,
        busy_seconds=busy,
        profile=profiler.finish(),
        )


@dataclass(eq=False)
class BornResult:
    converged: bool
    iterations: int
    residuals: list
    # Per tuple, in tuple order, the TupleObservables of the returned
    # iterate and the phonon self-energies it was solved with.
    observables: list
    sigma: SelfEnergySet
    multiplies: int
    busy_seconds: list
    profiles: list
    imbalance: float

    @property
    def final_residual(self):
        return self.residuals[-1]


def born_iteration(problem, grid, couplings, n0, *, mixing=1.0,
                   tolerance=1e-4, max_iterations=100, pool=None,
                   initial=None, profile=True):
    """Iterate Green's functions and phonon self-energies to a fixed point.

    Every iteration solves all tuples with the current self-energies,
    recomputes the phonon self-energies from the result and mixes them in
    with weight `mixing`.  The loop stops once the largest relative change
    of any self-energy entry drops below `tolerance`.  Without convergence
    the iterate with the smallest residual is returned with
    `converged=False`.
    """
    if not 0 < mixing <= 1:
        raise ValueError('mixing must be within (0, 1]: {}'.format(mixing))
    if tolerance <= 0:
        raise ValueError('tolerance must be positive: {}'.format(tolerance))
    if max_iterations < 1:
        raise ValueError('need at least one iteration: {}'.format(
            max_iterations))
    check_length(problem.operators, grid.n_momenta, 'momentum operators')
    check_length(problem.leads, grid.n_tuples, 'lead self-energies')
    if pool is None:
        pool = WorkerPool(1)
    if initial is None:
        initial = SelfEnergySet.zeros(grid.n_energies, problem.size)
    costs = [estimate_cost(index, grid, problem.ranks)
             for index in range(grid.n_tuples)]
    partition = partition_tuples(grid, costs, pool.n_workers)
    schedule = build_comm_schedule(partition, grid)
    log.debug('Born schedule: {} tasks over {} workers',
              len(schedule), pool.n_workers)
    job = _BornJob(problem, grid, partition, schedule, couplings, n0,
                   mixing, tolerance, max_iterations, initial, profile)
    results = pool.run(_born_worker, job)
    lead = results[0]
    observables = [None] * grid.n_tuples
    rows = list(initial.rows)
    for result in reversed(results):
        for index, values in result.observables.items():
            observables[index] = values
        for e, row in result.sigma.items():
            rows[e] = row
    for n, residual in enumerate(lead.residuals, start=1):
        log.info('Born iteration {}: residual {:.3e}', n, residual)
    if not lead.converged:
        log.warning('Born iteration did not converge in {} iterations; '
                    'returning iteration {} (residual {:.3e})',
                    lead.iterations, lead.best_iteration,
                    min(lead.residuals))
    busy = [result.busy_seconds for result in results]
    mean = sum(busy) / len(busy)
    return BornResult(
        converged=lead.converged,
        iterations=lead.iterations,
        residuals=list(lead.residuals),
        observables=observables,
        sigma=SelfEnergySet(rows),
        multiplies=sum(result.multiplies for result in results),
        busy_seconds=busy,
        profiles=[result.profile for result in results],
        imbalance=max(busy) / mean - 1 if mean > 0 else 0.0,
        )
