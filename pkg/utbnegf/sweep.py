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

"""Drive IV sweeps, disorder ensembles and the scaling benchmark."""

__all__ = [
    'CSV_COLUMNS',
    'CSV_SCHEMA',
    'EnsembleStats',
    'Sweep',
    'adaptive_twin',
    'ensemble_seeds',
    'ensemble_statistics',
    'run_bench',
    'time_born',
    'write_ensemble',
    'write_metadata',
    ]


import os
import csv
import logging
import numpy as np

from collections import deque, namedtuple
from configparser import ConfigParser
from contextlib import ExitStack
from dataclasses import replace
from functools import partial
from pkg_resources import resource_string as resource_bytes
from time import perf_counter
from utbnegf.device import InvalidDeviceError, InvalidRoughnessError
from utbnegf.ekgrid import GridError, refine_adaptive
from utbnegf.helpers import atomic, makedirs
from utbnegf.leads import LeadConvergenceError
from utbnegf.negf import SingularBlockError
from utbnegf.observables import current_density
from utbnegf.parallel import WorkerPool
from utbnegf.poisson import MeshError
from utbnegf.profiler import (
    fit_affine, measure_series_memory, merge_profiles, write_profile)
from utbnegf.scattering import (
    BornProblem, SelfEnergySet, born_iteration, solve_tuple)
from utbnegf.simulation import (
    IvRecord, Mode, build_state, lead_self_energies, make_grid, operators,
    run_bias_point)


log = logging.getLogger('utbnegf')

CSV_SCHEMA = 1
CSV_COLUMNS = (
    'vg', 'vd', 'sample_seed', 'mode', 'current_A_per_nm', 'outer_iters',
    'inner_iters_total', 'max_current_nonuniformity', 'status', 'wall_s',
    )
MODES = (Mode.ballistic, Mode.scattered)

# Failures of a single bias point that are recorded in its row.  Anything
# else, transport failures included, ends the sweep.
POINT_ERRORS = (
    SingularBlockError, LeadConvergenceError, MeshError, GridError,
    InvalidDeviceError, InvalidRoughnessError, np.linalg.LinAlgError,
    )


def ensemble_seeds(base_seed, samples):
    """Distinct alloy seeds derived from one base seed."""
    sequence = np.random.SeedSequence(base_seed)
    return [int(seed) for seed in sequence.generate_state(samples)]


def _version():
    return resource_bytes('utbnegf', 'version.txt').decode('utf-8').strip()


def _number(value):
    return '{:.10g}'.format(value)


def write_metadata(path, settings, grid, couplings, workers, transport):
    """Write run.ini: what was run, on which grid, with which constants."""
    parser = ConfigParser(interpolation=None)
    parser['run'] = dict(
        version=_version(),
        csv_schema=str(CSV_SCHEMA),
        workers=str(workers),
        transport=transport,
        )
    parser['grid'] = dict(
        mode=grid.mode.value,
        energies=str(grid.n_energies),
        momenta=str(grid.n_momenta),
        tuples=str(grid.n_tuples),
        energy_min_ev=_number(grid.energies[0]),
        energy_max_ev=_number(grid.energies[-1]),
        interpolated_stencil='yes' if grid.interpolated else 'no',
        )
    parser['couplings'] = dict(
        acoustic_ev_nm=_number(couplings.acoustic),
        debye_window_ev=_number(couplings.debye_window),
        optical_ev2_nm=_number(couplings.optical),
        bose_occupation=_number(settings.scattering.n0),
        )
    with atomic(path) as fp:
        parser.write(fp)


class Sweep:
    """A step-driven IV sweep.

    For every sample and gate voltage both a ballistic and a scattered point
    are solved.  Each finished point is appended to iv.csv and flushed, so an
    interrupted sweep keeps every finished row.
    """

    def __init__(self, settings, out_dir, *, gate_voltages=None,
                 seeds=None, timings=True, profile=True, pool=None):
        # Variables which manage state transitions.
        self._next = deque()
        self._debug_step = 1
        self._resources = ExitStack()
        # Inputs.
        self.settings = settings
        self.out_dir = str(out_dir)
        self.gate_voltages = (settings.gate_voltages if gate_voltages is None
                              else tuple(gate_voltages))
        self.seeds = [None] if seeds is None else list(seeds)
        self.timings = timings
        self.profile = profile
        self.pool = pool or WorkerPool(
            settings.workers, settings.transport, timeout=settings.timeout)
        # Things we learn along the way.
        self.grid = None
        self.leads = None
        self.records = []
        self.results = {}
        self.profiles = []
        self._csv = None
        self._csv_file = None
        self._next.append(self._prepare)

    def __iter__(self):
        return self

    def _pop(self):
        step = self._next.popleft()
        # step could be a partial or a method.
        name = getattr(step, 'func', step).__name__
        log.debug('-> [{:2}] {}', self._debug_step, name)
        return step, name

    def __next__(self):
        try:
            step, name = self._pop()
            step()
            self._debug_step += 1
        except IndexError:
            # Do not chain the exception.
            raise StopIteration from None
        except:
            log.exception('uncaught exception in sweep')
            self._resources.close()
            raise

    def run(self):
        for step in self:
            pass
        return self.records

    def run_thru(self, stop_after):
        """Run the sweep through the named step (sans leading underscore)."""
        while True:
            try:
                step, name = self._pop()
            except IndexError:
                break
            step()
            self._debug_step += 1
            if name[1:] == stop_after:
                break

    def run_until(self, stop_before):
        """Run the sweep up to, but not including, the named step."""
        while True:
            try:
                step, name = self._pop()
            except IndexError:
                break
            if name[1:] == stop_before:
                self._next.appendleft(step)
                break
            step()
            self._debug_step += 1

    @property
    def unconverged(self):
        return [record for record in self.records if record.status != 'ok']

    def _prepare(self):
        makedirs(self.out_dir)
        self.grid = make_grid(self.settings)
        self._csv_file = self._resources.enter_context(open(
            os.path.join(self.out_dir, 'iv.csv'), 'w', encoding='utf-8',
            newline=''))
        self._csv_file.write('# utb-negf iv schema {}: {}\n'.format(
            CSV_SCHEMA, ','.join(CSV_COLUMNS)))
        self._csv = csv.writer(self._csv_file, lineterminator='\n')
        self._csv.writerow(CSV_COLUMNS)
        self._csv_file.flush()
        if len(self.gate_voltages) == 0:
            log.info('No gate voltages; nothing to sweep')
            self._next.append(self._finish)
            return
        if self.settings.adaptive_budget > 0:
            self._next.append(self._refine_grid)
        self._next.append(self._leads)

    def _refine_grid(self):
        """Refine where the ballistic current spectrum of the first point is
        largest."""
        state = build_state(self.settings.with_seed(self.seeds[0])
                            if self.seeds[0] is not None else self.settings)
        result = run_bias_point(
            state, self.grid, self.gate_voltages[0],
            self.settings.drain_voltage, Mode.ballistic, pool=self.pool,
            profile=False)
        indicator = np.mean(np.abs(result.spectrum), axis=1)
        self.grid = make_grid(self.settings, self.grid, indicator)
        log.info('Adaptive grid: {} energies, interpolated stencil: {}',
                 self.grid.n_energies, self.grid.interpolated)

    def _leads(self):
        state = build_state(self.settings)
        self.leads = lead_self_energies(
            state, self.grid, self.settings.drain_voltage)
        for seed in self.seeds:
            self._next.append(partial(self._sample, seed))
        self._next.append(self._finish)

    def _sample(self, seed):
        settings = (self.settings if seed is None
                    else self.settings.with_seed(seed))
        try:
            state = build_state(settings)
        except POINT_ERRORS as error:
            log.error('Sample {} cannot be built: {}', seed, error)
            for gate_voltage in self.gate_voltages:
                for mode in MODES:
                    self._write_failure(gate_voltage, seed, mode, error)
            return
        # Run this sample's points before any later sample.
        steps = [partial(self._point, state, seed, gate_voltage, mode)
                 for gate_voltage in self.gate_voltages
                 for mode in MODES]
        self._next.extendleft(reversed(steps))

    def _point(self, state, seed, gate_voltage, mode):
        try:
            result = run_bias_point(
                state, self.grid, gate_voltage, self.settings.drain_voltage,
                mode, pool=self.pool, leads=self.leads, sample_seed=seed,
                profile=self.profile)
        except POINT_ERRORS as error:
            log.error('Bias point Vg={} {} failed: {}',
                      gate_voltage, mode.value, error)
            self._write_failure(gate_voltage, seed, mode, error)
            return
        record = result.record
        if not self.timings:
            record = record._replace(wall_s=0)
        self.records.append(record)
        self.results[(seed, gate_voltage, mode)] = result
        if self.profile:
            self.profiles.append(result.born.profiles)
        self._write_row(record)

    def _write_failure(self, gate_voltage, seed, mode, error):
        record = IvRecord(
            gate_voltage, self.settings.drain_voltage, seed, mode.value,
            float('nan'), 0, 0, float('nan'),
            'error: {}'.format(type(error).__name__), 0)
        self.records.append(record)
        self._write_row(record)

    def _write_row(self, record):
        vg, vd, seed, mode, current, outer, inner, spread, status, wall = (
            record)
        self._csv.writerow((
            _number(vg), _number(vd), '' if seed is None else seed, mode,
            '{:.10e}'.format(current), outer, inner,
            '{:.6e}'.format(spread), status,
            '{:.3f}'.format(wall) if wall else '0'))
        self._csv_file.flush()

    def _finish(self):
        self._resources.close()
        self._write_dat()
        couplings = self.settings.couplings(Mode.scattered)
        write_metadata(os.path.join(self.out_dir, 'run.ini'), self.settings,
                       self.grid, couplings, self.pool.n_workers,
                       self.pool.transport)
        if self.profile and len(self.profiles) > 0:
            write_profile(merge_profiles(self.profiles),
                          os.path.join(self.out_dir, 'profile.xml'))
        log.info('Sweep written to {}', self.out_dir)

    def _write_dat(self):
        """gnuplot companions: iv_<mode>.dat and spectrum_<mode>.dat."""
        for mode in MODES:
            rows = [record for record in self.records
                    if record.mode == mode.value
                    and not record.status.startswith('error')]
            with atomic(os.path.join(
                    self.out_dir, 'iv_{}.dat'.format(mode.value))) as fp:
                fp.write('# vg_V sample_seed current_A_per_nm\n')
                for record in rows:
                    fp.write('{} {} {:.10e}\n'.format(
                        _number(record.vg),
                        -1 if record.sample_seed is None
                        else record.sample_seed,
                        record.current))
            # The spectrum of the last gate voltage of the first sample.
            last = None
            for seed in self.seeds[:1]:
                for gate_voltage in self.gate_voltages:
                    last = self.results.get((seed, gate_voltage, mode), last)
            if last is None:
                continue
            with atomic(os.path.join(
                    self.out_dir,
                    'spectrum_{}.dat'.format(mode.value))) as fp:
                fp.write('# energy_eV current_A_per_nm_eV dos_per_eV_nm\n')
                spectrum = np.mean(last.spectrum, axis=1)
                for energy, value, dos in zip(
                        last.grid.energies, spectrum, last.dos):
                    fp.write('{:.10g} {:.10e} {:.10e}\n'.format(
                        energy, value, dos))


def _bench_problem(state, grid, leads):
    potential = np.zeros(len(state.graph.active_sites))
    return BornProblem(operators(state, grid, potential), leads,
                       state.settings.device_eta)


def time_born(settings, state, grid, leads, pool):
    """Wall time and result of one Born loop at zero potential."""
    problem = _bench_problem(state, grid, leads)
    couplings = settings.couplings(Mode.scattered)
    started = perf_counter()
    result = born_iteration(
        problem, grid, couplings, settings.scattering.n0,
        mixing=settings.born_mixing, tolerance=settings.born_tolerance,
        max_iterations=settings.born_max_iterations, pool=pool,
        profile=False)
    return perf_counter() - started, result


def adaptive_twin(settings, state, grid):
    """An adaptive grid with as many energies as the homogeneous `grid`.

    A quarter of the energies are midpoints inserted into a coarser
    homogeneous grid where the ballistic current flows.
    """
    budget = max(1, grid.n_energies // 4)
    coarse = make_grid(_with_points(settings, grid.n_energies - budget))
    coarse_leads = lead_self_energies(state, coarse, settings.drain_voltage)
    ballistic = born_iteration(
        _bench_problem(state, coarse, coarse_leads), coarse,
        settings.couplings(Mode.ballistic), settings.scattering.n0,
        profile=False)
    indicator = np.mean(np.abs(current_density(
        [values.bond_currents for values in ballistic.observables], coarse,
        settings.spin_degeneracy).spectrum), axis=1)
    return refine_adaptive(coarse, indicator, budget)


def run_bench(settings, out_dir, max_workers, *, transport=None,
              series=(1, 2, 4, 8)):
    """Strong scaling, load balance and memory step law at fixed potential.

    Returns the rows written to bench.dat.
    """
    makedirs(out_dir)
    transport = transport or settings.transport
    state = build_state(settings)
    grid = make_grid(settings)
    leads = lead_self_energies(state, grid, settings.drain_voltage)
    problem = _bench_problem(state, grid, leads)
    lines = ['# strong scaling: workers wall_s efficiency imbalance '
             'multiplies_per_iteration']
    counts = []
    workers = 1
    while workers <= max_workers:
        counts.append(workers)
        workers *= 2
    if counts[-1] != max_workers:
        counts.append(max_workers)
    baseline = None
    scaling = []
    for n in counts:
        pool = WorkerPool(n, transport, timeout=settings.timeout)
        wall, result = time_born(settings, state, grid, leads, pool)
        baseline = wall if baseline is None else baseline
        efficiency = baseline / (n * wall)
        per_iteration = result.multiplies // result.iterations
        scaling.append((n, wall, efficiency, result.imbalance))
        lines.append('{} {:.4f} {:.4f} {:.4f} {}'.format(
            n, wall, efficiency, result.imbalance, per_iteration))
        log.info('Bench: {} workers, {:.3f} s, efficiency {:.3f}',
                 n, wall, efficiency)
    adaptive = adaptive_twin(settings, state, grid)
    adaptive_leads = lead_self_energies(state, adaptive,
                                        settings.drain_voltage)
    pool = WorkerPool(max_workers, transport, timeout=settings.timeout)
    lines.append('# load balance: grid tuples imbalance')
    for label, this_grid, these_leads in (
            ('homogeneous', grid, leads),
            ('adaptive', adaptive, adaptive_leads)):
        wall, result = time_born(settings, state, this_grid, these_leads,
                                 pool)
        lines.append('{} {} {:.4f}'.format(
            label, this_grid.n_tuples, result.imbalance))
    lines.append('# memory step: tuples_in_series peak_bytes')
    empty = SelfEnergySet.zeros(grid.n_energies, problem.size)

    def solve(n):
        index = n % grid.n_tuples
        return solve_tuple(problem, grid, index,
                           empty[grid.split(index)[0]])

    steps = measure_series_memory(solve, series)
    for step in steps:
        lines.append('{} {}'.format(step.tuples_in_series, step.peak_bytes))
    slope, intercept, r2 = fit_affine(
        [step.tuples_in_series for step in steps],
        [step.peak_bytes for step in steps])
    lines.append('# fit: slope_bytes_per_tuple={:.1f} intercept_bytes={:.1f} '
                 'r2={:.5f}'.format(slope, intercept, r2))
    path = os.path.join(str(out_dir), 'bench.dat')
    with atomic(path) as fp:
        for line in lines:
            fp.write(line + '\n')
    log.info('Bench written to {}', path)
    return scaling, steps, (slope, intercept, r2)


def _with_points(settings, energies):
    """Settings whose homogeneous grid has about `energies` points."""
    optical = settings.scattering.optical_energy
    padding = settings.padding_optical * optical
    span = settings.energy_max - settings.energy_min + 2 * padding
    spacing = span / max(energies - 1, 1)
    points = max(1, int(round(optical / spacing)))
    return replace(settings, points_per_optical=points)


EnsembleStats = namedtuple('EnsembleStats', 'mode samples mean std')


def ensemble_statistics(records):
    """Mean and sample standard deviation of the current per mode."""
    stats = []
    for mode in MODES:
        currents = [record.current for record in records
                    if record.mode == mode.value and record.status == 'ok']
        if len(currents) == 0:
            continue
        spread = np.std(currents, ddof=1) if len(currents) > 1 else 0.0
        stats.append(EnsembleStats(
            mode.value, len(currents), float(np.mean(currents)),
            float(spread)))
    return stats


def write_ensemble(records, path):
    with atomic(path) as fp:
        fp.write('# mode samples mean_A_per_nm std_A_per_nm\n')
        for stats in ensemble_statistics(records):
            fp.write('{} {} {:.10e} {:.10e}\n'.format(*stats))
    log.info('Ensemble statistics written to {}', path)
