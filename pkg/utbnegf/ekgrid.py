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

"""The energy-momentum integration grid."""

__all__ = [
    'EkGrid',
    'GridError',
    'GridMode',
    'Shift',
    'build_homogeneous',
    'integrate_energy',
    'integrate_momentum',
    'momentum_grid',
    'refine_adaptive',
    'weighted_sum',
    ]


import math
import heapq
import logging
import numpy as np

from collections import namedtuple
from dataclasses import dataclass, replace
from enum import Enum
from utbnegf.helpers import check_length


log = logging.getLogger('utbnegf')

# Relative tolerance, in units of the local spacing, for matching a shifted
# energy to an existing grid point.
MATCH_TOLERANCE = 1e-9


class GridError(Exception):
    """The grid cannot be built."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason

    def __str__(self):
        return 'bad energy-momentum grid: {0.reason}'.format(self)


class GridMode(Enum):
    homogeneous = 'homogeneous'
    adaptive = 'adaptive'


class Shift(namedtuple('Shift', 'lo hi fraction')):
    """Where a shifted energy E +/- E_op falls on the grid.

    Exact hits have lo == hi and fraction 0; otherwise the value is the
    linear interpolation (1 - fraction) * v[lo] + fraction * v[hi].
    """

    __slots__ = ()

    @property
    def exact(self):
        return self.lo == self.hi

    def apply(self, values):
        if self.exact:
            return values[self.lo]
        return ((1 - self.fraction) * values[self.lo]
                + self.fraction * values[self.hi])


def weighted_sum(weights, values):
    """Sum w[i] * v[i] strictly in index order.

    Every reduction in the package goes through here so that the result is
    bitwise the same no matter which worker computed which term.
    """
    check_length(values, len(weights), 'weighted values')
    total = 0.0 * values[0] if len(values) > 0 else 0.0
    for weight, value in zip(weights, values):
        total = total + weight * value
    return total


@dataclass(frozen=True, eq=False)
class EkGrid:
    energies: np.ndarray
    energy_weights: np.ndarray
    momenta: np.ndarray
    momentum_weights: np.ndarray
    # Per energy, the Shift of E + E_op and of E - E_op, or None when the
    # shifted energy falls outside the grid.
    shift_plus: tuple
    shift_minus: tuple
    mode: GridMode
    optical_energy: float

    @property
    def n_energies(self):
        return len(self.energies)

    @property
    def n_momenta(self):
        return len(self.momenta)

    @property
    def n_tuples(self):
        return self.n_energies * self.n_momenta

    @property
    def optical_shift_indices(self):
        return list(zip(self.shift_plus, self.shift_minus))

    @property
    def interpolated(self):
        """True when some optical shift needs interpolation."""
        return any(shift is not None and not shift.exact
                   for shift in self.shift_plus + self.shift_minus)

    @property
    def energy_range(self):
        return self.energies[-1] - self.energies[0]

    @property
    def zone_length(self):
        return float(np.sum(self.momentum_weights))

    def tuple_index(self, energy_index, momentum_index):
        return energy_index * self.n_momenta + momentum_index

    def split(self, tuple_index):
        """Return (energy_index, momentum_index) of a tuple."""
        return divmod(tuple_index, self.n_momenta)

    def stencil_rows(self, energy_index):
        """The energy rows a self-energy at `energy_index` reads."""
        rows = {energy_index}
        for shift in (self.shift_plus[energy_index],
                      self.shift_minus[energy_index]):
            if shift is not None:
                rows.update((shift.lo, shift.hi))
        return sorted(rows)


def _trapezoid_weights(points):
    weights = np.zeros(len(points))
    if len(points) < 2:
        return weights
    widths = np.diff(points)
    weights[:-1] += widths / 2
    weights[1:] += widths / 2
    return weights


def momentum_grid(n_k, period):
    """Points and weights over the half zone [0, pi/W].

    The weights are doubled to account for the mirrored half, so they sum to
    the full zone length 2*pi/W.
    """
    if n_k < 1:
        raise GridError('need at least one momentum: {}'.format(n_k))
    if period <= 0:
        raise GridError('transverse period must be positive: {}'.format(
            period))
    zone = 2 * math.pi / period
    if n_k == 1:
        return np.zeros(1), np.array([zone])
    momenta = np.linspace(0.0, math.pi / period, n_k)
    return momenta, 2 * _trapezoid_weights(momenta)


def _interpolated_shifts(energies, offset):
    shifts = []
    last = len(energies) - 1
    for index, energy in enumerate(energies):
        target = energy + offset
        hi = int(np.searchsorted(energies, target))
        spacing = energies[min(max(hi, 1), last)] - energies[
            min(max(hi, 1), last) - 1]
        tolerance = MATCH_TOLERANCE * spacing
        if hi <= last and abs(energies[hi] - target) <= tolerance:
            shifts.append(Shift(hi, hi, 0.0))
        elif hi > 0 and abs(energies[hi - 1] - target) <= tolerance:
            shifts.append(Shift(hi - 1, hi - 1, 0.0))
        elif hi == 0 or hi > last:
            shifts.append(None)
        else:
            lo = hi - 1
            fraction = (target - energies[lo]) / (energies[hi] - energies[lo])
            shifts.append(Shift(lo, hi, float(fraction)))
    return tuple(shifts)


def build_homogeneous(e_min, e_max, optical_energy, points_per_optical, n_k,
                      period=1.0):
    """Build a uniform grid whose spacing divides the optical energy.

    The upper end is pushed out to the next multiple of the spacing so that
    every optical shift is a whole number of grid steps.
    """
    if not e_max > e_min:
        raise GridError('empty energy range [{}, {}]'.format(e_min, e_max))
    if optical_energy <= 0:
        raise GridError('optical energy must be positive: {}'.format(
            optical_energy))
    if points_per_optical < 1:
        raise GridError('need at least one point per optical energy: {}'
                        .format(points_per_optical))
    spacing = optical_energy / points_per_optical
    intervals = max(1, math.ceil((e_max - e_min) / spacing - 1e-9))
    energies = e_min + spacing * np.arange(intervals + 1)
    weights = np.full(intervals + 1, spacing)
    weights[0] = weights[-1] = spacing / 2
    momenta, momentum_weights = momentum_grid(n_k, period)
    count = intervals + 1
    stride = points_per_optical
    shift_plus = tuple(
        Shift(i + stride, i + stride, 0.0) if i + stride < count else None
        for i in range(count))
    shift_minus = tuple(
        Shift(i - stride, i - stride, 0.0) if i - stride >= 0 else None
        for i in range(count))
    return EkGrid(
        energies=energies,
        energy_weights=weights,
        momenta=momenta,
        momentum_weights=momentum_weights,
        shift_plus=shift_plus,
        shift_minus=shift_minus,
        mode=GridMode.homogeneous,
        optical_energy=optical_energy,
        )


def refine_adaptive(grid, indicator, budget):
    """Insert up to `budget` midpoints where indicator * width is largest.

    The indicator at an inserted midpoint is the mean of its neighbors, so
    the ranking score of an interval is the integral of the linearly
    interpolated indicator over it.  Equal scores go to the interval with
    the lower left edge.
    """
    check_length(indicator, grid.n_energies, 'indicator')
    if budget <= 0:
        return grid
    indicator = np.asarray(indicator, dtype=float)
    if np.any(indicator < 0):
        raise GridError('indicator must not be negative')
    energies = grid.energies
    heap = []
    for j in range(grid.n_energies - 1):
        left, right = energies[j], energies[j + 1]
        score = (indicator[j] + indicator[j + 1]) / 2 * (right - left)
        heapq.heappush(heap, (-score, left, right,
                              indicator[j], indicator[j + 1]))
    inserted = []
    for count in range(budget):
        negative_score, left, right, left_value, right_value = (
            heapq.heappop(heap))
        middle = (left + right) / 2
        middle_value = (left_value + right_value) / 2
        inserted.append(middle)
        half = (right - left) / 2
        heapq.heappush(heap, (-(left_value + middle_value) / 2 * half,
                              left, middle, left_value, middle_value))
        heapq.heappush(heap, (-(middle_value + right_value) / 2 * half,
                              middle, right, middle_value, right_value))
    refined = np.sort(np.concatenate([energies, inserted]))
    log.debug('Adaptive refinement added {} energies', len(inserted))
    return replace(
        grid,
        energies=refined,
        energy_weights=_trapezoid_weights(refined),
        shift_plus=_interpolated_shifts(refined, grid.optical_energy),
        shift_minus=_interpolated_shifts(refined, -grid.optical_energy),
        mode=GridMode.adaptive,
        )


def integrate_energy(values, grid):
    """Integrate per-energy values with the grid's energy weights."""
    check_length(values, grid.n_energies, 'energy values')
    return weighted_sum(grid.energy_weights, values)


def integrate_momentum(values, grid):
    """Integrate per-momentum values with the grid's momentum weights."""
    check_length(values, grid.n_momenta, 'momentum values')
    return weighted_sum(grid.momentum_weights, values)
