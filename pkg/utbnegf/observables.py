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

"""Currents, transmission and spectra."""

__all__ = [
    'CurrentDensity',
    'TupleObservables',
    'ballistic_transmission',
    'bond_currents',
    'current_density',
    'density_of_states',
    'fluctuation_dissipation_error',
    'landauer_current',
    'nonuniformity',
    'tuple_observables',
    ]


import math
import numpy as np

from collections import namedtuple
from utbnegf.ekgrid import integrate_energy, weighted_sum
from utbnegf.helpers import ShapeError, check_length
from utbnegf.leads import fermi
from utbnegf.negf import DENSE_RANK_LIMIT, RankGuardError
from utbnegf.units import E2_OVER_H


# What a worker keeps of one solved tuple: the particle current through
# every slab interface, Im diag G^< per orbital and the local density of
# states trace.
TupleObservables = namedtuple(
    'TupleObservables', 'bond_currents occupation dos')

# Interface currents in A per nm of transverse width, and per energy row the
# energy-resolved current of every interface in A/(nm eV).
CurrentDensity = namedtuple('CurrentDensity', 'interfaces spectrum')


def bond_currents(operator, greens):
    """Return c_i = 2 Re Tr[H(i, i+1) G^<(i+1, i)] for every interface.

    Ballistically c_i = T(E, k) (f_L - f_R).
    """
    n = len(operator)
    lower = greens.gL_lower
    if lower is None or any(block is None for block in lower):
        raise ShapeError('lesser off-diagonal blocks', n - 1, 0)
    check_length(lower, n - 1, 'lesser off-diagonal blocks')
    return np.array([
        2 * np.trace(operator.upper(i) @ lower[i]).real
        for i in range(n - 1)])


def tuple_observables(operator, greens):
    dos = -sum(np.trace(block).imag for block in greens.gR_diag) / math.pi
    return TupleObservables(
        bond_currents=bond_currents(operator, greens),
        occupation=greens.diagonal('L').imag,
        dos=dos,
        )


def _momentum_rows(values_by_tuple, grid):
    """Per energy row, sum (w_k / 2 pi) * value over momenta in order."""
    check_length(values_by_tuple, grid.n_tuples, 'tuple values')
    weights = grid.momentum_weights / (2 * math.pi)
    rows = []
    for e in range(grid.n_energies):
        start = grid.tuple_index(e, 0)
        rows.append(weighted_sum(
            weights, values_by_tuple[start:start + grid.n_momenta]))
    return rows


def current_density(currents_by_tuple, grid, spin_degeneracy=2.0):
    """Integrate per-tuple bond currents into interface currents.

    I_i = g_s (e^2/h) sum_E w_E sum_k (w_k / 2 pi) c_i(E, k), in A per nm
    of transverse width when energies are in eV.
    """
    rows = _momentum_rows(
        [np.asarray(values, dtype=float) for values in currents_by_tuple],
        grid)
    scale = spin_degeneracy * E2_OVER_H
    spectrum = scale * np.array(rows)
    interfaces = integrate_energy(list(spectrum), grid)
    return CurrentDensity(np.asarray(interfaces), spectrum)


def density_of_states(dos_by_tuple, grid):
    """Per energy row, the momentum-integrated DOS in 1/(eV nm)."""
    return np.array(_momentum_rows(
        [float(value) for value in dos_by_tuple], grid))


def nonuniformity(interfaces):
    """Largest spread of the interface currents relative to their scale."""
    interfaces = np.asarray(interfaces)
    scale = np.max(np.abs(interfaces))
    if scale == 0:
        return 0.0
    return float((interfaces.max() - interfaces.min()) / scale)


def ballistic_transmission(operator, left, right, energy):
    """T = Tr[Gamma_L G^R Gamma_R G^R^+] by dense inversion.

    `left` and `right` are the LeadSelfEnergy of the first and last slab.
    """
    ranks = operator.ranks
    size = sum(ranks)
    if size > DENSE_RANK_LIMIT:
        raise RankGuardError(size)
    first = slice(0, ranks[0])
    last = slice(size - ranks[-1], size)
    sigma = np.zeros((size, size), dtype=complex)
    sigma[first, first] += left.sigma_R
    sigma[last, last] += right.sigma_R
    g_R = np.linalg.inv(energy * np.eye(size) - operator.to_dense() - sigma)
    g_corner = g_R[first, last]
    value = np.trace(left.gamma @ g_corner @ right.gamma
                     @ g_corner.conj().T)
    return float(value.real)


def landauer_current(transmission, grid, mu_left, mu_right, temperature,
                     spin_degeneracy=2.0):
    """The Landauer current of a per-tuple transmission, in A per nm.

    I = g_s (e^2/h) sum_E w_E sum_k (w_k / 2 pi) T(E, k) (f_L - f_R)
    """
    window = [fermi(grid.energies[e], mu_left, temperature)
              - fermi(grid.energies[e], mu_right, temperature)
              for e in range(grid.n_energies)]
    values = [transmission[index] * window[grid.split(index)[0]]
              for index in range(grid.n_tuples)]
    rows = _momentum_rows(values, grid)
    return spin_degeneracy * E2_OVER_H * integrate_energy(rows, grid)


def fluctuation_dissipation_error(greens, mu, temperature):
    """How far G^< is from -f (G^R - G^R^+) on the diagonal blocks.

    Zero in equilibrium.  The result is relative to the largest |G^R|.
    """
    occupation = fermi(greens.energy.real, mu, temperature)
    worst = 0.0
    scale = 0.0
    for g_R, g_L in zip(greens.gR_diag, greens.gL_diag):
        expected = -occupation * (g_R - g_R.conj().T)
        worst = max(worst, float(np.max(np.abs(g_L - expected))))
        scale = max(scale, float(np.max(np.abs(g_R))))
    return worst / scale if scale > 0 else worst
