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

"""Physical constants in the eV / nm / ps / V unit system."""

__all__ = [
    'AMU_TO_EV_PS2_PER_NM2',
    'E2_OVER_H',
    'E_OVER_EPS0',
    'HBAR_EV_PS',
    'KB_EV',
    'thermal_energy',
    ]


from scipy import constants


# Boltzmann constant, eV/K.
KB_EV = constants.k / constants.e

# Reduced Planck constant, eV ps.
HBAR_EV_PS = constants.hbar / constants.e * 1e12

# Conductance quantum per spin, A/eV.  Multiplies an energy integral in eV
# of a dimensionless transmission-like quantity to give Amperes.
E2_OVER_H = constants.e ** 2 / constants.h

# e/eps0 in V nm, so that div(eps_r grad phi) = E_OVER_EPS0 * (n - N_D)
# with lengths in nm and densities in 1/nm^3.
E_OVER_EPS0 = constants.e / constants.epsilon_0 * 1e9

# One atomic mass unit expressed as eV ps^2 / nm^2.
AMU_TO_EV_PS2_PER_NM2 = constants.atomic_mass / constants.e * 1e6


def thermal_energy(temperature):
    """k_B T in eV."""
    return KB_EV * temperature
