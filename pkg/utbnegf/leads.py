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

"""Semi-infinite contact self-energies."""

__all__ = [
    'AttachSlab',
    'LeadConvergenceError',
    'LeadModel',
    'LeadSelfEnergy',
    'broadening',
    'fermi',
    'lead_lesser',
    'lead_pair',
    'lead_self_energy',
    'surface_greens_function',
    ]


import logging
import numpy as np

from dataclasses import dataclass
from enum import Enum
from scipy.special import expit
from utbnegf.helpers import ShapeError
from utbnegf.units import thermal_energy


log = logging.getLogger('utbnegf')


class LeadConvergenceError(Exception):
    """The surface Green's function decimation did not converge."""

    def __init__(self, iterations, residual, energy=None):
        super().__init__(iterations, residual, energy)
        self.iterations = iterations
        self.residual = residual
        self.energy = energy

    def __str__(self):
        return ('lead decimation did not converge at E={0.energy} eV after '
                '{0.iterations} iterations (residual {0.residual:.3e})'
                ).format(self)


class AttachSlab(Enum):
    first = 'first'
    last = 'last'


def fermi(energy, mu, temperature):
    """The Fermi-Dirac occupation f(E - mu) at temperature T (K)."""
    return expit(-(energy - mu) / thermal_energy(temperature))


def surface_greens_function(h00, h01, energy, eta=1e-6, tol=1e-12,
                            max_iterations=200):
    """Return the retarded surface Green's function of a semi-infinite lead.

    `h01` couples the surface layer to the next layer into the lead.  The
    decimation doubles the effective layer spacing every iteration and
    stops once the remaining inter-layer coupling is smaller than `tol`.
    The result satisfies g = [(E + i*eta) - h00 - h01 g h01^+]^-1.

    :raises LeadConvergenceError: after `max_iterations` doublings.
    """
    if eta <= 0:
        raise ValueError('eta must be positive: {}'.format(eta))
    if tol <= 0:
        raise ValueError('tol must be positive: {}'.format(tol))
    h00 = np.asarray(h00, dtype=complex)
    alpha = np.asarray(h01, dtype=complex)
    if h00.shape != alpha.shape or h00.shape[0] != h00.shape[1]:
        raise ShapeError('lead blocks', h00.shape, alpha.shape)
    z = (energy + 1j * eta) * np.eye(h00.shape[0])
    beta = alpha.conj().T
    eps = h00.copy()
    eps_surface = h00.copy()
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        g = np.linalg.inv(z - eps)
        agb = alpha @ g @ beta
        bga = beta @ g @ alpha
        eps_surface = eps_surface + agb
        eps = eps + agb + bga
        alpha = alpha @ g @ alpha
        beta = beta @ g @ beta
        residual = np.linalg.norm(alpha) + np.linalg.norm(beta)
        if residual < tol:
            return np.linalg.inv(z - eps_surface)
    log.error('Lead decimation failed at E={} eV: residual {:.3e}',
              energy, residual)
    raise LeadConvergenceError(max_iterations, residual, energy)


def lead_self_energy(g_surface, coupling):
    """Sigma^R = coupling . g_surface . coupling^+."""
    g_surface = np.asarray(g_surface)
    coupling = np.asarray(coupling)
    if coupling.shape[1] != g_surface.shape[0]:
        raise ShapeError('lead coupling', g_surface.shape[0],
                         coupling.shape[1])
    return coupling @ g_surface @ coupling.conj().T


def broadening(sigma_R):
    return 1j * (sigma_R - sigma_R.conj().T)


def lead_lesser(sigma_R, mu, energy, temperature):
    """Sigma^< = i f(E - mu) Gamma of a reservoir in equilibrium."""
    if temperature <= 0:
        raise ValueError('temperature must be positive: {}'.format(
            temperature))
    return 1j * fermi(energy, mu, temperature) * broadening(sigma_R)


@dataclass(frozen=True, eq=False)
class LeadSelfEnergy:
    sigma_R: np.ndarray
    gamma: np.ndarray
    sigma_lesser: np.ndarray
    energy: float
    momentum: float


@dataclass(frozen=True, eq=False)
class LeadModel:
    """One semi-infinite lead.

    `h01` couples a lead layer to the next one away from the device, and the
    device boundary slab couples to the lead surface the same way.
    """
    h00: np.ndarray
    h01: np.ndarray
    mu: float
    attach_slab: AttachSlab

    def self_energy(self, energy, momentum, temperature, *,
                    eta=1e-6, tol=1e-12, max_iterations=200):
        g = surface_greens_function(
            self.h00, self.h01, energy, eta, tol, max_iterations)
        sigma = lead_self_energy(g, self.h01)
        return LeadSelfEnergy(
            sigma_R=sigma,
            gamma=broadening(sigma),
            sigma_lesser=lead_lesser(sigma, self.mu, energy, temperature),
            energy=energy,
            momentum=momentum,
            )


def lead_pair(h00, coupling, mu_left, mu_right, v_left=0.0, v_right=0.0):
    """Build the (left, right) leads of a device.

    `h00` and `coupling` are the pristine slab block and the slab i to i+1
    coupling.  Each lead's onsite block is shifted rigidly by its terminal
    voltage.
    """
    identity = np.eye(h00.shape[0])
    left = LeadModel(h00 - v_left * identity, coupling.conj().T,
                     mu_left, AttachSlab.first)
    right = LeadModel(h00 - v_right * identity, coupling,
                      mu_right, AttachSlab.last)
    return left, right
