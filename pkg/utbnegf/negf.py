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

"""Recursive Green's function solvers for one (E, k) tuple.

Only the block diagonal and the first block off-diagonals of G^R and G^<
are ever computed.  Greater functions are not needed: everything that
depends on them is expressed through G^R and G^<.
"""

__all__ = [
    'DENSE_RANK_LIMIT',
    'GreensSlice',
    'OperationCounter',
    'RankGuardError',
    'RetardedPart',
    'SingularBlockError',
    'dense_reference',
    'solve_lesser',
    'solve_retarded',
    ]


import logging
import numpy as np

from dataclasses import dataclass, field
from utbnegf.helpers import check_length


log = logging.getLogger('utbnegf')

DENSE_RANK_LIMIT = 2000


class SingularBlockError(Exception):
    """A block pivot could not be inverted."""

    def __init__(self, slab, energy, momentum=None):
        super().__init__(slab, energy, momentum)
        self.slab = slab
        self.energy = energy
        self.momentum = momentum

    def __str__(self):
        return ('singular block at slab {0.slab} '
                '(E={0.energy} eV, k={0.momentum} 1/nm)').format(self)


class RankGuardError(Exception):
    """The dense reference solver was asked for too large a system."""

    def __init__(self, rank, limit=DENSE_RANK_LIMIT):
        super().__init__(rank, limit)
        self.rank = rank
        self.limit = limit

    def __str__(self):
        return 'dense rank {0.rank} exceeds the limit of {0.limit}'.format(
            self)


class OperationCounter:
    """Count the scalar multiplies of the dense block algebra.

    A product of (n, m) and (m, p) blocks costs n*m*p; inverting an (n, n)
    block is charged n**3.
    """

    def __init__(self):
        self.multiplies = 0

    def __repr__(self):                             # pragma: no cover
        return '<OperationCounter multiplies={}>'.format(self.multiplies)

    def matmul(self, *blocks):
        result = blocks[0]
        for block in blocks[1:]:
            self.multiplies += (
                result.shape[0] * result.shape[1] * block.shape[1])
            result = result @ block
        return result

    def inv(self, block):
        self.multiplies += block.shape[0] ** 3
        return np.linalg.inv(block)


def _invert(counter, block, slab, energy, momentum):
    try:
        inverse = counter.inv(block)
    except np.linalg.LinAlgError:
        raise SingularBlockError(slab, energy, momentum) from None
    if not np.all(np.isfinite(inverse)):
        raise SingularBlockError(slab, energy, momentum)
    return inverse


@dataclass(eq=False)
class RetardedPart:
    operator: object
    energy: float
    momentum: float
    gR_diag: list
    # gR_upper[i] is block (i, i+1); gR_lower[i] is block (i+1, i).
    gR_upper: list
    gR_lower: list
    left_connected: list = field(repr=False)


@dataclass(eq=False)
class GreensSlice:
    """Diagonal and first off-diagonal blocks of G^R and G^< at (E, k)."""
    energy: float
    momentum: float
    gR_diag: list
    gR_upper: list
    gR_lower: list
    gL_diag: list
    gL_upper: list
    gL_lower: list

    def diagonal(self, which):
        """Concatenate the main diagonal of the G^R ('R') or G^< ('L') blocks.
        """
        blocks = self.gR_diag if which == 'R' else self.gL_diag
        return np.concatenate([np.diagonal(block) for block in blocks])


def solve_retarded(operator, sigma_R, energy, momentum=0.0, counter=None):
    """Solve [E - H - Sigma^R] G^R = 1 for the tridiagonal blocks of G^R.

    `sigma_R` holds one square block per slab; lead self-energies sit in
    the first and last block, scattering terms on the diagonals.
    """
    if counter is None:
        counter = OperationCounter()
    check_length(sigma_R, len(operator), 'sigma_R blocks')
    n = len(operator)
    left = [None] * n
    for i in range(n):
        rank = operator.ranks[i]
        a = energy * np.eye(rank) - operator.diagonal_blocks[i] - sigma_R[i]
        if i > 0:
            a = a - counter.matmul(
                operator.lower(i - 1), left[i - 1], operator.upper(i - 1))
        left[i] = _invert(counter, a, i, energy, momentum)
    diag = [None] * n
    upper = [None] * (n - 1)
    lower = [None] * (n - 1)
    diag[-1] = left[-1]
    for i in range(n - 2, -1, -1):
        lower[i] = counter.matmul(diag[i + 1], operator.lower(i), left[i])
        upper[i] = counter.matmul(left[i], operator.upper(i), diag[i + 1])
        diag[i] = left[i] + counter.matmul(left[i], operator.upper(i),
                                           lower[i])
    return RetardedPart(operator, energy, momentum, diag, upper, lower, left)


def solve_lesser(retarded, sigma_lesser, counter=None):
    """Compute the tridiagonal blocks of G^< = G^R Sigma^< G^R^+.

    `retarded` must come from `solve_retarded` with the same Sigma^R that
    `sigma_lesser` belongs to.
    """
    if counter is None:
        counter = OperationCounter()
    operator = retarded.operator
    n = len(operator)
    check_length(sigma_lesser, n, 'sigma_lesser blocks')
    left = retarded.left_connected
    left_dagger = [block.conj().T for block in left]
    # Left-connected lesser functions.
    lesser_left = [None] * n
    for i in range(n):
        inner = sigma_lesser[i]
        if i > 0:
            inner = inner + counter.matmul(
                operator.lower(i - 1), lesser_left[i - 1],
                operator.upper(i - 1))
        lesser_left[i] = counter.matmul(left[i], inner, left_dagger[i])
    diag = [None] * n
    upper = [None] * (n - 1)
    lower = [None] * (n - 1)
    diag[-1] = lesser_left[-1]
    for i in range(n - 2, -1, -1):
        coupling = operator.lower(i)
        lower[i] = (
            counter.matmul(retarded.gR_diag[i + 1], coupling, lesser_left[i])
            + counter.matmul(diag[i + 1], coupling, left_dagger[i]))
        upper[i] = -lower[i].conj().T
        diag[i] = (
            lesser_left[i]
            + counter.matmul(left[i], operator.upper(i), lower[i])
            + counter.matmul(lesser_left[i], operator.upper(i),
                             retarded.gR_upper[i].conj().T))
    return GreensSlice(
        energy=retarded.energy,
        momentum=retarded.momentum,
        gR_diag=retarded.gR_diag,
        gR_upper=retarded.gR_upper,
        gR_lower=retarded.gR_lower,
        gL_diag=diag,
        gL_upper=upper,
        gL_lower=lower,
        )


def _block_diagonal(blocks):
    size = sum(block.shape[0] for block in blocks)
    dense = np.zeros((size, size), dtype=complex)
    offset = 0
    for block in blocks:
        rank = block.shape[0]
        dense[offset:offset+rank, offset:offset+rank] = block
        offset += rank
    return dense


def dense_reference(operator, sigma_R, sigma_lesser, energy):
    """Return the full dense G^R and G^< by direct inversion.

    Meant as a test oracle for small systems only.
    """
    rank = sum(operator.ranks)
    if rank > DENSE_RANK_LIMIT:
        raise RankGuardError(rank)
    a = (energy * np.eye(rank) - operator.to_dense()
         - _block_diagonal(sigma_R))
    try:
        g_R = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        raise SingularBlockError(None, energy) from None
    if not np.all(np.isfinite(g_R)):
        raise SingularBlockError(None, energy)
    g_lesser = g_R @ _block_diagonal(sigma_lesser) @ g_R.conj().T
    return g_R, g_lesser
