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


"""Test the recursive Green's function solver."""

__all__ = [
    'TestOperationCount',
    'TestRecursiveSolver',
    ]


import pickle
import unittest
import numpy as np

from unittest.mock import patch
from utbnegf.helpers import ShapeError
from utbnegf.negf import (
    OperationCounter, RankGuardError, SingularBlockError, dense_reference,
    solve_lesser, solve_retarded)
from utbnegf.testing.helpers import (
    chain_operator, greater_reference_multiplies, random_operator,
    random_self_energies)


def _slices(ranks):
    offsets = np.cumsum([0] + list(ranks))
    return [slice(offsets[i], offsets[i + 1]) for i in range(len(ranks))]


class TestRecursiveSolver(unittest.TestCase):
    def setUp(self):
        self.ranks = [2, 3, 2, 4, 3]
        self.operator = random_operator(self.ranks, seed=11)
        self.sigma_R, self.sigma_lesser = random_self_energies(
            self.ranks, seed=12)
        self.energy = 0.3

    def _solve(self):
        retarded = solve_retarded(self.operator, self.sigma_R, self.energy)
        return solve_lesser(retarded, self.sigma_lesser)

    def test_matches_dense_inversion(self):
        greens = self._solve()
        g_R, g_lesser = dense_reference(
            self.operator, self.sigma_R, self.sigma_lesser, self.energy)
        blocks = _slices(self.ranks)
        for i, rows in enumerate(blocks):
            np.testing.assert_allclose(
                greens.gR_diag[i], g_R[rows, rows], atol=1e-10)
            np.testing.assert_allclose(
                greens.gL_diag[i], g_lesser[rows, rows], atol=1e-10)
        for i in range(len(blocks) - 1):
            here, there = blocks[i], blocks[i + 1]
            np.testing.assert_allclose(
                greens.gR_upper[i], g_R[here, there], atol=1e-10)
            np.testing.assert_allclose(
                greens.gR_lower[i], g_R[there, here], atol=1e-10)
            np.testing.assert_allclose(
                greens.gL_upper[i], g_lesser[here, there], atol=1e-10)
            np.testing.assert_allclose(
                greens.gL_lower[i], g_lesser[there, here], atol=1e-10)

    def test_randomized_instances_match_dense_inversion(self):
        # Diagonal and first off-diagonal blocks of G^R and G^< agree with
        # dense inversion on 100 seeded devices of 3 to 12 slabs whose
        # block ranks range over 2 to 16.
        rng = np.random.default_rng(2024)
        for case in range(100):
            n_slabs = int(rng.integers(3, 13))
            ranks = [int(rank) for rank in rng.integers(2, 17, n_slabs)]
            energy = float(rng.uniform(-2.0, 2.0))
            with self.subTest(case=case, ranks=ranks):
                operator = random_operator(ranks, seed=1000 + case)
                sigma_R, sigma_lesser = random_self_energies(
                    ranks, seed=2000 + case)
                greens = solve_lesser(
                    solve_retarded(operator, sigma_R, energy), sigma_lesser)
                g_R, g_lesser = dense_reference(
                    operator, sigma_R, sigma_lesser, energy)
                blocks = _slices(ranks)
                pairs = []
                for i, rows in enumerate(blocks):
                    pairs.append((greens.gR_diag[i], g_R[rows, rows], g_R))
                    pairs.append((greens.gL_diag[i], g_lesser[rows, rows],
                                  g_lesser))
                for i in range(n_slabs - 1):
                    here, there = blocks[i], blocks[i + 1]
                    pairs.extend([
                        (greens.gR_upper[i], g_R[here, there], g_R),
                        (greens.gR_lower[i], g_R[there, here], g_R),
                        (greens.gL_upper[i], g_lesser[here, there], g_lesser),
                        (greens.gL_lower[i], g_lesser[there, here], g_lesser),
                        ])
                for ours, dense, whole in pairs:
                    error = (np.max(np.abs(ours - dense))
                             / np.max(np.abs(whole)))
                    self.assertLess(error, 1e-10)

    def test_lesser_is_anti_hermitian(self):
        greens = self._solve()
        for block in greens.gL_diag:
            np.testing.assert_allclose(block, -block.conj().T, atol=1e-12)
        # Occupations are non-negative.
        self.assertTrue(np.all(greens.diagonal('L').imag >= -1e-12))

    def test_diagonal(self):
        greens = self._solve()
        self.assertEqual(greens.diagonal('R').shape, (sum(self.ranks),))
        self.assertTrue(np.all(greens.diagonal('R').imag < 0))

    def test_singular_block(self):
        operator = chain_operator(1, onsite=0.5)
        zero = [np.zeros((1, 1), dtype=complex)]
        with self.assertRaises(SingularBlockError) as cm:
            solve_retarded(operator, zero, 0.5, momentum=0.2)
        self.assertEqual(cm.exception.slab, 0)
        self.assertEqual(cm.exception.momentum, 0.2)
        copy = pickle.loads(pickle.dumps(cm.exception))
        self.assertEqual(copy.energy, 0.5)

    def test_wrong_number_of_blocks(self):
        self.assertRaises(ShapeError, solve_retarded,
                          self.operator, self.sigma_R[:-1], self.energy)
        retarded = solve_retarded(self.operator, self.sigma_R, self.energy)
        self.assertRaises(ShapeError, solve_lesser,
                          retarded, self.sigma_lesser[1:])

    def test_rank_guard(self):
        with patch('utbnegf.negf.DENSE_RANK_LIMIT', 5):
            with self.assertRaises(RankGuardError) as cm:
                dense_reference(self.operator, self.sigma_R,
                                self.sigma_lesser, self.energy)
        self.assertEqual(cm.exception.rank, 14)


class TestOperationCount(unittest.TestCase):
    def _count(self, n_slabs, rank=3):
        ranks = [rank] * n_slabs
        operator = random_operator(ranks, seed=1)
        sigma_R, sigma_lesser = random_self_energies(ranks, seed=2)
        counter = OperationCounter()
        retarded = solve_retarded(operator, sigma_R, 0.1, counter=counter)
        solve_lesser(retarded, sigma_lesser, counter)
        return counter.multiplies, operator, sigma_R, sigma_lesser

    def test_matmul_cost(self):
        counter = OperationCounter()
        counter.matmul(np.ones((2, 3)), np.ones((3, 4)), np.ones((4, 1)))
        self.assertEqual(counter.multiplies, 2 * 3 * 4 + 2 * 4 * 1)
        counter.inv(np.eye(3))
        self.assertEqual(counter.multiplies, 32 + 27)

    def test_linear_in_slabs(self):
        # Every interior slab costs the same.
        ten = self._count(10)[0]
        twenty = self._count(20)[0]
        thirty = self._count(30)[0]
        self.assertEqual(twenty - ten, thirty - twenty)

    def test_cheaper_than_greater_formulation(self):
        # Reusing the retarded sweep halves the work of a formulation that
        # repeats it for the greater function.
        ours, operator, sigma_R, sigma_lesser = self._count(8)
        reference = greater_reference_multiplies(
            operator, sigma_R, sigma_lesser, 0.1)
        self.assertEqual(reference, 2 * ours)
