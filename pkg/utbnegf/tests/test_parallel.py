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

"""Test tuple partitioning, the exchange schedule and the worker pool."""

__all__ = [
    'TestAllreduce',
    'TestCommSchedule',
    'TestExecuteRound',
    'TestPartition',
    'TestWorkerPool',
    ]


import unittest
import numpy as np

from dataclasses import replace
from types import SimpleNamespace
from utbnegf.ekgrid import Shift, build_homogeneous
from utbnegf.parallel import (
    Partition, ScheduleError, WorkerPool, allreduce_max, build_comm_schedule,
    estimate_cost, execute_round, partition_tuples)
from utbnegf.transport import PayloadKind, TransportError


def _grid():
    # 31 energies, 3 points per optical energy, 4 momenta.
    return build_homogeneous(0.0, 0.6, 0.06, 3, 4, period=1.0)


def _terms(grid, seed=0):
    rng = np.random.default_rng(seed)
    terms = {}
    for index in range(grid.n_tuples):
        terms[index] = {
            kind: rng.standard_normal(5) + 1j * rng.standard_normal(5)
            for kind in (PayloadKind.gr_diag, PayloadKind.gl_diag)}
    return terms


def _exchange(rank, endpoint, schedule, grid, partition, terms):
    mine = {index: terms[index] for index in partition.tuples_of(rank)}
    return execute_round(schedule, rank, mine, endpoint, grid, partition)


class TestPartition(unittest.TestCase):
    def test_longest_first(self):
        grid = SimpleNamespace(n_tuples=5)
        partition = partition_tuples(grid, [5.0, 4.0, 3.0, 3.0, 3.0], 2)
        self.assertEqual(partition.assignment, (0, 1, 1, 0, 1))
        self.assertEqual(partition.loads(), [8.0, 10.0])
        self.assertAlmostEqual(partition.imbalance, 10 / 9 - 1)
        self.assertEqual(partition.tuples_of(0), [0, 3])

    def test_three_tuples_by_hand(self):
        grid = SimpleNamespace(n_tuples=3)
        partition = partition_tuples(grid, [3.0, 2.0, 2.0], 2)
        self.assertEqual(sorted(partition.loads()), [3.0, 4.0])
        self.assertAlmostEqual(partition.imbalance, 1 / 7)

    def test_uniform_costs_balance(self):
        grid = _grid()
        costs = [estimate_cost(index, grid, [4, 4, 4])
                 for index in range(grid.n_tuples)]
        partition = partition_tuples(grid, costs, 4)
        self.assertEqual(partition.imbalance, 0.0)
        partition = partition_tuples(grid, costs, 5)
        # 124 tuples over 5 workers: 25 at most against a mean of 24.8.
        self.assertAlmostEqual(partition.imbalance, 25 / 24.8 - 1)

    def test_unequal_costs_balance_worse(self):
        # 96 tuples on 8 workers: equal costs split evenly, spread-out
        # costs of the same count never split better.
        grid = SimpleNamespace(n_tuples=96)
        even = partition_tuples(grid, [1.0] * 96, 8)
        self.assertEqual(even.imbalance, 0.0)
        rng = np.random.default_rng(8)
        for case in range(100):
            costs = list(rng.uniform(0.2, 5.0, 96))
            with self.subTest(case=case):
                uneven = partition_tuples(grid, costs, 8)
                self.assertLessEqual(even.imbalance, uneven.imbalance)

    def test_estimate_cost(self):
        self.assertEqual(estimate_cost(0, None, [2, 3]), 35.0)

    def test_surplus_workers(self):
        grid = SimpleNamespace(n_tuples=2)
        partition = partition_tuples(grid, [1.0, 1.0], 4)
        self.assertEqual(partition.tuples_of(3), [])

    def test_bad_arguments(self):
        grid = SimpleNamespace(n_tuples=2)
        with self.assertRaises(ValueError):
            partition_tuples(grid, [1.0, 1.0], 0)
        with self.assertRaises(ValueError):
            partition_tuples(grid, [1.0], 2)


class TestCommSchedule(unittest.TestCase):
    def setUp(self):
        self.grid = _grid()
        costs = [1.0] * self.grid.n_tuples
        self.partition = partition_tuples(self.grid, costs, 3)
        self.schedule = build_comm_schedule(self.partition, self.grid)

    def test_deadlock_free(self):
        self.assertGreater(len(self.schedule), 0)
        self.assertTrue(self.schedule.is_acyclic())
        self.assertTrue(self.schedule.pairwise_consistent())

    def test_senders_own_their_tuples(self):
        for task in self.schedule.tasks:
            index = self.grid.tuple_index(task.energy, task.momentum)
            self.assertEqual(self.partition.assignment[index], task.sender)
            self.assertNotEqual(task.sender, task.receiver)

    def test_both_diagonals_travel(self):
        kinds = {task.kind for task in self.schedule.tasks}
        self.assertEqual(kinds, {PayloadKind.gr_diag, PayloadKind.gl_diag})

    def test_split_by_momentum(self):
        # Two energies closer than one optical energy: no shifted rows.
        grid = build_homogeneous(0.0, 0.03, 0.06, 2, 2)
        self.assertEqual(grid.n_tuples, 4)
        partition = Partition((0, 1, 0, 1), (1.0,) * 4, 2)
        schedule = build_comm_schedule(partition, grid)
        self.assertEqual(len(schedule), 8)
        self.assertTrue(schedule.is_acyclic())

    def test_single_worker_exchanges_nothing(self):
        partition = partition_tuples(
            self.grid, [1.0] * self.grid.n_tuples, 1)
        schedule = build_comm_schedule(partition, self.grid)
        self.assertEqual(len(schedule), 0)

    def test_unresolved_shift(self):
        grid = replace(
            self.grid,
            shift_plus=(Shift(99, 99, 0.0),) + self.grid.shift_plus[1:])
        with self.assertRaises(ScheduleError) as cm:
            build_comm_schedule(self.partition, grid)
        self.assertEqual(cm.exception.unresolved, [0])


class TestExecuteRound(unittest.TestCase):
    def setUp(self):
        self.grid = _grid()
        self.terms = _terms(self.grid)
        costs = [1.0] * self.grid.n_tuples
        serial = partition_tuples(self.grid, costs, 1)
        schedule = build_comm_schedule(serial, self.grid)
        pool = WorkerPool(1)
        (self.reference,) = pool.run(
            _exchange, schedule, self.grid, serial, self.terms)

    def _check(self, n_workers, **kws):
        costs = [1.0] * self.grid.n_tuples
        partition = partition_tuples(self.grid, costs, n_workers)
        schedule = build_comm_schedule(partition, self.grid)
        pool = WorkerPool(n_workers, timeout=10.0, **kws)
        results = pool.run(
            _exchange, schedule, self.grid, partition, self.terms)
        for sums in results:
            for row, row_sums in sums.items():
                np.testing.assert_array_equal(
                    row_sums.retarded, self.reference[row].retarded)
                np.testing.assert_array_equal(
                    row_sums.lesser, self.reference[row].lesser)

    def test_serial_rows(self):
        self.assertEqual(sorted(self.reference), list(range(31)))

    def test_threads_match_serial_bitwise(self):
        self._check(3)

    def test_reordered_delivery(self):
        self._check(4, max_delay=0.002, seed=5)

    def test_randomized_delivery_schedules(self):
        # Any worker count and any delivery order give the serial sums.
        for n_workers in (1, 2, 4, 8):
            for seed in range(50):
                with self.subTest(n_workers=n_workers, seed=seed):
                    self._check(n_workers, max_delay=0.0005, seed=seed)

    def test_processes_match_serial_bitwise(self):
        self._check(2, transport='socket')


def _maximum(rank, endpoint, n_workers):
    first = allreduce_max(endpoint, rank, n_workers, (rank * 3) % 5, 0)
    second = allreduce_max(endpoint, rank, n_workers, -rank, 1)
    return first, second


class TestAllreduce(unittest.TestCase):
    def test_everybody_gets_the_maximum(self):
        results = WorkerPool(4, timeout=10.0).run(_maximum, 4)
        self.assertEqual(results, [(4.0, 0.0)] * 4)

    def test_single_worker(self):
        self.assertEqual(allreduce_max(None, 0, 1, 2.5, 0), 2.5)


def _fail_on_one(rank, endpoint):
    if rank == 1:
        raise ZeroDivisionError('rank one')
    return endpoint.recv(1, 0, PayloadKind.control)


def _one_leaves(rank, endpoint):
    if rank == 1:
        return None
    return endpoint.recv(1, 0, PayloadKind.control)


def _rank(rank, endpoint):
    return rank


class TestWorkerPool(unittest.TestCase):
    def test_results_in_rank_order(self):
        self.assertEqual(WorkerPool(3).run(_rank), [0, 1, 2])
        self.assertEqual(WorkerPool(2, 'socket').run(_rank), [0, 1])

    def test_root_cause_wins(self):
        pool = WorkerPool(2, timeout=0.2)
        with self.assertRaises(ZeroDivisionError):
            pool.run(_fail_on_one)

    def test_closed_peer(self):
        pool = WorkerPool(2, 'socket', timeout=10.0)
        with self.assertRaises(TransportError):
            pool.run(_one_leaves)

    def test_timeout(self):
        pool = WorkerPool(2, timeout=0.1)
        with self.assertRaises(TransportError):
            pool.run(_one_leaves)

    def test_no_workers(self):
        with self.assertRaises(ValueError):
            WorkerPool(0)
