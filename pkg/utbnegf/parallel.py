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

"""Distribute (E, k) tuples over workers and exchange their diagonals.

Each worker owns a set of tuples.  A self-energy at energy E needs the
momentum integral of the diagonals at E and at E +/- E_op, so owners of an
energy receive every tuple of the rows they read from whoever owns it.
All tasks follow one global order, and every sum is finished in tuple index
order, so results do not depend on how many workers there are or when their
messages arrive.
"""

__all__ = [
    'CommSchedule',
    'Partition',
    'RowSums',
    'ScheduleError',
    'Task',
    'WorkerPool',
    'allreduce_max',
    'build_comm_schedule',
    'estimate_cost',
    'execute_round',
    'partition_tuples',
    ]


import heapq
import logging
import threading
import multiprocessing
import numpy as np

from collections import defaultdict, namedtuple
from dataclasses import dataclass
from utbnegf.transport import PayloadKind, TransportError, get_transport


log = logging.getLogger('utbnegf')

DIAGONAL_KINDS = (PayloadKind.gr_diag, PayloadKind.gl_diag)


class ScheduleError(Exception):
    """The grid's optical stencil has entries no schedule can serve."""

    def __init__(self, unresolved):
        super().__init__(unresolved)
        self.unresolved = unresolved

    def __str__(self):
        return 'unresolved optical shifts at energies {0.unresolved}'.format(
            self)


def estimate_cost(tuple_index, grid, ranks):
    """Relative cost of solving one tuple: the dense block work, sum r**3.

    Every tuple of a device costs the same; the arguments are kept so that
    per-tuple models can be swapped in.
    """
    return float(sum(rank ** 3 for rank in ranks))


@dataclass(frozen=True)
class Partition:
    # assignment[t] is the worker owning tuple t.
    assignment: tuple
    costs: tuple
    n_workers: int

    def tuples_of(self, worker):
        return [index for index, owner in enumerate(self.assignment)
                if owner == worker]

    def loads(self):
        loads = [0.0] * self.n_workers
        for owner, cost in zip(self.assignment, self.costs):
            loads[owner] += cost
        return loads

    @property
    def imbalance(self):
        """max_load / mean_load - 1."""
        loads = self.loads()
        mean = sum(loads) / self.n_workers
        if mean == 0:
            return 0.0
        return max(loads) / mean - 1


def partition_tuples(grid, costs, n_workers):
    """Longest processing time first, ties broken by lower tuple index.

    Each tuple goes to the least loaded worker so far, ties broken by lower
    worker id.  Surplus workers may end up with nothing to do.
    """
    if n_workers < 1:
        raise ValueError('need at least one worker: {}'.format(n_workers))
    if len(costs) != grid.n_tuples:
        raise ValueError('{} costs for {} tuples'.format(
            len(costs), grid.n_tuples))
    order = sorted(range(len(costs)), key=lambda index: (-costs[index], index))
    heap = [(0.0, worker) for worker in range(n_workers)]
    assignment = [None] * len(costs)
    for index in order:
        load, worker = heapq.heappop(heap)
        assignment[index] = worker
        heapq.heappush(heap, (load + costs[index], worker))
    partition = Partition(tuple(assignment), tuple(costs), n_workers)
    log.debug('Partitioned {} tuples over {} workers, imbalance {:.3f}',
              len(costs), n_workers, partition.imbalance)
    return partition


Task = namedtuple('Task', 'energy momentum kind sender receiver')


@dataclass(frozen=True)
class CommSchedule:
    # Every exchange, in the one global order.
    tasks: tuple
    # Per worker, the tasks it sends or receives, in global order.
    views: tuple

    def __len__(self):
        return len(self.tasks)

    def wait_for_edges(self):
        """Edges (a, b): task b cannot start before task a completes."""
        edges = set()
        for view in self.views:
            for before, after in zip(view, view[1:]):
                edges.add((before, after))
        return edges

    def is_acyclic(self):
        """Topologically sort the wait-for graph of the tasks."""
        edges = self.wait_for_edges()
        successors = defaultdict(list)
        indegree = [0] * len(self.tasks)
        for before, after in edges:
            successors[before].append(after)
            indegree[after] += 1
        ready = [node for node, degree in enumerate(indegree) if degree == 0]
        visited = 0
        while ready:
            node = ready.pop()
            visited += 1
            for after in successors[node]:
                indegree[after] -= 1
                if indegree[after] == 0:
                    ready.append(after)
        return visited == len(self.tasks)

    def pairwise_consistent(self):
        """Both endpoints see their shared tasks in the same order."""
        n_workers = len(self.views)
        for a in range(n_workers):
            for b in range(a + 1, n_workers):
                shared = {index for index in self.views[a]
                          if {self.tasks[index].sender,
                              self.tasks[index].receiver} == {a, b}}
                seen_a = [index for index in self.views[a] if index in shared]
                seen_b = [index for index in self.views[b] if index in shared]
                if seen_a != seen_b:
                    return False
        return True


def needed_rows(partition, grid, worker):
    """The energy rows whose diagonals `worker` needs."""
    rows = set()
    for index in partition.tuples_of(worker):
        energy, momentum = grid.split(index)
        rows.update(grid.stencil_rows(energy))
    return sorted(rows)


def build_comm_schedule(partition, grid):
    unresolved = []
    for energy, (plus, minus) in enumerate(grid.optical_shift_indices):
        for shift in (plus, minus):
            if shift is None:
                continue
            if not (0 <= shift.lo < grid.n_energies and
                    0 <= shift.hi < grid.n_energies):
                unresolved.append(energy)
    if len(unresolved) > 0:
        raise ScheduleError(sorted(set(unresolved)))
    tasks = set()
    for receiver in range(partition.n_workers):
        for energy in needed_rows(partition, grid, receiver):
            for momentum in range(grid.n_momenta):
                sender = partition.assignment[
                    grid.tuple_index(energy, momentum)]
                if sender == receiver:
                    continue
                for kind in DIAGONAL_KINDS:
                    tasks.add(Task(energy, momentum, kind, sender, receiver))
    ordered = tuple(sorted(tasks))
    views = [[] for worker in range(partition.n_workers)]
    for position, task in enumerate(ordered):
        views[task.sender].append(position)
        views[task.receiver].append(position)
    return CommSchedule(ordered, tuple(tuple(view) for view in views))


# The momentum integrals of the retarded and lesser diagonals of one row.
RowSums = namedtuple('RowSums', 'retarded lesser')


def execute_round(schedule, rank, terms, endpoint, grid, partition):
    """Exchange weighted diagonals and finish the per-row momentum sums.

    `terms` maps each locally owned tuple index to a dict of
    {PayloadKind: w_k * diagonal}; weighting is the local work that happens
    before any communication.  All of this worker's sends go out first
    (they never block on the peer), then receives are taken in schedule
    order.  The result maps every needed row to its RowSums, summed over
    momenta in index order starting from zero.
    """
    tasks = schedule.tasks
    view = schedule.views[rank] if rank < len(schedule.views) else ()
    for position in view:
        task = tasks[position]
        if task.sender == rank:
            index = grid.tuple_index(task.energy, task.momentum)
            endpoint.send(task.receiver, index, task.kind,
                          terms[index][task.kind])
    received = {}
    for position in view:
        task = tasks[position]
        if task.receiver == rank:
            index = grid.tuple_index(task.energy, task.momentum)
            received[(index, task.kind)] = endpoint.recv(
                task.sender, index, task.kind, task=task)
    sums = {}
    for row in needed_rows(partition, grid, rank):
        totals = []
        for kind in DIAGONAL_KINDS:
            total = None
            for momentum in range(grid.n_momenta):
                index = grid.tuple_index(row, momentum)
                if index in terms:
                    value = terms[index][kind]
                else:
                    value = received[(index, kind)]
                total = 0.0 * value + value if total is None else total + value
            totals.append(total)
        sums[row] = RowSums(*totals)
    return sums


def allreduce_max(endpoint, rank, n_workers, value, tag):
    """Every worker gets the maximum of everybody's `value`.

    Worker 0 gathers in rank order and sends the result back out.  `tag` must
    be unique per call within a round of collectives.
    """
    if n_workers == 1:
        return value
    gather, scatter = 2 * tag, 2 * tag + 1
    if rank == 0:
        result = value
        for peer in range(1, n_workers):
            other = endpoint.recv(peer, gather, PayloadKind.control)
            result = max(result, float(other[0].real))
        for peer in range(1, n_workers):
            endpoint.send(peer, scatter, PayloadKind.control,
                          np.array([result], dtype=complex))
        return result
    endpoint.send(0, gather, PayloadKind.control,
                  np.array([value], dtype=complex))
    return float(endpoint.recv(0, scatter, PayloadKind.control)[0].real)


class _Outcome:
    def __init__(self):
        self.result = None
        self.error = None


def _run_child(program, rank, transport, args, connection):
    endpoint = transport.endpoint(rank)
    try:
        result = program(rank, endpoint, *args)
    except Exception as error:
        log.exception('Worker {} failed', rank)
        connection.send(('error', error))
    else:
        connection.send(('ok', result))
    finally:
        endpoint.close()
        connection.close()


class WorkerPool:
    """Run one SPMD program on `n_workers` share-nothing workers.

    Workers are threads talking through in-process queues, or forked
    processes talking through local sockets.  The program is called as
    program(rank, endpoint, *args) and `run()` returns the per-rank results.
    """

    def __init__(self, n_workers, transport='inprocess', *, timeout=60.0,
                 max_delay=0.0, seed=None):
        if n_workers < 1:
            raise ValueError('need at least one worker: {}'.format(n_workers))
        self.n_workers = n_workers
        self.transport = transport
        self.timeout = timeout
        self.max_delay = max_delay
        self.seed = seed

    def __repr__(self):                             # pragma: no cover
        return '<WorkerPool {0.n_workers} x {0.transport}>'.format(self)

    def run(self, program, *args):
        if self.transport == 'socket' and self.n_workers > 1:
            return self._run_processes(program, args)
        return self._run_threads(program, args)

    def _run_threads(self, program, args):
        transport = get_transport(
            'inprocess', self.n_workers, timeout=self.timeout,
            max_delay=self.max_delay, seed=self.seed)
        outcomes = [_Outcome() for rank in range(self.n_workers)]

        def target(rank):
            endpoint = transport.endpoint(rank)
            try:
                outcomes[rank].result = program(rank, endpoint, *args)
            except Exception as error:
                outcomes[rank].error = error
            finally:
                endpoint.close()

        if self.n_workers == 1:
            target(0)
        else:
            threads = [threading.Thread(target=target, args=(rank,),
                                        name='worker-{}'.format(rank))
                       for rank in range(self.n_workers)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()
        transport.close()
        return self._collect([(outcome.error is None,
                               outcome.error or outcome.result)
                              for outcome in outcomes])

    def _run_processes(self, program, args):
        context = multiprocessing.get_context('fork')
        transport = get_transport(
            'socket', self.n_workers, timeout=self.timeout)
        children = []
        for rank in range(self.n_workers):
            receiver, sender = context.Pipe(duplex=False)
            process = context.Process(
                target=_run_child,
                args=(program, rank, transport, args, sender),
                name='worker-{}'.format(rank))
            process.start()
            sender.close()
            children.append((rank, process, receiver))
        transport.close()
        outcomes = []
        for rank, process, receiver in children:
            try:
                status, payload = receiver.recv()
            except EOFError:
                status, payload = 'error', TransportError(
                    ('worker', rank), 'worker process died')
            outcomes.append((status == 'ok', payload))
            receiver.close()
        for rank, process, receiver in children:
            process.join()
        return self._collect(outcomes)

    def _collect(self, outcomes):
        errors = [payload for ok, payload in outcomes if not ok]
        if len(errors) > 0:
            # A transport failure on one worker usually leaves its peers
            # timing out as well; report the root cause when there is one.
            for error in errors:
                if not isinstance(error, TransportError):
                    raise error
            raise errors[0]
        return [payload for ok, payload in outcomes]
