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

"""Nested tic/toc timers, their XML form, and the memory step study."""

__all__ = [
    'MemoryStep',
    'ProfileNode',
    'Profiler',
    'ProfilerError',
    'emit_profile',
    'fit_affine',
    'measure_series_memory',
    'merge_profiles',
    'write_profile',
    ]


import psutil
import logging
import tracemalloc
import numpy as np

from collections import namedtuple
from contextlib import contextmanager
from dataclasses import dataclass, field
from time import perf_counter
from utbnegf.helpers import atomic
from xml.etree import ElementTree


log = logging.getLogger('utbnegf')


class ProfilerError(Exception):
    """toc() does not match the innermost open timer."""

    def __init__(self, name, stack):
        super().__init__(name, stack)
        self.name = name
        self.stack = list(stack)

    def __str__(self):
        if len(self.stack) == 0:
            return 'toc({0.name!r}) without any open timer'.format(self)
        return 'toc({0.name!r}) but {1!r} is open; open timers: {2}'.format(
            self, self.stack[-1], ' > '.join(self.stack))


@dataclass(eq=False)
class ProfileNode:
    name: str
    wall_seconds: float = 0.0
    peak_memory_bytes: int = 0
    calls: int = 0
    children: list = field(default_factory=list)
    rank: int = None

    def child(self, name):
        for node in self.children:
            if node.name == name:
                return node
        node = ProfileNode(name)
        self.children.append(node)
        return node

    def walk(self):
        yield self
        for node in self.children:
            yield from node.walk()


def _rss():
    return psutil.Process().memory_info().rss


class Profiler:
    """One worker's timer tree.

    Repeated timers with the same name under the same parent accumulate into
    one node.  Memory is the process resident set size, sampled at every
    tic and toc.
    """

    def __init__(self, rank=0, *, enabled=True):
        self.enabled = enabled
        self.root = ProfileNode('worker', rank=rank)
        self._open = []
        self._started = perf_counter()

    def __repr__(self):                             # pragma: no cover
        return '<Profiler rank={} open={}>'.format(
            self.root.rank, [node.name for node, start in self._open])

    @property
    def stack(self):
        return [node.name for node, start in self._open]

    def tic(self, name):
        if not self.enabled:
            return
        parent = self._open[-1][0] if self._open else self.root
        node = parent.child(name)
        node.calls += 1
        node.peak_memory_bytes = max(node.peak_memory_bytes, _rss())
        self._open.append((node, perf_counter()))

    def toc(self, name):
        if not self.enabled:
            return
        if len(self._open) == 0 or self._open[-1][0].name != name:
            raise ProfilerError(name, self.stack)
        node, start = self._open.pop()
        node.wall_seconds += perf_counter() - start
        node.peak_memory_bytes = max(node.peak_memory_bytes, _rss())
        if self._open:
            parent = self._open[-1][0]
            parent.peak_memory_bytes = max(
                parent.peak_memory_bytes, node.peak_memory_bytes)

    @contextmanager
    def timer(self, name):
        self.tic(name)
        try:
            yield
        finally:
            self.toc(name)

    def finish(self):
        """Close the tree and return its root."""
        if len(self._open) > 0:
            raise ProfilerError(None, self.stack)
        self.root.wall_seconds = perf_counter() - self._started
        self.root.calls = 1
        self.root.peak_memory_bytes = max(
            [_rss()] + [node.peak_memory_bytes for node in self.root.walk()])
        return self.root


def _merge(into, node):
    into.wall_seconds += node.wall_seconds
    into.peak_memory_bytes = max(into.peak_memory_bytes,
                                 node.peak_memory_bytes)
    into.calls += node.calls
    for child in node.children:
        _merge(into.child(child.name), child)


def merge_profiles(runs):
    """Fold the per-worker trees of several runs into one tree per rank.

    `runs` is a sequence of lists of worker trees.  Nodes with the same
    path accumulate their times and calls and keep the largest peak.
    """
    merged = {}
    for trees in runs:
        for tree in trees:
            if tree.rank not in merged:
                merged[tree.rank] = ProfileNode(tree.name, rank=tree.rank)
            _merge(merged[tree.rank], tree)
    return [merged[rank] for rank in sorted(merged)]


def _element(node, parent=None):
    attributes = dict(
        name=node.name,
        wall_s='{:.6f}'.format(node.wall_seconds),
        mem_peak_b=str(node.peak_memory_bytes),
        calls=str(node.calls),
        )
    if node.rank is not None:
        attributes['rank'] = str(node.rank)
    if parent is None:
        element = ElementTree.Element('timer', attributes)
    else:
        element = ElementTree.SubElement(parent, 'timer', attributes)
    for child in node.children:
        _element(child, element)
    return element


def emit_profile(trees):
    """Return the XML document of one timer tree per worker.

    The document carries measured wall times and memory peaks, so it differs
    between otherwise identical runs; reruns are byte-identical only with
    `[output]profile: no`.
    """
    document = ElementTree.Element('profile', dict(workers=str(len(trees))))
    for tree in sorted(trees, key=lambda node: node.rank or 0):
        document.append(_element(tree))
    return ElementTree.tostring(document, encoding='unicode')


def write_profile(trees, path):
    with atomic(path) as fp:
        fp.write('<?xml version="1.0" encoding="utf-8"?>\n')
        fp.write(emit_profile(trees))
        fp.write('\n')
    log.info('Profile written to {}', path)


MemoryStep = namedtuple('MemoryStep', 'tuples_in_series peak_bytes')


def measure_series_memory(solve, counts, *, store=True):
    """Measure peak traced memory while solving tuples one after another.

    `solve(n)` solves the n-th tuple and returns its result.  With `store`
    every result is kept until the series ends, as happens when a worker
    holds all of its tuples at once; without it each result is dropped right
    away.
    """
    steps = []
    for count in counts:
        tracemalloc.start()
        try:
            kept = []
            for n in range(count):
                result = solve(n)
                if store:
                    kept.append(result)
                del result
            current, peak = tracemalloc.get_traced_memory()
        finally:
            tracemalloc.stop()
        del kept
        steps.append(MemoryStep(count, peak))
    return steps


def fit_affine(xs, ys):
    """Least-squares line through the points; returns (slope, intercept, r2).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    residual = ys - (slope * xs + intercept)
    total = np.sum((ys - ys.mean()) ** 2)
    r2 = 1.0 if total == 0 else 1.0 - np.sum(residual ** 2) / total
    return float(slope), float(intercept), float(r2)
