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


"""Test logging setup."""

__all__ = [
    'TestBraceLogRecord',
    'TestInitialize',
    ]


import os
import logging
import unittest

from contextlib import ExitStack
from pathlib import Path
from unittest.mock import patch
from utbnegf.config import Configuration
from utbnegf.helpers import temporary_directory
from utbnegf.logging import BraceLogRecord, initialize


def _record(name, msg, args):
    return BraceLogRecord(name, logging.INFO, __file__, 1, msg, args, None)


class TestBraceLogRecord(unittest.TestCase):
    def test_package_loggers_use_braces(self):
        record = _record('utbnegf.worker', 'rank {} took {:.1f} s', (3, 2.0))
        self.assertEqual(record.getMessage(), 'rank 3 took 2.0 s')

    def test_no_arguments(self):
        record = _record('utbnegf', 'literal {braces}', ())
        self.assertEqual(record.getMessage(), 'literal {braces}')

    def test_other_loggers_use_percent(self):
        for name in ('numpy', 'utbnegfish'):
            record = _record(name, 'value %s', ('x',))
            self.assertEqual(record.getMessage(), 'value x')


class TestInitialize(unittest.TestCase):
    def setUp(self):
        self._resources = ExitStack()
        self.addCleanup(self._resources.close)
        self.tmpdir = self._resources.enter_context(temporary_directory())
        self.config = Configuration()
        self._resources.enter_context(
            patch('utbnegf.config._config', self.config))
        self.config.system.logfile = os.path.join(
            self.tmpdir, 'logs', 'run.log')
        # Hand the loggers back to the test run afterwards.
        factory = logging.getLogRecordFactory()
        self.addCleanup(logging.setLogRecordFactory, factory)
        for name in ('utbnegf', 'utbnegf.worker'):
            log = logging.getLogger(name)
            self.addCleanup(self._restore, log, list(log.handlers),
                            log.level, log.propagate)

    def _restore(self, log, handlers, level, propagate):
        for handler in list(log.handlers):
            log.removeHandler(handler)
            handler.close()
        for handler in handlers:
            log.addHandler(handler)
        log.setLevel(level)
        log.propagate = propagate

    def test_log_file(self):
        initialize()
        log = logging.getLogger('utbnegf')
        log.error('grid has {} tuples', 1204)
        for handler in log.handlers:
            handler.flush()
        path = Path(self.tmpdir) / 'logs' / 'run.log'
        self.assertEqual(path.stat().st_mode & 0o777, 0o600)
        contents = path.read_text(encoding='utf-8')
        self.assertIn('[utbnegf]', contents)
        self.assertIn('grid has 1204 tuples', contents)
        self.assertFalse(log.propagate)

    def test_repeated_initialize_replaces_handlers(self):
        initialize()
        initialize()
        for name in ('utbnegf', 'utbnegf.worker'):
            self.assertEqual(len(logging.getLogger(name).handlers), 1)

    def test_levels(self):
        # The more verbose of the console and the configured level wins.
        initialize()
        self.assertEqual(logging.getLogger('utbnegf').level, logging.INFO)
        self.assertEqual(
            logging.getLogger('utbnegf.worker').level, logging.WARNING)
        initialize(verbosity=1)
        self.assertEqual(
            logging.getLogger('utbnegf.worker').level, logging.INFO)
        initialize(verbosity=2)
        log = logging.getLogger('utbnegf')
        self.assertEqual(log.level, logging.DEBUG)
        self.assertEqual(len(log.handlers), 2)
        self.assertIsInstance(log.handlers[1], logging.StreamHandler)

    def test_unwritable_log_file(self):
        fallback = logging.NullHandler()
        with patch('utbnegf.logging.make_handler',
                   side_effect=[PermissionError, fallback,
                                PermissionError, logging.NullHandler()]
                   ) as make_handler, \
                patch('utbnegf.logging.xdg_cache_home', self.tmpdir):
            initialize()
        path = make_handler.call_args_list[1][0][0]
        self.assertEqual(path, Path(self.tmpdir) / 'utb-negf' / 'run.log')
        self.assertIs(logging.getLogger('utbnegf').handlers[0], fallback)
