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

"""nose2 plugin for the utb-negf test suite."""

__all__ = [
    'UtbNegfPlugin',
    ]


import os
import re

from nose2.events import Plugin
from utbnegf.config import Configuration
from utbnegf.helpers import temporary_directory
from utbnegf.logging import initialize
from unittest.mock import patch


class UtbNegfPlugin(Plugin):
    configSection = 'utbnegf'

    def __init__(self):
        super().__init__()
        self.patterns = []
        self.verbosity = 0
        self.log_file = None
        self._tempdir = None
        self.addArgument(self.patterns, 'P', 'pattern',
                         'Only run tests whose full name matches')
        self.addFlag(self._louder, 'V', 'verbosity',
                     'Increase utb-negf log verbosity')
        self.addOption(self._set_log_file, 'L', 'logfile',
                       'Log the test run into this file', nargs=1)
        # Test modules import utbnegf.testing.helpers after the command line
        # is parsed, so the environment switch is seen in time.
        self.addFlag(self._acceptance, 'A', 'acceptance',
                     'Also run the acceptance-scale checks')

    def _louder(self, ignore):
        self.verbosity += 1

    def _set_log_file(self, path):
        self.log_file = path[0]

    def _acceptance(self, ignore):
        os.environ['UTBNEGF_ACCEPTANCE'] = '1'

    def startTestRun(self, event):
        self._tempdir = temporary_directory(prefix='utbnegf-tests.')
        scratch = self._tempdir.__enter__()
        config = Configuration()
        with patch('utbnegf.config._config', config):
            config.system.logfile = (
                self.log_file or os.path.join(scratch, 'run.log'))
            initialize(verbosity=self.verbosity)

    def afterTestRun(self, event):
        if self._tempdir is not None:
            self._tempdir.__exit__(None, None, None)
            self._tempdir = None

    def _matches(self, name):
        return any(re.search(pattern, name) for pattern in self.patterns)

    def getTestCaseNames(self, event):
        if len(self.patterns) == 0:
            return
        class_name = '{0.__module__}.{0.__name__}'.format(event.testCase)
        if self._matches(class_name):
            return
        for name in filter(event.isTestMethod, dir(event.testCase)):
            if not self._matches('{}.{}'.format(class_name, name)):
                event.excludedNames.append(name)
