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

"""pytest wiring: the same test-run setup as the nose2 plugin."""

import os
import pytest

from unittest.mock import patch
from utbnegf.config import Configuration
from utbnegf.helpers import temporary_directory
from utbnegf.logging import initialize


@pytest.fixture(scope='session', autouse=True)
def _utbnegf_test_run():
    # Mirrors UtbNegfPlugin.startTestRun/afterTestRun in utbnegf/testing/nose.py.
    with temporary_directory(prefix='utbnegf-tests.') as scratch:
        config = Configuration()
        with patch('utbnegf.config._config', config):
            config.system.logfile = os.path.join(scratch, 'run.log')
            initialize(verbosity=0)
        yield
