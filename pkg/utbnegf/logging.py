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


"""Logging for the command line tool, the workers and the test suite.

Everything below the `utbnegf` logger is written with {}-style messages;
the record factory only formats those, other libraries keep %-style.
"""

__all__ = [
    'BraceLogRecord',
    'initialize',
    'make_handler',
    ]


import sys
import logging

from pathlib import Path
from utbnegf.config import config
from utbnegf.helpers import DEFAULT_DIRMODE
from xdg.BaseDirectory import xdg_cache_home


LOG_FORMAT = '[{name}] {asctime} ({process:d}) {message}'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
LOG_FILE_MODE = 0o600
# Console verbosity from the number of -v flags; anything above is DEBUG.
VERBOSITY = {0: logging.ERROR, 1: logging.INFO}
LOGGERS = (
    ('utbnegf', 'loglevel'),
    ('utbnegf.worker', 'worker_loglevel'),
    )


class BraceLogRecord(logging.LogRecord):
    def getMessage(self):
        if self.name != 'utbnegf' and not self.name.startswith('utbnegf.'):
            return super().getMessage()
        if not self.args:
            return str(self.msg)
        return str(self.msg).format(*self.args)


def _formatter():
    return logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT, style='{')


def make_handler(path):
    """A UTF-8 file handler appending to `path`, created owner-only."""
    path.parent.mkdir(DEFAULT_DIRMODE, parents=True, exist_ok=True)
    path.touch(LOG_FILE_MODE, exist_ok=True)
    handler = logging.FileHandler(str(path), encoding='utf-8')
    handler.setFormatter(_formatter())
    return handler


def _log_file_handler():
    try:
        return make_handler(Path(config.system.logfile))
    except PermissionError:
        return make_handler(Path(xdg_cache_home) / 'utb-negf' / 'run.log')


def initialize(*, verbosity=0):
    """Point the utbnegf loggers at the log file, and at stderr if verbose.

    Calling this again replaces the handlers of the earlier call.
    """
    logging.setLogRecordFactory(BraceLogRecord)
    console = VERBOSITY.get(verbosity, logging.DEBUG)
    for name, key in LOGGERS:
        level = min(console, getattr(config.system, key))
        log = logging.getLogger(name)
        for handler in list(log.handlers):
            log.removeHandler(handler)
            handler.close()
        handlers = [_log_file_handler()]
        if verbosity > 0:
            handlers.append(logging.StreamHandler(stream=sys.stderr))
            handlers[-1].setFormatter(_formatter())
        for handler in handlers:
            handler.setLevel(level)
            log.addHandler(handler)
        log.setLevel(level)
        log.propagate = False
