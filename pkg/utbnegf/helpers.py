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

"""Various and sundry helpers."""

__all__ = [
    'DEFAULT_DIRMODE',
    'ShapeError',
    'as_bool',
    'as_choice',
    'as_count',
    'as_float',
    'as_float_list',
    'as_fraction',
    'as_int',
    'as_loglevel',
    'as_nonnegative',
    'as_positive',
    'atomic',
    'check_length',
    'expand_path',
    'makedirs',
    'safe_remove',
    'temporary_directory',
    ]


import os
import re
import math
import shutil
import logging
import tempfile

from contextlib import ExitStack, contextmanager


DEFAULT_DIRMODE = 0o02700
TRUE_VALUES = ('yes', 'true', 'on', '1')
FALSE_VALUES = ('no', 'false', 'off', '0')


class ShapeError(ValueError):
    """A sequence or array does not have the expected size."""

    def __init__(self, what, expected, got):
        super().__init__(what, expected, got)
        self.what = what
        self.expected = expected
        self.got = got

    def __str__(self):
        return '{0.what}: expected {0.expected}, got {0.got}'.format(self)


def check_length(values, expected, what):
    """Raise `ShapeError` unless `len(values) == expected`."""
    if len(values) != expected:
        raise ShapeError(what, expected, len(values))


def safe_remove(path):
    """Like os.remove() but don't complain if the file doesn't exist."""
    try:
        os.remove(path)
    except (FileNotFoundError, IsADirectoryError, PermissionError):
        pass


@contextmanager
def atomic(dst, encoding='utf-8'):
    """Open a temporary file for writing using the given encoding.

    The context manager returns an open file object, into which you can write
    text or bytes depending on the encoding it was opened with.  Upon exit,
    the temporary file is moved atomically to the destination.  If an
    exception occurs, the temporary file is removed.

    :param dst: The path name of the target file.
    :param encoding: The encoding to use for the open file.  If None, then
        file is opened in binary mode.
    """
    directory = os.path.dirname(str(dst))
    fd, temp = tempfile.mkstemp(dir=directory)
    with ExitStack() as stack:
        stack.callback(safe_remove, temp)
        os.close(fd)
        mode = 'wb' if encoding is None else 'wt'
        with open(temp, mode, encoding=encoding) as fp:
            yield fp
        os.rename(temp, str(dst))


@contextmanager
def temporary_directory(*args, **kws):
    """A context manager that creates a temporary directory.

    The directory and all its contents are deleted when the context manager
    exits.  All positional and keyword arguments are passed to mkdtemp().
    """
    tempdir = tempfile.mkdtemp(*args, **kws)
    os.chmod(tempdir, kws.get('mode', DEFAULT_DIRMODE))
    try:
        yield tempdir
    finally:
        try:
            shutil.rmtree(tempdir)
        except FileNotFoundError:
            pass


def makedirs(dir, mode=DEFAULT_DIRMODE):
    os.makedirs(str(dir), mode=mode, exist_ok=True)


def expand_path(path):
    return os.path.abspath(os.path.expanduser(path))


def as_loglevel(value):
    level = getattr(logging, value.strip().upper(), None)
    if level is None or not isinstance(level, int):
        raise ValueError(value)
    return level


def as_bool(value):
    if isinstance(value, bool):
        return value
    folded = value.strip().lower()
    if folded in TRUE_VALUES:
        return True
    if folded in FALSE_VALUES:
        return False
    raise ValueError(value)


def as_float(value):
    result = float(value)
    if not math.isfinite(result):
        raise ValueError(value)
    return result


def as_positive(value):
    result = as_float(value)
    if result <= 0:
        raise ValueError('must be positive: {}'.format(value))
    return result


def as_nonnegative(value):
    result = as_float(value)
    if result < 0:
        raise ValueError('must not be negative: {}'.format(value))
    return result


def as_fraction(value):
    result = as_float(value)
    if not 0 <= result <= 1:
        raise ValueError('must be within [0, 1]: {}'.format(value))
    return result


def as_int(value):
    return int(value)


def as_count(value):
    result = int(value)
    if result < 0:
        raise ValueError('must not be negative: {}'.format(value))
    return result


def as_float_list(value):
    """Convert a comma and/or whitespace separated string to floats.

    The empty string converts to the empty list.
    """
    if isinstance(value, (list, tuple)):
        return [as_float(item) for item in value]
    return [as_float(item) for item in re.split(r'[,\s]+', value.strip())
            if item]


def as_choice(*choices):
    """Return a converter accepting only the given (case-folded) strings."""
    def converter(value):
        folded = value.strip().lower()
        if folded not in choices:
            raise ValueError('expected one of {}: {}'.format(
                '|'.join(choices), value))
        return folded
    return converter
