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

"""The Bag class, one per configuration section."""

__all__ = [
    'Bag',
    'BadValue',
    ]


import keyword

from collections import namedtuple


COMMASPACE = ', '


# A value that a converter rejected.  The bag keeps its previous value for
# the key and remembers the rejection so that every bad value in every file
# can be reported together.
BadValue = namedtuple('BadValue', 'key value reason')


def _identity(value):
    return value


def _attribute_name(key):
    name = key.replace('-', '_')
    return name + '_' if keyword.iskeyword(name) else name


class Bag:
    """Converted configuration values, as attributes and as items.

    Attributes are the keys with dashes turned into underscores and a
    trailing underscore on Python keywords; items use the keys as written.
    No key may be named `update`, `keys`, `get`, `errors` or `as_dict`.
    """

    def __init__(self, *, converters=None, **kws):
        self._converters = dict(converters or {})
        self._raw = {}
        self._values = {}
        self._errors = []
        self._load_items(kws)

    def update(self, *, converters=None, **kws):
        """Load new values, returning the list of rejected ones."""
        if converters is not None:
            self._converters.update(converters)
        return self._load_items(kws)

    def _convert(self, key, value):
        return self._converters.get(key, _identity)(value)

    def _store(self, key, value):
        self._values[key] = value
        self.__dict__[_attribute_name(key)] = value

    def _load_items(self, kws):
        rejected = []
        for key, value in kws.items():
            try:
                converted = self._convert(key, value)
            except (TypeError, ValueError) as error:
                rejected.append(BadValue(key, value, str(error) or 'invalid'))
                continue
            self._raw[key] = value
            self._store(key, converted)
        self._errors.extend(rejected)
        return rejected

    @property
    def errors(self):
        return list(self._errors)

    def __repr__(self):                             # pragma: no cover
        return '<Bag: {}>'.format(COMMASPACE.join(sorted(self._values)))

    def __setitem__(self, key, value):
        if key in self._raw:
            raise ValueError('Attributes are immutable: {}'.format(key))
        self._store(key, self._convert(key, value))

    def __getitem__(self, key):
        return self._values[key]

    def keys(self):
        yield from self._values

    __iter__ = keys

    def get(self, key, default=None):
        return self.__dict__.get(_attribute_name(key), default)

    def as_dict(self):
        return dict(self._values)

    # Worker processes receive the configuration by pickle.  Converters may
    # be closures, so only the converted values travel.

    def __getstate__(self):
        return self._raw, self._values

    def __setstate__(self, state):
        raw, values = state
        self._converters = {}
        self._raw = {}
        self._values = {}
        self._errors = []
        for key, value in values.items():
            self._store(key, value)
        self._raw.update(raw)
