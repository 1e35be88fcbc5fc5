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

"""Read the run configuration."""

__all__ = [
    'Configuration',
    'ConfigurationError',
    'Problem',
    'config',
    ]


import re

from collections import namedtuple
from configparser import ConfigParser, Error as ParserError
from pathlib import Path
from utbnegf.bag import Bag
from utbnegf.helpers import (
    as_bool, as_choice, as_count, as_float, as_float_list, as_fraction,
    as_int, as_loglevel, as_nonnegative, as_positive, expand_path)


SECTIONS = (
    'device', 'materials', 'roughness', 'scattering', 'grid', 'bias',
    'poisson', 'solver', 'parallel', 'ensemble', 'output', 'system',
    )

NL = '\n'
DEFAULTS_FILE = '<defaults>'

SECTION_RE = re.compile(r'^\s*\[(?P<section>[^\]]+)\]')
KEY_RE = re.compile(r'^(?P<key>[^\s#;=:\[][^=:]*?)\s*[=:]')


# Every value is written the way it would appear in an ini file; the section
# converters turn them into Python values.  The defaults describe the rank-12
# benchmark device.  Material and phonon constants are illustrative only and
# are meant to be supplied by the user.
DEFAULTS = dict(
    device=dict(
        n_slabs='20',
        sites_per_slab='12',
        layers='3',
        lattice_constant_nm='0.543',
        cross_section_area_nm2='0.0737',
        orbitals_per_site='1',
        alloy_fraction='0.1',
        disorder_mode='vca',
        seed='1',
        ),
    materials=dict(
        onsite_si_ev='5.5',
        onsite_ge_ev='5.3',
        hopping_si_ev='-1.0',
        hopping_ge_ev='-0.95',
        hopping_sige_ev='-0.975',
        orbital_splitting_ev='0.2',
        interorbital_hopping_ev='0.0',
        ),
    roughness=dict(
        amplitude_layers='0',
        correlation_length_nm='1.0',
        seed='1',
        ),
    scattering=dict(
        enabled='yes',
        acoustic_potential_ev='9.5',
        sound_velocity_nm_per_ps='9.0',
        debye_energy_ev='0.0055',
        optical_energy_ev='0.06',
        optical_potential_ev_per_nm='110.0',
        mass_density_amu_per_nm3='1400.0',
        temperature_k='300.0',
        acoustic_scale='1.0',
        optical_scale='1.0',
        ),
    grid=dict(
        energy_min_ev='0.0',
        energy_max_ev='0.6',
        points_per_optical='3',
        padding_optical='3',
        momenta='4',
        adaptive_budget='0',
        ),
    bias=dict(
        gate_voltages_v='0.0, 0.1, 0.2, 0.3, 0.4',
        drain_voltage_v='0.1',
        source_mu_ev='0.2',
        gate_workfunction_v='0.0',
        ),
    poisson=dict(
        oxide_layers='2',
        oxide_permittivity='3.9',
        body_permittivity='11.7',
        donor_density_per_nm3='0.0',
        gate_start_slab='5',
        gate_end_slab='14',
        ),
    solver=dict(
        born_mixing='1.0',
        born_tolerance='1e-4',
        born_max_iterations='100',
        scf_mixing='0.1',
        scf_tolerance_v='1e-5',
        scf_max_iterations='100',
        lead_eta_ev='1e-6',
        lead_tolerance='1e-12',
        lead_max_iterations='200',
        device_eta_ev='0.0',
        spin_degeneracy='2',
        ),
    parallel=dict(
        workers='1',
        transport='inprocess',
        timeout='60.0',
        ),
    ensemble=dict(
        samples='0',
        base_seed='1',
        ),
    output=dict(
        directory='./utb-negf-out',
        timings='yes',
        profile='yes',
        ),
    system=dict(
        logfile='/tmp/utb-negf/run.log',
        loglevel='info',
        worker_loglevel='warning',
        ),
    )


CONVERTERS = dict(
    device=dict(
        n_slabs=as_count,
        sites_per_slab=as_count,
        layers=as_count,
        lattice_constant_nm=as_positive,
        cross_section_area_nm2=as_positive,
        orbitals_per_site=as_count,
        alloy_fraction=as_fraction,
        disorder_mode=as_choice('vca', 'random'),
        seed=as_int,
        ),
    materials={key: as_float for key in DEFAULTS['materials']},
    roughness=dict(
        amplitude_layers=as_count,
        correlation_length_nm=as_positive,
        seed=as_int,
        ),
    scattering=dict(
        enabled=as_bool,
        acoustic_potential_ev=as_nonnegative,
        sound_velocity_nm_per_ps=as_positive,
        debye_energy_ev=as_positive,
        optical_energy_ev=as_positive,
        optical_potential_ev_per_nm=as_nonnegative,
        mass_density_amu_per_nm3=as_positive,
        temperature_k=as_positive,
        acoustic_scale=as_nonnegative,
        optical_scale=as_nonnegative,
        ),
    grid=dict(
        energy_min_ev=as_float,
        energy_max_ev=as_float,
        points_per_optical=as_count,
        padding_optical=as_nonnegative,
        momenta=as_count,
        adaptive_budget=as_count,
        ),
    bias=dict(
        gate_voltages_v=as_float_list,
        drain_voltage_v=as_float,
        source_mu_ev=as_float,
        gate_workfunction_v=as_float,
        ),
    poisson=dict(
        oxide_layers=as_count,
        oxide_permittivity=as_positive,
        body_permittivity=as_positive,
        donor_density_per_nm3=as_float,
        gate_start_slab=as_count,
        gate_end_slab=as_count,
        ),
    solver=dict(
        born_mixing=as_positive,
        born_tolerance=as_positive,
        born_max_iterations=as_count,
        scf_mixing=as_positive,
        scf_tolerance_v=as_positive,
        scf_max_iterations=as_count,
        lead_eta_ev=as_positive,
        lead_tolerance=as_positive,
        lead_max_iterations=as_count,
        device_eta_ev=as_nonnegative,
        spin_degeneracy=as_positive,
        ),
    parallel=dict(
        workers=as_count,
        transport=as_choice('inprocess', 'socket'),
        timeout=as_positive,
        ),
    ensemble=dict(
        samples=as_count,
        base_seed=as_int,
        ),
    output=dict(
        directory=expand_path,
        timings=as_bool,
        profile=as_bool,
        ),
    system=dict(
        logfile=expand_path,
        loglevel=as_loglevel,
        worker_loglevel=as_loglevel,
        ),
    )


# One configuration problem.  `line` is 0 when the problem involves a value
# that no file set.
Problem = namedtuple('Problem', 'file line section key message')


class ConfigurationError(Exception):
    """The configuration has one or more problems."""

    def __init__(self, problems):
        super().__init__(problems)
        self.problems = list(problems)

    def __str__(self):
        return NL.join(
            '{0.file}:{0.line}: [{0.section}]{0.key}: {0.message}'.format(
                problem)
            for problem in self.problems)


def _key_lines(path):
    """Map (section, key) to the line number where the key is set."""
    lines = {}
    section = None
    with open(str(path), encoding='utf-8') as fp:
        for lineno, line in enumerate(fp, start=1):
            mo = SECTION_RE.match(line)
            if mo is not None:
                section = mo.group('section').strip()
                lines[(section, None)] = lineno
                continue
            mo = KEY_RE.match(line)
            if mo is not None and section is not None:
                lines[(section, mo.group('key').strip().lower())] = lineno
    return lines


class SafeConfigParser(ConfigParser):
    """Like ConfigParser, but with default empty sections.

    This makes the **style of loading keys/values into the Bag objects a
    little cleaner since it doesn't have to worry about KeyErrors when a
    configuration file doesn't contain a section, which is allowed.
    """

    def __init__(self, *args, **kws):
        kws.setdefault('interpolation', None)
        super().__init__(*args, **kws)
        for section in SECTIONS:
            self[section] = {}


class Configuration:
    def __init__(self, path=None):
        self._set_defaults()
        self.config_path = None
        self.ini_files = []
        if path is not None:
            self.load(path)

    def _set_defaults(self):
        self.problems = []
        # (section, key) -> (file, line) of the last file that set it.
        self._origins = {}
        # The unconverted text of every accepted value.  Bags are immutable
        # once a key is set, so each file rebuilds the bags from this.
        self._raw = {section: dict(DEFAULTS[section]) for section in SECTIONS}
        for section in SECTIONS:
            self._make_bag(section)

    def _make_bag(self, section):
        bag = Bag(converters=CONVERTERS[section], **self._raw[section])
        # The raw values were all accepted before.
        assert len(bag.errors) == 0, bag.errors
        setattr(self, section, bag)

    def _load_file(self, path):
        parser = SafeConfigParser()
        str_path = str(path)
        try:
            parser.read(str_path, encoding='utf-8')
        except ParserError as error:
            lineno = getattr(error, 'lineno', None)
            if lineno is None:
                # ParsingError collects (lineno, line) pairs.
                errors = getattr(error, 'errors', None) or [(0, None)]
                lineno = errors[0][0]
            self.problems.append(Problem(
                str_path, lineno, '', '', error.message.splitlines()[0]))
            return
        self.ini_files.append(path)
        lines = _key_lines(path)
        for section in parser.sections():
            if section not in SECTIONS:
                self.problems.append(Problem(
                    str_path, lines.get((section, None), 0), section, '',
                    'unknown section'))
                continue
            scratch = Bag(converters=CONVERTERS[section])
            for key, value in parser[section].items():
                line = lines.get((section, key), 0)
                if key not in DEFAULTS[section]:
                    self.problems.append(Problem(
                        str_path, line, section, key, 'unknown key'))
                    continue
                rejected = scratch.update(**{key: value})
                if len(rejected) > 0:
                    self.problems.append(Problem(
                        str_path, line, section, key,
                        'bad value {!r}: {}'.format(
                            value, rejected[0].reason)))
                    continue
                self._raw[section][key] = value
                self._origins[(section, key)] = (str_path, line)
            self._make_bag(section)

    def load(self, path):
        """Load a single .ini file or a config.d directory.

        In a directory, only files named like `NN_name.ini` are read, in
        numeric order.
        """
        if self.config_path is not None:
            raise RuntimeError('Configuration already loaded; use .reload()')
        path = Path(path)
        self.config_path = path
        if path.is_file():
            self._load_file(path)
            return
        if not path.is_dir():
            raise TypeError(
                '.load() requires a file or directory: {}'.format(path))
        candidates = []
        for child in path.glob('*.ini'):
            order, _, base = child.stem.partition('_')
            if len(_) == 0:
                continue
            try:
                serial = int(order)
            except ValueError:
                continue
            candidates.append((serial, child))
        for serial, child in sorted(candidates):
            self._load_file(child)

    def reload(self):
        """Reload the configuration file or directory."""
        path = self.config_path
        self.ini_files = []
        self.config_path = None
        self._set_defaults()
        self.load(path)

    def _problem(self, section, key, message):
        file, line = self._origins.get((section, key), (DEFAULTS_FILE, 0))
        return Problem(file, line, section, key, message)

    def check(self):
        """Return every problem: load-time ones plus cross-field ones."""
        problems = list(self.problems)
        add = problems.append
        device = self.device
        if device.n_slabs < 3:
            add(self._problem('device', 'n_slabs', 'must be at least 3'))
        if device.sites_per_slab < 1:
            add(self._problem(
                'device', 'sites_per_slab', 'must be at least 1'))
        if device.layers < 1:
            add(self._problem('device', 'layers', 'must be at least 1'))
        elif device.sites_per_slab % device.layers != 0:
            add(self._problem(
                'device', 'sites_per_slab',
                'must be a multiple of layers ({})'.format(device.layers)))
        if device.orbitals_per_site not in (1, 2):
            add(self._problem(
                'device', 'orbitals_per_site', 'must be 1 or 2'))
        for key in ('hopping_si_ev', 'hopping_ge_ev', 'hopping_sige_ev'):
            if self.materials[key] == 0:
                add(self._problem('materials', key, 'must be nonzero'))
        amplitude = self.roughness.amplitude_layers
        if amplitude > 0 and amplitude >= device.layers:
            add(self._problem(
                'roughness', 'amplitude_layers',
                'must be less than layers ({})'.format(device.layers)))
        grid = self.grid
        if grid.energy_max_ev <= grid.energy_min_ev:
            add(self._problem(
                'grid', 'energy_max_ev', 'must exceed energy_min_ev'))
        if grid.points_per_optical < 1:
            add(self._problem(
                'grid', 'points_per_optical', 'must be at least 1'))
        if grid.momenta < 1:
            add(self._problem('grid', 'momenta', 'must be at least 1'))
        for key in ('born_mixing', 'scf_mixing'):
            if self.solver[key] > 1:
                add(self._problem('solver', key, 'must be within (0, 1]'))
        for key in ('born_max_iterations', 'scf_max_iterations',
                    'lead_max_iterations'):
            if self.solver[key] < 1:
                add(self._problem('solver', key, 'must be at least 1'))
        poisson = self.poisson
        if poisson.gate_start_slab > poisson.gate_end_slab:
            add(self._problem(
                'poisson', 'gate_start_slab',
                'must not exceed gate_end_slab'))
        if poisson.gate_end_slab >= device.n_slabs:
            add(self._problem(
                'poisson', 'gate_end_slab',
                'must be less than n_slabs ({})'.format(device.n_slabs)))
        if self.parallel.workers < 1:
            add(self._problem('parallel', 'workers', 'must be at least 1'))
        return problems

    def validate(self):
        """Raise ConfigurationError listing every problem, if there are any."""
        problems = self.check()
        if len(problems) > 0:
            raise ConfigurationError(problems)


# Define the global configuration object.  We use a proxy here so that
# post-object creation loading will work.

_config = Configuration()

class _Proxy:
    def __getattribute__(self, name):
        return getattr(_config, name)
    def __setattr__(self, name, value):
        setattr(_config, name, value)
    def __delattr__(self, name):
        delattr(_config, name)


config = _Proxy()
