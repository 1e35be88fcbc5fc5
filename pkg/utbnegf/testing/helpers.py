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

"""Test helpers."""

__all__ = [
    'ACCEPTANCE',
    'chain_operator',
    'configuration',
    'data_path',
    'greater_reference_multiplies',
    'random_operator',
    'random_self_energies',
    'small_settings',
    ]


import os
import inspect
import numpy as np

from contextlib import ExitStack
from dataclasses import replace
from functools import partialmethod, wraps
from pkg_resources import resource_filename, resource_string as resource_bytes
from unittest.mock import patch
from utbnegf.config import Configuration
from utbnegf.device import BlockTridiagonalOperator
from utbnegf.helpers import atomic, temporary_directory
from utbnegf.negf import OperationCounter, solve_lesser, solve_retarded
from utbnegf.simulation import RunSettings


# Acceptance-scale checks take minutes; they only run when asked for.
ACCEPTANCE = os.environ.get('UTBNEGF_ACCEPTANCE') == '1'


def data_path(filename):
    return os.path.abspath(
        resource_filename('utbnegf.tests.data', filename))


def _hermitian(rng, rank, scale):
    block = rng.standard_normal((rank, rank)) + 1j * rng.standard_normal(
        (rank, rank))
    return scale * (block + block.conj().T) / 2


def random_operator(ranks, seed=0, scale=1.0, coupling=0.5):
    """A random Hermitian block tridiagonal operator with the given ranks."""
    rng = np.random.default_rng(seed)
    diagonal = [_hermitian(rng, rank, scale) for rank in ranks]
    couplings = [
        coupling * (rng.standard_normal((left, right))
                    + 1j * rng.standard_normal((left, right)))
        for left, right in zip(ranks[:-1], ranks[1:])]
    return BlockTridiagonalOperator(diagonal, couplings)


def chain_operator(n, onsite=0.0, hopping=-1.0):
    """A one-orbital tight-binding chain of n sites, one site per block."""
    diagonal = [np.array([[onsite]], dtype=complex) for i in range(n)]
    couplings = [np.array([[hopping]], dtype=complex) for i in range(n - 1)]
    return BlockTridiagonalOperator(diagonal, couplings)


def random_self_energies(ranks, seed=0, strength=0.1, occupation=0.5):
    """Dissipative Sigma^R blocks and matching Sigma^< = i f Gamma blocks.

    Every block carries Sigma^R = -i strength M M^+, so Im Sigma^R is
    negative definite and the blocked system is never singular.
    """
    rng = np.random.default_rng(seed)
    sigma_R = []
    sigma_lesser = []
    for rank in ranks:
        m = rng.standard_normal((rank, rank)) + 1j * rng.standard_normal(
            (rank, rank))
        positive = m @ m.conj().T / rank + np.eye(rank)
        block = -1j * strength * positive
        gamma = 1j * (block - block.conj().T)
        sigma_R.append(block)
        sigma_lesser.append(1j * occupation * gamma)
    return sigma_R, sigma_lesser


def greater_reference_multiplies(operator, sigma_R, sigma_lesser, energy):
    """Multiplies of the G^R + G^< + G^> formulation that repeats the
    retarded sweep for its greater pass, as memory-bound codes do.
    """
    counter = OperationCounter()
    retarded = solve_retarded(operator, sigma_R, energy, counter=counter)
    solve_lesser(retarded, sigma_lesser, counter)
    sigma_greater = [
        lesser + block - block.conj().T
        for lesser, block in zip(sigma_lesser, sigma_R)]
    retarded = solve_retarded(operator, sigma_R, energy, counter=counter)
    solve_lesser(retarded, sigma_greater, counter)
    return counter.multiplies


def small_settings(**overrides):
    """RunSettings of a six slab device on a coarse grid.

    Keyword arguments replace RunSettings fields.
    """
    settings = RunSettings.from_config(Configuration())
    device = replace(settings.device, n_slabs=6, sites_per_slab=6, layers=3)
    poisson = replace(settings.poisson, gate_start_slab=2, gate_end_slab=3,
                      oxide_layers=1)
    settings = replace(
        settings,
        device=device,
        poisson=poisson,
        points_per_optical=1,
        padding_optical=1,
        momenta=2,
        gate_voltages=(0.0, 0.3),
        born_tolerance=1e-3,
        born_max_iterations=30,
        scf_mixing=0.3,
        scf_tolerance=1e-4,
        scf_max_iterations=40,
        )
    return replace(settings, **overrides)


# This is a decorator for tests that run with a temporary configuration.
#
# The named ini templates from utbnegf.tests.data are interpolated with
# {tmpdir} and {outdir} and written in order into a temporary config.d, and
# the global configuration is patched to read from it.  Test methods that
# take `config` or `config_d` keyword arguments receive them.
def _wrapper(self, function, ini_files, *args, **kws):
    with ExitStack() as resources:
        config_d = resources.enter_context(temporary_directory())
        tmpdir = resources.enter_context(temporary_directory())
        outdir = os.path.join(tmpdir, 'out')
        for serial, ini_file in enumerate(ini_files):
            dst = os.path.join(config_d, '{:02d}_override.ini'.format(serial))
            template = resource_bytes(
                'utbnegf.tests.data', ini_file).decode('utf-8')
            with atomic(dst) as fp:
                print(template.format(tmpdir=tmpdir, outdir=outdir), file=fp)
        config = Configuration(config_d)
        resources.enter_context(patch('utbnegf.config._config', config))
        signature = inspect.signature(function)
        if 'config_d' in signature.parameters:
            kws['config_d'] = config_d
        if 'config' in signature.parameters:
            kws['config'] = config
        return function(self, *args, **kws)


def configuration(*args):
    """Outer decorator which can be called or not at function definition time.

    If called, the positional arguments name the test data .ini files which
    are copied to the config.d directory.  If none are given, 00.ini is used.
    """
    if len(args) == 1 and callable(args[0]):
        # The bare @configuration flavor.
        function = args[0]
        inner = partialmethod(_wrapper, function, ('00.ini',))
        return wraps(function)(inner)
    def decorator(function):
        inner = partialmethod(_wrapper, function, args)
        return wraps(function)(inner)
    return decorator
