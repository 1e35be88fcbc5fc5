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

"""Main script entry point."""


__all__ = [
    'main',
    ]


import os
import sys
import logging
import argparse

from dataclasses import replace
from pkg_resources import resource_string as resource_bytes
from utbnegf.config import ConfigurationError, config
from utbnegf.logging import initialize
from utbnegf.simulation import RunSettings
from utbnegf.sweep import (
    Sweep, ensemble_seeds, run_bench, write_ensemble)
from utbnegf.transport import TransportError


__version__ = resource_bytes(
    'utbnegf', 'version.txt').decode('utf-8').strip()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_UNCONVERGED = 3
EXIT_TRANSPORT = 4

VERBS = ('run', 'sweep', 'ensemble', 'validate', 'bench')


def _parser():
    parser = argparse.ArgumentParser(
        prog='utb-negf',
        description='Parallel NEGF simulator for ultra-thin-body transistors')
    parser.add_argument('--version',
                        action='version',
                        version='utb-negf {}'.format(__version__))
    parser.add_argument('verb', choices=VERBS,
                        help="""What to do: solve a single gate voltage,
                                sweep all gate voltages, run a disorder
                                ensemble at the on-state bias, only check the
                                configuration, or run the scaling
                                benchmark""")
    parser.add_argument('-C', '--config',
                        default=None, action='store', metavar='PATH',
                        help="""Read the configuration from this .ini file or
                                config.d directory instead of using the
                                built-in defaults""")
    parser.add_argument('-w', '--workers',
                        default=None, type=int, metavar='N',
                        help="""Number of workers; for the bench verb, the
                                largest worker count""")
    parser.add_argument('-t', '--transport',
                        default=None, choices=('inprocess', 'socket'),
                        help='How workers exchange messages')
    parser.add_argument('-o', '--out',
                        default=None, action='store', metavar='DIR',
                        help='Write all outputs into this directory')
    parser.add_argument('-s', '--seed',
                        default=None, type=int,
                        help="""Alloy seed of single runs and sweeps; base
                                seed of ensembles""")
    parser.add_argument('-g', '--gate',
                        default=None, type=float, metavar='VOLTS',
                        help="""Gate voltage of the run verb (default: the
                                last configured gate voltage)""")
    parser.add_argument('-v', '--verbose',
                        default=0, action='count',
                        help='Increase verbosity')
    return parser


def _settings(args):
    settings = RunSettings.from_config(config)
    overrides = {}
    if args.workers is not None:
        overrides['workers'] = args.workers
    if args.transport is not None:
        overrides['transport'] = args.transport
    if args.seed is not None:
        overrides['base_seed'] = args.seed
    settings = replace(settings, **overrides)
    if args.seed is not None and args.verb != 'ensemble':
        settings = settings.with_seed(args.seed)
    return settings


def _execute(args, settings, out_dir, log):
    timings = config.output.timings
    profile = config.output.profile
    if args.verb == 'bench':
        run_bench(settings, out_dir, settings.workers)
        return EXIT_OK
    seeds = None
    gate_voltages = None
    if args.verb == 'run':
        if args.gate is not None:
            gate_voltages = (args.gate,)
        else:
            gate_voltages = settings.gate_voltages[-1:]
    elif args.verb == 'ensemble':
        samples = settings.samples
        if samples < 1:
            log.error('ensemble needs [ensemble]samples > 0')
            print('No ensemble samples configured', file=sys.stderr)
            return EXIT_CONFIG
        seeds = ensemble_seeds(settings.base_seed, samples)
        gate_voltages = settings.gate_voltages[-1:]
    elif settings.samples > 0:
        seeds = ensemble_seeds(settings.base_seed, settings.samples)
    sweep = Sweep(settings, out_dir, gate_voltages=gate_voltages,
                  seeds=seeds, timings=timings, profile=profile)
    records = sweep.run()
    if args.verb == 'ensemble':
        write_ensemble(records, os.path.join(out_dir, 'ensemble.dat'))
    for record in records:
        print('{0.mode:9} Vg={0.vg:<8g} seed={1:<10} I={0.current:.6e} A/nm '
              '{0.status}'.format(
                  record, '-' if record.sample_seed is None
                  else record.sample_seed))
    if len(sweep.unconverged) > 0:
        print('{} of {} bias points did not converge; see {}'.format(
            len(sweep.unconverged), len(records), out_dir), file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def main():
    parser = _parser()
    args = parser.parse_args(sys.argv[1:])
    if args.workers is not None and args.workers < 1:
        parser.error('--workers must be at least 1: {}'.format(args.workers))
        assert 'parser.error() does not return' # pragma: no cover
    if args.config is not None:
        try:
            config.load(args.config)
        except (TypeError, FileNotFoundError):
            parser.error('\nConfiguration not found: {}'.format(args.config))
            assert 'parser.error() does not return' # pragma: no cover
    problems = config.check()
    if args.verb == 'validate':
        for problem in problems:
            print('{0.file}:{0.line}: [{0.section}]{0.key}: {0.message}'
                  .format(problem))
        if len(problems) > 0:
            return EXIT_CONFIG
        print('Configuration is valid')
        return EXIT_OK
    if len(problems) > 0:
        print(ConfigurationError(problems), file=sys.stderr)
        return EXIT_CONFIG
    # Initialize the loggers.
    initialize(verbosity=args.verbose)
    log = logging.getLogger('utbnegf')
    out_dir = (config.output.directory if args.out is None
               else os.path.abspath(os.path.expanduser(args.out)))
    settings = _settings(args)
    log.info('utb-negf {} {}: {} workers over {}', __version__, args.verb,
             settings.workers, settings.transport)
    try:
        return _execute(args, settings, out_dir, log)
    except KeyboardInterrupt:                       # pragma: no cover
        return EXIT_FAILURE
    except TransportError as error:
        print('Worker communication failed: {}'.format(error),
              file=sys.stderr)
        log.error('transport failure: {}', error)
        return EXIT_TRANSPORT
    except Exception:
        print('Exception occurred during {}; see log file for details'.format(
            args.verb), file=sys.stderr)
        log.exception('utb-negf exception')
        return EXIT_FAILURE
    finally:
        log.info('{} finished', args.verb)


if __name__ == '__main__':                          # pragma: no cover
    sys.exit(main())
