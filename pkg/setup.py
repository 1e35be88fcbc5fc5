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

from setuptools import find_packages, setup

with open('utbnegf/version.txt') as fp:
    __version__ = fp.read().strip()


setup(
    name='utb-negf',
    version=__version__,
    description='Worker-parallel NEGF transport for ultra-thin-body FETs',
    author='The utb-negf developers',
    license='GNU GPLv3',
    packages=find_packages(),
    include_package_data=True,
    package_data={
        'utbnegf': ['version.txt'],
        'utbnegf.tests.data': ['*.ini'],
        },
    entry_points={
        'console_scripts': [
            'utb-negf = utbnegf.main:main',
            ],
    },
    install_requires = [
        'numpy',
        'psutil',
        'pyxdg',
        'scipy',
        ],
    tests_require = [
        'nose2',
        ],
    test_suite = 'nose2.collector.collector',
    )
