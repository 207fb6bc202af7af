#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# gradnet_tools - Gradient-guided template update for siamese trackers
# Copyright (c) 2019 The gradnet_tools developers
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
#

from setuptools import setup, find_packages
import os, os.path
import subprocess

here = os.path.abspath(os.path.dirname(__file__))
README = open(os.path.join(here, 'README.rst')).read()
HISTORY = open(os.path.join(here, 'HISTORY.rst')).read()

VERSION = '0.1.0'


install_requires = ['torch', 'numpy', 'opencv-python-headless', 'matplotlib', 'tqdm',
                    'ruamel.yaml', 'jinja2', 'pendulum', 'doit']

tests_require = ['pytest']

entry_points = {
    'console_scripts': [
        'gradnet = gradnet_tools.cmdline:main',
    ],
}


args = dict(name='gradnet_tools',
            version=VERSION,
            description='Gradient-guided template update for siamese object trackers',
            long_description=README + '\n\n\n' + HISTORY,
            classifiers=['Development Status :: 3 - Alpha',
                         'License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)',
                         'Operating System :: OS Independent',
                         'Programming Language :: Python :: 3',
                         'Topic :: Scientific/Engineering :: Image Recognition',
                         ],
            keywords='visual object tracking siamese template update meta-learning',
            packages=find_packages(exclude=['tests']),
            package_data={'gradnet_tools': ['config.yaml', 'templates/config/*.yaml']},
            include_package_data=True,
            python_requires='>=3.7',
            install_requires=install_requires,
            tests_require=tests_require,
            extras_require={'dev': tests_require + ['sphinx', 'sphinx_rtd_theme']},
            entry_points=entry_points,
            )

# if we are creating a source tarball, include the version in a text file
version_file = os.path.join(here, 'gradnet_tools', 'version.txt')
create_version_file = not os.path.exists(version_file)

if create_version_file:
    with open(version_file, 'w') as f:
        try:
            p = subprocess.Popen('git describe --tags', shell=True, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
            stdout, stderr = p.communicate()
            f.write(str(stdout, encoding='utf-8').strip() or VERSION)
        except Exception:
            f.write(VERSION)

setup(**args)

if create_version_file:
    try:
        os.remove(version_file)
    except OSError:
        pass
