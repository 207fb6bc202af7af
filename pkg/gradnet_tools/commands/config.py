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

from ..core import yaml_dump, install_default_config
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'show the effective config, or install a user config file'


def help():
    return """config [--install]

Prints the config obtained by merging the given (or user) config file on top of
the defaults. With --install, copies a commented config.yaml into ~/.gradnet_tools
(or $GRADNET_TOOLS_HOMEDIR) if there is none yet.
"""


def add_arguments(parser):
    parser.add_argument('--install', action='store_true', help='install the user config file')


def run_command(args, cfg):
    if args.install:
        filename = install_default_config()
        print(filename)
        return
    print(yaml_dump(cfg), end='')
