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

from argparse import RawTextHelpFormatter
from .core import ConfigError, CheckpointError, GRADNET_TOOLS_CONFIG_FILE
from . import core, init
import argparse
import sys
import traceback
import pendulum
import logging

log = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class CommandLineParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_USAGE instead of argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        log.error(message)
        sys.exit(EXIT_USAGE)


def common_arguments():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('-c', '--config', action='store',
                        help='config file, merged on top of the defaults (default: {})'.format(GRADNET_TOOLS_CONFIG_FILE))
    parent.add_argument('--seed', type=int, action='store',
                        help='random seed, overrides the config')
    parent.add_argument('-o', '--output', action='store',
                        help='output directory (default: $GRADNET_OUTPUT_ROOT/<command>, or runs/<command>)')
    parent.add_argument('--workers', type=int, action='store',
                        help='number of sequences processed in parallel (default: evaluation.workers)')
    parent.add_argument('-v', '--verbose', action='store_true',
                        help='debug logging')
    return parent


def build_parser(plugins):
    DESC_PLUGINS = '\n'.join('  - {:10} : {}'.format(name, plugin.short_description())
                             for name, plugin in plugins.items())

    DESC_EXAMPLES = """

Examples:
  $ gradnet synth --count 3 -o data/toy               # write 3 synthetic sequences (OTB layout)
  $ gradnet train --variant no_MG --steps 0 -o runs/pretrain
  $ gradnet train --variant ours --init-checkpoint runs/pretrain/checkpoint.ckpt -o runs/ours
  $ gradnet track --checkpoint runs/ours/checkpoint.ckpt data/toy/eval_000
  $ gradnet eval --checkpoint runs/ours/checkpoint.ckpt --plot
  $ gradnet ablate --checkpoint ours=runs/ours/checkpoint.ckpt --checkpoint no_M=runs/no_M/checkpoint.ckpt
  $ gradnet gradcheck --second-order
"""

    DESC = 'following commands are available:\n' + DESC_PLUGINS + DESC_EXAMPLES
    EPILOG = 'You should also look into {} to tune it to your liking.'.format(GRADNET_TOOLS_CONFIG_FILE)

    parser = CommandLineParser(prog='gradnet', description=DESC, epilog=EPILOG,
                               formatter_class=RawTextHelpFormatter)
    subparsers = parser.add_subparsers(dest='command', metavar='command', parser_class=CommandLineParser)
    subparsers.required = True
    parent = common_arguments()
    for name, plugin in plugins.items():
        sub = subparsers.add_parser(name, help=plugin.short_description(), description=plugin.help(),
                                    parents=[parent], formatter_class=RawTextHelpFormatter)
        plugin.add_arguments(sub)
    return parser


def main(argv=None):
    COMMAND_PLUGINS = {name: core.get_plugin('gradnet_tools.commands', name)
                       for name in core.list_valid_plugins('gradnet_tools.commands')}

    parser = build_parser(COMMAND_PLUGINS)
    args = parser.parse_args(argv)
    cmd = COMMAND_PLUGINS[args.command]

    start = pendulum.now('UTC')
    try:
        overrides = cmd.config_overrides(args) if hasattr(cmd, 'config_overrides') else None
        cfg = init(args.config, overrides=overrides)
        if args.verbose:
            logging.getLogger('gradnet_tools').setLevel(logging.DEBUG)
        result = cmd.run_command(args, cfg)

    except (ConfigError, CheckpointError, FileNotFoundError) as e:
        log.error(str(e))
        log.debug(traceback.format_exc())
        return EXIT_USAGE

    except Exception as e:
        log.error('{}: {}'.format(type(e).__name__, e))
        log.debug(traceback.format_exc())
        return EXIT_FAILURE

    elapsed_seconds = (pendulum.now('UTC') - start).total_seconds()
    mins = int(elapsed_seconds // 60)
    secs = elapsed_seconds % 60
    log.debug('Command {} ran in{} {:.1f} secs'.format(args.command, ' %d mins' % mins if mins else '', secs))
    return EXIT_OK if result is None else result