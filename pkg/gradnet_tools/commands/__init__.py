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

from collections import OrderedDict
from os.path import join
from pathlib import Path
import logging

log = logging.getLogger(__name__)


# declaration of the functions a plugin needs to provide in order to be
# considered as a valid plugin
REQUIRED_FUNCTIONS = ['short_description', 'help', 'add_arguments', 'run_command']


def output_dir(args, command):
    from ..core import output_root
    path = Path(args.output or join(output_root(), command))
    path.mkdir(parents=True, exist_ok=True)
    return path


def require_path(path, what):
    if not Path(path).exists():
        raise FileNotFoundError('{} not found: {}'.format(what, path))
    return path


def parse_assignments(values, what='checkpoint'):
    """['ours=a.ckpt', 'no_M=b.ckpt'] -> OrderedDict(ours='a.ckpt', no_M='b.ckpt')"""
    from ..core import ConfigError
    result = OrderedDict()
    for v in values or []:
        name, sep, path = v.partition('=')
        if not sep or not name or not path:
            raise ConfigError('Invalid {} argument "{}", expected VARIANT=PATH'.format(what, v))
        result[name] = path
    return result


def workers(args, cfg):
    return args.workers if args.workers is not None else cfg.evaluation.workers


def input_sequences(paths, cfg, kind='eval', count=None):
    """Sequences from the given OTB directories, or the synthetic suite of the given kind."""
    from ..data import load_sequences, generate_suite
    if paths:
        sequences = []
        for p in paths:
            sequences.extend(load_sequences(require_path(p, 'Sequence directory')))
        return sequences
    log.info('No sequence given, using the synthetic {} suite'.format(kind))
    return generate_suite(cfg.synthetic, kind, count=count)


def suite_seed_overrides(args, kind='eval'):
    """--seed selects the synthetic suite used when no sequence is given."""
    if args.seed is None:
        return {}
    return {'synthetic': {'suite': {'{}_seed'.format(kind): args.seed}}}
