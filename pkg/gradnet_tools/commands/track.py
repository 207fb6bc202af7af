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

from . import output_dir, input_sequences, suite_seed_overrides
from ..checkpoint import load_model
from ..tracking import GradNetTracker, write_results
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'track sequences with a trained checkpoint'


def help():
    return """track --checkpoint FILE [--no-update] [--no-gradient-step] [SEQUENCE_DIR...]

Writes <name>.txt (one 1-based x,y,w,h line per frame) and <name>.events.json
(stored samples, template updates, peak scores) per sequence.
Without sequence directories, tracks the synthetic eval suite.
"""


def add_arguments(parser):
    parser.add_argument('sequences', nargs='*', help='sequence directories (OTB layout)')
    parser.add_argument('--checkpoint', required=True, help='trained checkpoint')
    parser.add_argument('--no-update', action='store_true', help='never update the template online')
    parser.add_argument('--no-gradient-step', action='store_true',
                        help='use the plain embedded template, without the gradient update')


def config_overrides(args):
    return suite_seed_overrides(args) or None


def run_command(args, cfg):
    model = load_model(args.checkpoint)
    tracker = GradNetTracker(model, cfg.tracking,
                             online_update=False if args.no_update else None,
                             gradient_step=False if args.no_gradient_step else None)
    out = output_dir(args, 'track')
    for seq in input_sequences(args.sequences, cfg):
        result = tracker.track(seq)
        filename = write_results(result, out)
        n_updates = sum(1 for e in result.events if e['event'] == 'update')
        log.info('Sequence {}: {} frames, {} template updates -> {}'.format(seq.name, len(seq), n_updates, filename))
