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

from . import output_dir, suite_seed_overrides
from ..data import generate_sequence, generate_suite, export_sequence
from tqdm import tqdm
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'generate synthetic sequences in the OTB layout'


def help():
    return """synth [--count N] [--kind train|eval|heldout] [--scene]

Writes one directory per sequence (img/0001.png..., groundtruth_rect.txt, meta.yaml).
With --scene, a single sequence is rendered from the synthetic.scene config section
as is, otherwise sequences are drawn from the randomized suite (synthetic.suite).
"""


def add_arguments(parser):
    parser.add_argument('--count', type=int, help='number of sequences (default: synthetic.suite.<kind>_count)')
    parser.add_argument('--kind', choices=['train', 'eval', 'heldout'], default='eval',
                        help='which suite to draw from (default: eval)')
    parser.add_argument('--scene', action='store_true',
                        help='render the single scene described by synthetic.scene')


def config_overrides(args):
    if args.seed is None:
        return None
    if args.scene:
        return {'synthetic': {'scene': {'seed': args.seed}}}
    return suite_seed_overrides(args, args.kind)


def run_command(args, cfg):
    out = output_dir(args, 'synth')
    if args.scene:
        sequences = [generate_sequence(cfg.synthetic.scene, name='scene_{}'.format(cfg.synthetic.scene.seed))]
    else:
        sequences = generate_suite(cfg.synthetic, args.kind, count=args.count)

    for seq in tqdm(sequences, desc='export'):
        export_sequence(seq, out / seq.name)
    log.info('Wrote {} sequences to {}'.format(len(sequences), out))
